#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "rdm/disorder.hpp"
#include "rdm/eigensystem.hpp"
#include "rdm/transfer.hpp"

namespace rdm {

// discrete interval [x1, x2]; x2 = x1 - 1 is the empty region
struct Region {
    int x1 = 0;
    int x2 = -1;
    int size() const { return x2 >= x1 ? x2 - x1 + 1 : 0; }
    bool empty() const { return x2 < x1; }
    bool contains(int x) const { return x >= x1 && x <= x2; }
};

Region make_region(int x1, int x2);
// |A symmetric-difference B|
int symmetric_difference(const Region& a, const Region& b);

// occupations may leave [0,1] by rounding; beyond this slack they are an error
constexpr double kOccupationSlack = 1e-10;

// -l log2 l - (1-l) log2(1-l), 0 at the endpoints
double binary_entropy(double lambda);
// 4 l (1 - l)
double quadratic_entropy_fn(double lambda);
// clamp into [0,1]; NumericalError beyond the slack
double clamp_occupation(double lambda);
// the two functions above reject arguments outside [-slack, 1+slack] with DomainError

struct EntropyResult {
    double S = 0.0;  // bits
    double Q = 0.0;
    std::vector<double> occupations;  // ascending, clamped (empty for the boundary route)
    double min_occupation = 0.0;      // before clamping
    double max_occupation = 0.0;
    int L = 0;
    double E_F = 0.0;
    Region region;
    std::uint64_t sample_index = 0;
    bool fermi_tie = false;  // an eigenvalue within 1e-14 of E_F
};

// number of eigenvalues strictly below E_F, and whether one sits within 1e-14 of it
struct FermiSplit {
    int filled = 0;
    bool tie = false;
};
FermiSplit fermi_split(const SpectralData& spec, double E_F);

// M(x,y) = sum_{E_j < E_F} psi_j(x) psi_j(y) on A (needs a complete spectrum and vectors on A)
Eigen::MatrixXd correlation_matrix(const SpectralData& spec, const Region& A, double E_F);
// same with occupation weights w_j
Eigen::MatrixXd weighted_correlation_matrix(const SpectralData& spec, const Region& A, const std::vector<double>& w);

// S and Q from the spectrum of a correlation matrix
EntropyResult entropy_of_correlation(const Eigen::MatrixXd& M);

EntropyResult entanglement_entropy(const SpectralData& spec, const Region& A, double E_F);

// <psi_j, [H, 1_A] psi_k>; only the four sites x1-1, x1, x2, x2+1 enter
double commutator_element(const SpectralData& spec, const Region& A, int j, int k);
// the same from two shooting solutions; both must satisfy phi(L) = 0 to 1e-6 (ContractError otherwise)
double commutator_element_prufer(const PruferTrajectory& a, const PruferTrajectory& b, const Region& A);

// 4 sum_{E_j < E_F <= E_k} <psi_j,[H,1_A]psi_k>^2 / (E_k - E_j)^2
double quadratic_entropy_commutator(const SpectralData& spec, const Region& A, double E_F);

// S and Q from the four boundary components of every eigenvector (sites mode is enough).
// The occupied/empty block of 1_A is c_jk / (E_j - E_k) with a rank-4 numerator; its singular
// values s satisfy s^2 = l (1 - l) for the occupations l of A. 1/(E_k - E_j) is expanded in
// exponentials (trapezoid rule in log t), so the block factors through a thin QR on each side.
EntropyResult boundary_entropy(const SpectralData& spec, const Region& A, double E_F);

// 1 / (1 + exp((E - E_F) / T))
double fermi_dirac(double E, double E_F, double T);
EntropyResult fermi_dirac_entropy(const SpectralData& spec, const Region& A, double E_F, double T);

// |Q(A) - Q(A')| against 4 |A symmetric-difference A'|
struct RegionStability {
    double difference = 0.0;
    int bound = 0;  // 4 |A sym A'| (the inequality is difference <= bound)
    bool holds = true;
};
RegionStability region_stability(const SpectralData& spec, const Region& A, const Region& B, double E_F);

// Q on the box and on a larger box carrying the same disorder, and ||1_A (P_pad - P_L) 1_A||_1
struct PaddedComparison {
    double Q_L = 0.0;
    double Q_pad = 0.0;
    double S_L = 0.0;
    double S_pad = 0.0;
    double trace_norm_diff = 0.0;
    bool krein_holds = true;  // |Q_pad - Q_L| <= 4 trace_norm_diff
};
PaddedComparison finite_vs_padded(const PotentialConfig& small, const PotentialConfig& big,
                                  const DisorderParams& params, const Region& A, double E_F);

// regions up to this size use the dense correlation matrix, larger ones the boundary route
constexpr int kDenseRegionMax = 256;
// solve op (vectors only where needed) and return the entropy of A
EntropyResult region_entropy(const TridiagonalOperator& op, const Region& A, double E_F);

// Entropy of A for the infinite chain, approximated on boxes of half-width L0, 2 L0, 4 L0, ...
// until consecutive values differ by less than tol or the cap is reached.
struct PaddedEntropy {
    double S = 0.0;
    double Q = 0.0;
    int L_used = 0;
    double residual = 0.0;  // |S(last) - S(previous)|
    bool converged = false;
    int steps = 0;
};
PaddedEntropy padded_entropy(const DisorderParams& params, std::uint64_t sample_index, const Region& A, double E_F,
                             double tol, int L_start, int L_cap);

}  // namespace rdm
