#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <vector>

#include "rdm/hamiltonian.hpp"

namespace rdm {

// closed interval [lo, hi]
struct EnergyWindow {
    double lo = 0.0;
    double hi = 0.0;
};

enum class VectorMode { all, sites, none };

struct EigenOptions {
    std::optional<EnergyWindow> window;
    VectorMode vectors = VectorMode::all;
    std::vector<int> sites;  // absolute coordinates, used with VectorMode::sites
    int threads = 1;
    // consecutive eigenvalues closer than this (times the norm bound) get their
    // vectors recomputed together and re-orthogonalized
    double cluster_gap = 1e-6;
};

struct SpectralDiagnostics {
    double norm = 0.0;
    double max_residual = 0.0;  // exact for VectorMode::all, estimated otherwise
    double min_gap = 0.0;       // smallest gap between returned consecutive eigenvalues
    int clusters = 0;
    int largest_cluster = 0;
    int near_degenerate = 0;    // consecutive pairs within 1e-14 * norm
    int bisection_steps = 0;    // safeguard steps taken during refinement
};

class SpectralData {
public:
    SpectralData() = default;
    SpectralData(int L, int first_index, std::vector<double> eigenvalues, std::vector<int> sites,
                 Eigen::MatrixXd vectors, std::vector<double> residuals, SpectralDiagnostics diag);

    int L() const { return L_; }
    int box_size() const { return 2 * L_; }
    int count() const { return static_cast<int>(eigenvalues_.size()); }
    // global (ascending) index of eigenvalues()[0] within the whole spectrum
    int first_index() const { return first_index_; }
    bool complete() const { return first_index_ == 0 && count() == box_size(); }

    const std::vector<double>& eigenvalues() const { return eigenvalues_; }
    double eigenvalue(int j) const { return eigenvalues_[static_cast<std::size_t>(j)]; }

    bool has_vectors() const { return vectors_.cols() > 0; }
    bool has_site(int x) const;
    // psi_j(x); the two sites just outside the box give 0
    double component(int j, int x) const;
    // rows follow sites() (all box sites in ascending order for full storage)
    const Eigen::MatrixXd& vectors() const { return vectors_; }
    const std::vector<int>& sites() const { return sites_; }
    const std::vector<double>& residuals() const { return residuals_; }
    const SpectralDiagnostics& diagnostics() const { return diag_; }

    // number of returned eigenvalues strictly below E
    int count_below(double E) const;

private:
    int L_ = 0;
    int first_index_ = 0;
    std::vector<double> eigenvalues_;
    std::vector<int> sites_;
    std::vector<int> row_of_site_;  // index by x + L, -1 if untracked
    Eigen::MatrixXd vectors_;
    std::vector<double> residuals_;
    SpectralDiagnostics diag_;
};

SpectralData eigensystem(const TridiagonalOperator& op, const EigenOptions& options);
SpectralData eigensystem(const TridiagonalOperator& op, std::optional<EnergyWindow> window = std::nullopt);

// Sturm count of eigenvalues below E
int eigenvalue_count_below(const TridiagonalOperator& op, double E);
// several shifts at once (vectorized across shifts)
std::vector<int> eigenvalue_counts_below(const TridiagonalOperator& op, const std::vector<double>& E);

// ||H psi - E psi|| per returned pair (needs full vectors)
std::vector<double> residual_norms(const TridiagonalOperator& op, const SpectralData& spec);
// max |<psi_i, psi_j> - delta_ij|
double orthogonality_defect(const SpectralData& spec);

// CSV dump "index,eigenvalue,residual"
void write_residual_csv(std::ostream& os, const SpectralData& spec);

}  // namespace rdm
