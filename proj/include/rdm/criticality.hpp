#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rdm/disorder.hpp"
#include "rdm/eigensystem.hpp"
#include "rdm/entropy.hpp"
#include "rdm/hamiltonian.hpp"

namespace rdm {

constexpr double kDefaultAlpha = 1.0 / 12.0;

// [E_c - L^{-1/2-alpha}, E_c + L^{-1/2-alpha}] around a critical energy E_c in {0, v}
struct CriticalWindow {
    double E_c = 0.0;
    double alpha = kDefaultAlpha;
    int L = 0;
    double v = 0.0;
    double half_width() const;
    EnergyWindow energies() const;
    bool contains(double E) const;
    // the window stays clear of the other critical energy (always true for v = 0)
    bool separated() const;
};
// ParameterError unless E_c is 0 or v, alpha > 0, L >= 1
CriticalWindow make_window(double v, double E_c, int L, double alpha = kDefaultAlpha);

// L (psi(x-1)^2 + psi(x)^2) over x = -L+1..L-1 for a normalized psi on the box
struct FlatnessProfile {
    double min = 0.0;
    double max = 0.0;
    double ratio = 0.0;  // max / min
    double C = 0.0;      // max(max, 1/min)
};
FlatnessProfile flatness_profile(const std::vector<double>& psi, int L);
// column j of a spectrum with full vectors
FlatnessProfile flatness_profile(const SpectralData& spec, int j);

// pass bars for the exceptional-event proxy; the library has no defaults for them
struct WindowCaps {
    double spacing_ratio = 0.0;  // max/min spacing allowed
    double flatness_C = 0.0;     // largest C allowed
};

struct WindowStats {
    CriticalWindow window;
    std::vector<double> eigenvalues;  // in the window, ascending
    std::vector<double> spacings;
    double spacing_ratio = 0.0;       // max/min, 0 with fewer than two spacings
    double median_spacing = 0.0;
    double median_factor = 0.0;       // max over spacings of max(s/med, med/s)
    double C_spacing = 0.0;           // smallest C with every spacing in [pi/(C^3 L), pi C^3/L]
    std::vector<FlatnessProfile> flatness;  // per eigenvalue, empty without full vectors
    double C_emp = 0.0;               // max of flatness C over the window
    bool spacing_flag = false;        // spacing_ratio above the cap
    bool flatness_flag = false;       // C_emp above the cap
    bool bad() const { return spacing_flag || flatness_flag; }
};
// eigenvalues of spec inside the window (spec may itself be windowed)
WindowStats window_spacings(const SpectralData& spec, const CriticalWindow& win, const WindowCaps& caps);
// solve op on the window with full vectors, then the above
WindowStats analyze_window(const TridiagonalOperator& op, const CriticalWindow& win, const WindowCaps& caps);

// (E[count(E+eps)] - E[count(E-eps)]) / (2 eps |box|), eps = L^{-1/2-alpha}
struct DosEstimate {
    double E = 0.0;
    double eps = 0.0;
    int L = 0;
    int samples = 0;
    double density = 0.0;            // plain box
    double density_dirichlet = 0.0;
    double density_neumann = 0.0;
    double lo = 0.0;                 // density -/+ 4 / (2 eps |box|), the rank-2 correction
    double hi = 0.0;
    int max_rank_deviation = 0;      // max |count_{D/N} - count| over samples and both energies
    int max_dn_gap = 0;              // max |count_D - count_N|
    bool bracketing_holds = true;    // deviation <= 2 and gap <= 4
};
DosEstimate dos_estimate(const DisorderParams& params, double E, int L, int samples, double alpha = kDefaultAlpha);

// |count_{D/N}(E) - count(E)| over a list of energies for one configuration
int rank_deviation(const PotentialConfig& config, const DisorderParams& params, const std::vector<double>& energies);

// [L1, L2 - 1] with L1 = -L + floor(gamma L), L2 = -L + floor((gamma + delta) L);
// DegenerateRegionError when empty, ParameterError outside 0 <= gamma, 0 < delta, gamma + delta < 2
Region box_position(int L, double gamma, double delta);

// one side of an antinode partition
struct Antinode {
    std::vector<int> indices;    // labels j, consecutive
    std::vector<int> hull_good;
    std::vector<int> good;
    bool interior = false;       // neither the first nor the last antinode
};

// Beats for a fixed k in J_<. Labels count eigenvalues from the Fermi energy E_F = E_c:
// E_{-1} < E_F <= E_0. z+- = {[th_L2(E_j) - th_L2(E_k)] +- [th_L1(E_j) - th_L1(E_k)]} / 2.
// When A touches the left edge (gamma = 0) only sin(2 z-) enters: antinodes follow its sign
// changes and good = hull-good = |sin 2z-| >= 2^{-1/2}.
struct BeatAnalysis {
    bool sufficient = false;     // |J_>=| >= 2
    bool boundary_variant = false;
    int k = 0;
    Region A;
    std::vector<int> J_lt;       // labels
    std::vector<int> J_ge;
    std::vector<double> energies_ge;  // E_j over J_ge
    std::vector<double> z_plus;  // over J_ge
    std::vector<double> z_minus;
    std::vector<int> sign_changes;  // Z^-
    std::vector<Antinode> antinodes;
    int good_count() const;
    int hull_good_count() const;
};

// lifted Prufer angles theta_x(E) at two sites by shooting from the left edge (theta_{-L} = 0)
struct EdgeAngles {
    double theta1 = 0.0;
    double theta2 = 0.0;
};
EdgeAngles edge_angles(const std::vector<double>& diag, double E, int x1, int x2);

// spec: a (windowed) spectrum of op containing the window; op must have plain boundary.
// k must lie in J_< (ContractError otherwise).
BeatAnalysis beat_analysis(const TridiagonalOperator& op, const SpectralData& spec, const CriticalWindow& win,
                           const Region& A, int k);
// J_< (labels) of a spectrum containing the window
std::vector<int> lower_labels(const SpectralData& spec, const CriticalWindow& win);

struct GoodIndexParams {
    double C = 0.0;
    double gamma = 0.0;
    double delta = 0.0;
};
struct GoodIndexReport {
    bool hypotheses_met = false;
    std::string reason;          // which hypothesis failed
    double bound = 0.0;          // 1/(2^5 C^18 delta), or floor(pi/(2b)) with b = delta pi C^6 / 2 at gamma = 0
    std::vector<int> counts;     // good indices per antinode
    std::vector<bool> interior;
    int total = 0;
    int interior_checked = 0;
    bool holds = true;           // every interior count >= bound (only meaningful with hypotheses_met)
};
GoodIndexReport good_index_density(const BeatAnalysis& beat, const GoodIndexParams& params);

// smallest gamma with C < 1 + gamma^2 (boundary value sqrt(C - 1); the inequality is strict)
double smallest_gamma_for(double C);

}  // namespace rdm
