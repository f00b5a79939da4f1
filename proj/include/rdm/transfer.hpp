#pragma once

#include <Eigen/Dense>
#include <complex>
#include <iosfwd>
#include <vector>

#include "rdm/disorder.hpp"
#include "rdm/hamiltonian.hpp"

namespace rdm {

using cplx = std::complex<double>;

// [[vV-E, -1], [1, 0]]
Eigen::Matrix2d single_step(int V, double E, double v);

// W(E; y, x) = W_{V(y-1)} ... W_{V(x)}, identity for x == y; needs -L <= x <= y <= L
Eigen::Matrix2d multi_step(const PotentialConfig& config, double v, double E, int x, int y);

// same product kept as matrix * exp(log_scale) so long boxes do not overflow
struct ScaledMatrix2 {
    Eigen::Matrix2d m = Eigen::Matrix2d::Identity();
    double log_scale = 0.0;
    double log_norm() const;  // ln of the operator norm
};
ScaledMatrix2 multi_step_scaled(const PotentialConfig& config, double v, double E, int x, int y);

// operator norm of a real or complex 2x2 matrix
double norm2x2(const Eigen::Matrix2d& A);
double norm2x2(const Eigen::Matrix2cd& A);

// M_v = m_v [[lambda-bar, lambda], [1, 1]], lambda = (v + i sqrt(4-v^2))/2, |det M_v| = 1
Eigen::Matrix2cd basis_change(double v);

// M_v^{-1} W_V(E)^2 M_v = [[conj(a), b], [conj(b), a]]
struct DimerTransfer {
    cplx a, b;
    Eigen::Matrix2cd matrix() const;
};
DimerTransfer dimer_similarity(int V, double E, double v);

// T e_theta = rho e_Theta with e_theta = (e^{-i theta}, e^{i theta}) / sqrt(2), Theta in [0, 2 pi)
struct RhoTheta {
    double rho;
    double Theta;
};
RhoTheta rho_theta(const DimerTransfer& t, double theta);
RhoTheta rho_theta(int V, double E, double v, double theta);
// 1 + 2|b|^2 + 2 Re(a b e^{2 i theta})
double rho_squared_formula(const DimerTransfer& t, double theta);

// |W(E; x, -L) w| rebuilt from the dimer angle iteration (rho products) instead of
// direct matrix products; returns the logarithm. Needs dimers on (2k, 2k+1).
double iterate_log_norm(const PotentialConfig& config, double v, double E, int x, const Eigen::Vector2d& w);

// Shooting solution of the difference equation with phi(-L-1) = 0, phi(-L) > 0,
// normalized on the box, and its Prufer coordinates
//   (phi(x), phi(x-1)) = r_x (cos theta_x, sin theta_x),  x = -L..L.
// theta is lifted: theta_{-L} = 0 and continuous in x and E.
class PruferTrajectory {
public:
    PruferTrajectory() = default;

    int L() const { return L_; }
    double energy() const { return E_; }
    double phi(int x) const;        // x in [-L-1, L]
    double r(int x) const;          // x in [-L, L], may underflow to 0
    double log_r(int x) const;
    double theta(int x) const;
    // ln sum_{y=-L}^{x-1} phi(y)^2 (-inf for x = -L)
    double log_mass_below(int x) const;

    friend PruferTrajectory solve_shooting(const std::vector<double>& diag, double E);

private:
    int L_ = 0;
    double E_ = 0.0;
    std::vector<double> phi_;       // index x + L + 1
    std::vector<double> log_r_;     // index x + L
    std::vector<double> theta_;     // index x + L
    std::vector<double> log_mass_;  // index x + L
};

// diag is the operator diagonal on the box (length 2L)
PruferTrajectory solve_shooting(const std::vector<double>& diag, double E);
PruferTrajectory solve_shooting(const PotentialConfig& config, const DisorderParams& params, double E);

// d theta_l / dE = r_l^{-2} sum_{x=-L}^{l-1} phi(x)^2
double prufer_angle_derivative(const PruferTrajectory& traj, int l);

// lifted theta at site x only, O(x + L) and no storage
double prufer_angle(const std::vector<double>& diag, double E, int x);
// lifted Prufer angles theta_x, x = -L..L, of a given function on {-L-1..L}
// (values[0] is the site -L-1); used for eigenfunctions, where forward shooting
// at a rounded eigenvalue is hopeless for strongly localized states
std::vector<double> prufer_angles_of(const std::vector<double>& values);
// eigenvalues strictly below E from floor(theta_L / pi + 1/2)
int prufer_count(const std::vector<double>& diag, double E);

// 4 ln||M_v|| + 4 max_{E in [-v,v], V} ln||W_V(E)|| (grid of 10^4 energies plus a Lipschitz margin)
double cv_constant(double v);
// C = exp(6 c_v)
double flatness_constant(double v);

struct PerturbationBound {
    double G;           // max_{x<y in box} ||W(E; y, x)||
    double half_width;  // G^2 (exp(4 L |eps| G) - 1)
};
PerturbationBound energy_perturbation_bound(const PotentialConfig& config, double v, double E, double eps);

// CSV "x,phi,r,theta"
void write_trajectory_csv(std::ostream& os, const PruferTrajectory& traj);

}  // namespace rdm
