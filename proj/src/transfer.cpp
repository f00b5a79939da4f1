#include "rdm/transfer.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "rdm/error.hpp"
#include "rdm/format.hpp"

namespace rdm {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kBig = 1e150;
constexpr double kSmall = 1e-150;

void check_v(double v) {
    if (!(v > 0.0 && v < 2.0)) throw ParameterError("v=" + std::to_string(v) + " outside (0,2)");
}

double logaddexp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::fabs(a - b)));
}

// ||W_V(E)|| with a = vV - E
double step_norm(double a) {
    const double s = a * a + 2.0;
    return std::sqrt(0.5 * (s + std::sqrt(s * s - 4.0)));
}

void check_sites(const PotentialConfig& c, int x, int y) {
    if (x < -c.L || y > c.L || x > y) {
        throw RangeError("need -L <= x <= y <= L, got x=" + std::to_string(x) + " y=" + std::to_string(y) +
                         " L=" + std::to_string(c.L));
    }
}

std::vector<double> diagonal_of(const PotentialConfig& config, const DisorderParams& params) {
    std::vector<double> d(config.values.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = params.v * config.values[i];
    return d;
}

// lifted angle bookkeeping: theta = k pi + beta, beta in (-pi/2, pi/2]
struct Lift {
    long k = 0;
    double beta = 0.0;
    double value() const { return static_cast<double>(k) * kPi + beta; }
    // next angle from the new pair (phi(x+1), phi(x))
    // branch on signs; atan2 + pi loses the branch when cur/next is below rounding
    void advance(double next, double cur) {
        if (next == 0.0) {
            beta = 0.5 * kPi;
            return;
        }
        const double t = std::atan2(std::fabs(cur), std::fabs(next));
        if (cur == 0.0 || std::signbit(cur) != std::signbit(next)) {
            ++k;
            beta = -t;
        } else {
            beta = t;
        }
    }
};

}  // namespace

Eigen::Matrix2d single_step(int V, double E, double v) {
    Eigen::Matrix2d W;
    W << v * V - E, -1.0, 1.0, 0.0;
    return W;
}

Eigen::Matrix2d multi_step(const PotentialConfig& config, double v, double E, int x, int y) {
    check_sites(config, x, y);
    Eigen::Matrix2d M = Eigen::Matrix2d::Identity();
    for (int s = x; s < y; ++s) M = (single_step(config.at(s), E, v) * M).eval();
    if (!M.allFinite()) throw NumericalError("transfer product overflowed; use multi_step_scaled");
    return M;
}

double ScaledMatrix2::log_norm() const { return log_scale + std::log(norm2x2(m)); }

ScaledMatrix2 multi_step_scaled(const PotentialConfig& config, double v, double E, int x, int y) {
    check_sites(config, x, y);
    ScaledMatrix2 out;
    for (int s = x; s < y; ++s) {
        out.m = (single_step(config.at(s), E, v) * out.m).eval();
        const double mx = out.m.cwiseAbs().maxCoeff();
        if (mx > kBig || mx < kSmall) {
            out.m /= mx;
            out.log_scale += std::log(mx);
        }
    }
    return out;
}

// scaled by the largest entry so f*f cannot overflow
double norm2x2(const Eigen::Matrix2d& A) {
    const double s = A.cwiseAbs().maxCoeff();
    if (s == 0.0) return 0.0;
    const Eigen::Matrix2d B = A / s;
    const double f = B.squaredNorm();
    const double d = std::fabs(B.determinant());
    return s * std::sqrt(0.5 * (f + std::sqrt(std::max(0.0, f * f - 4.0 * d * d))));
}

double norm2x2(const Eigen::Matrix2cd& A) {
    const double s = A.cwiseAbs().maxCoeff();
    if (s == 0.0) return 0.0;
    const Eigen::Matrix2cd B = A / s;
    const double f = B.squaredNorm();
    const double d = std::abs(B.determinant());
    return s * std::sqrt(0.5 * (f + std::sqrt(std::max(0.0, f * f - 4.0 * d * d))));
}

Eigen::Matrix2cd basis_change(double v) {
    check_v(v);
    const double s = std::sqrt(4.0 - v * v);
    const cplx lam(0.5 * v, 0.5 * s);
    const double m = std::pow(4.0 - v * v, -0.25);
    Eigen::Matrix2cd M;
    M << m * std::conj(lam), m * lam, m, m;
    return M;
}

Eigen::Matrix2cd DimerTransfer::matrix() const {
    Eigen::Matrix2cd T;
    T << std::conj(a), b, std::conj(b), a;
    return T;
}

DimerTransfer dimer_similarity(int V, double E, double v) {
    const Eigen::Matrix2cd M = basis_change(v);
    const Eigen::Matrix2d W = single_step(V, E, v);
    const Eigen::Matrix2cd D = (W * W).cast<cplx>();
    const Eigen::Matrix2cd T = M.inverse() * D * M;
    DimerTransfer t{T(1, 1), T(0, 1)};
    const double tol = 1e-12 * std::max(1.0, T.cwiseAbs().maxCoeff());
    if (std::abs(T(0, 0) - std::conj(t.a)) > tol || std::abs(T(1, 0) - std::conj(t.b)) > tol) {
        throw ContractError("dimer transfer matrix lost its [[conj a, b], [conj b, a]] form");
    }
    return t;
}

RhoTheta rho_theta(const DimerTransfer& t, double theta) {
    const cplx z = std::conj(t.a) * std::polar(1.0, -theta) + t.b * std::polar(1.0, theta);
    double Th = -std::arg(z);
    Th = std::fmod(Th, 2.0 * kPi);
    if (Th < 0.0) Th += 2.0 * kPi;
    if (Th >= 2.0 * kPi) Th = 0.0;
    return {std::abs(z), Th};
}

RhoTheta rho_theta(int V, double E, double v, double theta) { return rho_theta(dimer_similarity(V, E, v), theta); }

double rho_squared_formula(const DimerTransfer& t, double theta) {
    return 1.0 + 2.0 * std::norm(t.b) + 2.0 * std::real(t.a * t.b * std::polar(1.0, 2.0 * theta));
}

double iterate_log_norm(const PotentialConfig& config, double v, double E, int x, const Eigen::Vector2d& w) {
    const int L = config.L;
    auto floor_half = [](int n) { return n >= 0 ? n / 2 : -((-n + 1) / 2); };
    const int k0 = -floor_half(L);
    const int k1 = floor_half(x);
    if (x > L || k1 < k0) throw RangeError("site " + std::to_string(x) + " outside the dimer range of the box");
    for (int k = k0; k < k1; ++k) {
        if (config.at(2 * k) != config.at(2 * k + 1)) {
            throw ContractError("dimer iteration needs V(2k) = V(2k+1)");
        }
    }
    const Eigen::Matrix2cd M = basis_change(v);
    const DimerTransfer t[2] = {dimer_similarity(0, E, v), dimer_similarity(1, E, v)};

    const Eigen::Vector2d w0 = multi_step(config, v, E, -L, 2 * k0) * w;
    const Eigen::Vector2cd u = M.inverse() * w0.cast<cplx>();
    double lg = std::log(u.norm());
    double th = std::fmod(-std::arg(u(0)) + 2.0 * kPi, 2.0 * kPi);
    for (int k = k0; k < k1; ++k) {
        const RhoTheta rt = rho_theta(t[config.at(2 * k)], th);
        lg += std::log(rt.rho);
        th = rt.Theta;
    }
    Eigen::Vector2cd e;
    e << std::polar(1.0, -th) / std::sqrt(2.0), std::polar(1.0, th) / std::sqrt(2.0);
    const Eigen::Vector2cd tail = multi_step(config, v, E, 2 * k1, x).cast<cplx>() * (M * e);
    return lg + std::log(tail.norm());
}

// ---------------------------------------------------------------- Prufer

double PruferTrajectory::phi(int x) const {
    if (x < -L_ - 1 || x > L_) throw RangeError("phi(" + std::to_string(x) + ") outside [-L-1, L]");
    return phi_[static_cast<std::size_t>(x + L_ + 1)];
}

double PruferTrajectory::log_r(int x) const {
    if (x < -L_ || x > L_) throw RangeError("r(" + std::to_string(x) + ") outside [-L, L]");
    return log_r_[static_cast<std::size_t>(x + L_)];
}

double PruferTrajectory::r(int x) const { return std::exp(log_r(x)); }

double PruferTrajectory::theta(int x) const {
    if (x < -L_ || x > L_) throw RangeError("theta(" + std::to_string(x) + ") outside [-L, L]");
    return theta_[static_cast<std::size_t>(x + L_)];
}

double PruferTrajectory::log_mass_below(int x) const {
    if (x < -L_ || x > L_) throw RangeError("site " + std::to_string(x) + " outside [-L, L]");
    return log_mass_[static_cast<std::size_t>(x + L_)];
}

PruferTrajectory solve_shooting(const std::vector<double>& diag, double E) {
    if (diag.size() < 2 || diag.size() % 2) throw StructuralError("diagonal length must be 2L >= 2");
    const int n = static_cast<int>(diag.size());
    const int L = n / 2;
    const double ninf = -std::numeric_limits<double>::infinity();
    PruferTrajectory t;
    t.L_ = L;
    t.E_ = E;
    t.phi_.assign(static_cast<std::size_t>(n + 2), 0.0);
    t.log_r_.assign(static_cast<std::size_t>(n + 1), 0.0);
    t.theta_.assign(static_cast<std::size_t>(n + 1), 0.0);
    t.log_mass_.assign(static_cast<std::size_t>(n + 1), ninf);
    std::vector<double> scale(static_cast<std::size_t>(n + 2), 0.0);  // log-scale of each stored phi

    double p = 1.0, q = 0.0, ls = 0.0;
    Lift lift;
    t.phi_[1] = p;
    for (int i = 0; i <= n; ++i) {  // i = x + L
        t.log_r_[i] = ls + std::log(std::hypot(p, q));
        t.theta_[i] = lift.value();
        if (i == n) break;
        t.log_mass_[i + 1] = logaddexp(t.log_mass_[i], p == 0.0 ? ninf : 2.0 * (ls + std::log(std::fabs(p))));
        const double nx = (diag[i] - E) * p - q;
        lift.advance(nx, p);
        q = p;
        p = nx;
        const double h = std::hypot(p, q);
        if (!(h > 0.0) || !std::isfinite(h)) throw NumericalError("shooting recursion broke down");
        if (h > kBig || h < kSmall) {
            p /= h;
            q /= h;
            ls += std::log(h);
        }
        t.phi_[i + 2] = p;
        scale[i + 2] = ls;
    }
    const double lnorm2 = t.log_mass_[n];
    for (int i = 1; i < n + 2; ++i) t.phi_[i] *= std::exp(scale[i] - 0.5 * lnorm2);
    for (auto& x : t.log_r_) x -= 0.5 * lnorm2;
    for (auto& x : t.log_mass_) x -= lnorm2;
    return t;
}

PruferTrajectory solve_shooting(const PotentialConfig& config, const DisorderParams& params, double E) {
    params.validate();
    if (config.size() != 2 * config.L) throw StructuralError("config length must be 2L");
    return solve_shooting(diagonal_of(config, params), E);
}

double prufer_angle_derivative(const PruferTrajectory& traj, int l) {
    if (l == -traj.L()) return 0.0;
    const double lr = traj.log_r(l);
    if (!std::isfinite(lr)) throw DomainError("Prufer radius vanishes at site " + std::to_string(l));
    return std::exp(traj.log_mass_below(l) - 2.0 * lr);
}

namespace {

Lift angle_at(const std::vector<double>& diag, double E, int steps) {
    double p = 1.0, q = 0.0;
    Lift lift;
    for (int i = 0; i < steps; ++i) {
        const double nx = (diag[i] - E) * p - q;
        lift.advance(nx, p);
        q = p;
        p = nx;
        const double h = std::fabs(p) + std::fabs(q);
        if (h > kBig || h < kSmall) {
            p /= h;
            q /= h;
        }
    }
    return lift;
}

}  // namespace

std::vector<double> prufer_angles_of(const std::vector<double>& values) {
    if (values.size() < 4 || values.size() % 2) throw StructuralError("need values on -L-1..L");
    const std::size_t n = values.size() - 1;
    std::vector<double> th(n);
    if (values[1] == 0.0 && values[0] == 0.0) throw DomainError("function vanishes at the left edge");
    // start from the angle of the first pair
    double a = std::atan2(values[0], values[1]);
    Lift lift;
    if (a > 0.5 * kPi) {
        lift.k = 1;
        lift.beta = a - kPi;
    } else if (a <= -0.5 * kPi) {
        lift.k = -1;
        lift.beta = a + kPi;
    } else {
        lift.beta = a;
    }
    th[0] = lift.value();
    for (std::size_t i = 1; i < n; ++i) {
        if (values[i + 1] == 0.0 && values[i] == 0.0) throw DomainError("function vanishes on two adjacent sites");
        lift.advance(values[i + 1], values[i]);
        th[i] = lift.value();
    }
    return th;
}

double prufer_angle(const std::vector<double>& diag, double E, int x) {
    const int L = static_cast<int>(diag.size() / 2);
    if (x < -L || x > L) throw RangeError("site " + std::to_string(x) + " outside [-L, L]");
    return angle_at(diag, E, x + L).value();
}

int prufer_count(const std::vector<double>& diag, double E) {
    const Lift l = angle_at(diag, E, static_cast<int>(diag.size()));
    // floor(theta/pi + 1/2) with theta = k pi + beta
    return static_cast<int>(l.k) + (l.beta >= 0.5 * kPi ? 1 : 0);
}

double cv_constant(double v) {
    check_v(v);
    const double lnM = std::log(norm2x2(basis_change(v)));
    constexpr int G = 10000;
    const double h = 2.0 * v / (G - 1);
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < G; ++i) {
        const double E = -v + h * i;
        for (int V = 0; V <= 1; ++V) mx = std::max(mx, std::log(step_norm(v * V - E)));
    }
    // d/dE ln||W_V(E)|| is bounded by 1, so half a grid step covers the gaps
    return 4.0 * lnM + 4.0 * (mx + 0.5 * h);
}

double flatness_constant(double v) { return std::exp(6.0 * cv_constant(v)); }

PerturbationBound energy_perturbation_bound(const PotentialConfig& config, double v, double E, double eps) {
    const int L = config.L;
    double best = -std::numeric_limits<double>::infinity();
    for (int x = -L; x < L - 1; ++x) {
        Eigen::Matrix2d M = Eigen::Matrix2d::Identity();
        double ls = 0.0;
        for (int y = x + 1; y <= L - 1; ++y) {
            M = (single_step(config.at(y - 1), E, v) * M).eval();
            const double mx = M.cwiseAbs().maxCoeff();
            if (mx > kBig) {
                M /= mx;
                ls += std::log(mx);
            }
            best = std::max(best, ls + std::log(norm2x2(M)));
        }
    }
    PerturbationBound b;
    b.G = std::exp(best);
    b.half_width = eps == 0.0 ? 0.0 : b.G * b.G * std::expm1(4.0 * L * std::fabs(eps) * b.G);
    return b;
}

void write_trajectory_csv(std::ostream& os, const PruferTrajectory& traj) {
    os << "x,phi,r,theta\n";
    for (int x = -traj.L(); x <= traj.L(); ++x) {
        os << x << ',' << fmt17(traj.phi(x)) << ',' << fmt17(traj.r(x)) << ',' << fmt17(traj.theta(x)) << '\n';
    }
}

}  // namespace rdm
