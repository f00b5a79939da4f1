#include "rdm/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rdm/error.hpp"
#include "rdm/hamiltonian.hpp"

namespace rdm {

namespace {

constexpr double kTie = 1e-14;

void check_in_box(const Region& A, int L) {
    if (A.empty()) return;
    if (A.x1 < -L || A.x2 > L - 1) {
        throw RangeError("region [" + std::to_string(A.x1) + ", " + std::to_string(A.x2) + "] outside box of half-width " +
                         std::to_string(L));
    }
}

void need_complete(const SpectralData& spec) {
    if (!spec.complete()) throw ContractError("entropy needs the complete spectrum");
}

// psi_j(x) for x in A, j < count, as a |A| x count block
Eigen::MatrixXd block_on(const SpectralData& spec, const Region& A, int count) {
    Eigen::MatrixXd P(A.size(), count);
    if (A.empty() || count == 0) return P;
    if (spec.vectors().rows() == spec.box_size()) {
        return spec.vectors().block(A.x1 + spec.L(), 0, A.size(), count);
    }
    for (int x = A.x1; x <= A.x2; ++x) {
        for (int j = 0; j < count; ++j) P(x - A.x1, j) = spec.component(j, x);
    }
    return P;
}

// the four boundary values entering <psi_j,[H,1_A]psi_k> = sum_r a_r(j) b_r(k)
struct BoundaryValues {
    std::vector<double> a[4];
    std::vector<double> b[4];
};

BoundaryValues boundary_values(const SpectralData& spec, const Region& A) {
    BoundaryValues bv;
    const int n = spec.count();
    for (int r = 0; r < 4; ++r) {
        bv.a[r].resize(static_cast<std::size_t>(n));
        bv.b[r].resize(static_cast<std::size_t>(n));
    }
    for (int j = 0; j < n; ++j) {
        const double l0 = spec.component(j, A.x1 - 1), l1 = spec.component(j, A.x1);
        const double r0 = spec.component(j, A.x2), r1 = spec.component(j, A.x2 + 1);
        bv.a[0][j] = l1;
        bv.b[0][j] = l0;
        bv.a[1][j] = -l0;
        bv.b[1][j] = l1;
        bv.a[2][j] = r0;
        bv.b[2][j] = r1;
        bv.a[3][j] = -r1;
        bv.b[3][j] = r0;
    }
    return bv;
}

EntropyResult from_singular_values(const Eigen::VectorXd& s) {
    EntropyResult out;
    double S = 0.0, Q = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        const double s2 = s(i) * s(i);
        if (4.0 * s2 > 1.0 + 1e-8) throw NumericalError("boundary block singular value above 1/2");
        const double lam = 0.5 * (1.0 - std::sqrt(std::max(0.0, 1.0 - 4.0 * s2)));
        S += binary_entropy(lam);
        Q += 4.0 * s2;
    }
    out.S = S;
    out.Q = Q;
    return out;
}

}  // namespace

Region make_region(int x1, int x2) {
    if (x2 < x1 - 1) throw ParameterError("region needs x1 <= x2 (or x2 = x1 - 1 for the empty region)");
    return Region{x1, x2};
}

int symmetric_difference(const Region& a, const Region& b) {
    const int lo = std::max(a.x1, b.x1), hi = std::min(a.x2, b.x2);
    const int common = (a.empty() || b.empty()) ? 0 : std::max(0, hi - lo + 1);
    return a.size() + b.size() - 2 * common;
}

double clamp_occupation(double lambda) {
    if (!(lambda >= -kOccupationSlack && lambda <= 1.0 + kOccupationSlack)) {
        throw NumericalError("occupation " + std::to_string(lambda) + " outside [0,1] beyond rounding slack");
    }
    return std::clamp(lambda, 0.0, 1.0);
}

double binary_entropy(double lambda) {
    if (!(lambda >= -kOccupationSlack && lambda <= 1.0 + kOccupationSlack)) {
        throw DomainError("binary_entropy argument outside [0,1]");
    }
    const double l = std::clamp(lambda, 0.0, 1.0);
    if (l == 0.0 || l == 1.0) return 0.0;
    return -(l * std::log2(l) + (1.0 - l) * std::log2(1.0 - l));
}

double quadratic_entropy_fn(double lambda) {
    if (!(lambda >= -kOccupationSlack && lambda <= 1.0 + kOccupationSlack)) {
        throw DomainError("quadratic entropy argument outside [0,1]");
    }
    const double l = std::clamp(lambda, 0.0, 1.0);
    return 4.0 * l * (1.0 - l);
}

FermiSplit fermi_split(const SpectralData& spec, double E_F) {
    FermiSplit f;
    f.filled = spec.count_below(E_F);
    const double scale = std::max(1.0, spec.diagnostics().norm);
    for (int j : {f.filled - 1, f.filled}) {
        if (j >= 0 && j < spec.count() && std::fabs(spec.eigenvalue(j) - E_F) <= kTie * scale) f.tie = true;
    }
    return f;
}

Eigen::MatrixXd correlation_matrix(const SpectralData& spec, const Region& A, double E_F) {
    need_complete(spec);
    check_in_box(A, spec.L());
    const int nf = fermi_split(spec, E_F).filled;
    const Eigen::MatrixXd P = block_on(spec, A, nf);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(A.size(), A.size());
    if (nf > 0 && !A.empty()) M.selfadjointView<Eigen::Lower>().rankUpdate(P);
    return M.selfadjointView<Eigen::Lower>();
}

Eigen::MatrixXd weighted_correlation_matrix(const SpectralData& spec, const Region& A, const std::vector<double>& w) {
    need_complete(spec);
    check_in_box(A, spec.L());
    if (static_cast<int>(w.size()) != spec.count()) throw StructuralError("one weight per eigenvalue expected");
    Eigen::MatrixXd P = block_on(spec, A, spec.count());
    for (int j = 0; j < spec.count(); ++j) P.col(j) *= std::sqrt(std::max(0.0, w[j]));
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(A.size(), A.size());
    if (!A.empty()) M.selfadjointView<Eigen::Lower>().rankUpdate(P);
    return M.selfadjointView<Eigen::Lower>();
}

namespace {

EntropyResult entropy_of_occupations(const Eigen::VectorXd& ev) {
    EntropyResult out;
    out.min_occupation = ev.minCoeff();
    out.max_occupation = ev.maxCoeff();
    out.occupations.resize(static_cast<std::size_t>(ev.size()));
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        const double l = clamp_occupation(ev(i));
        out.occupations[static_cast<std::size_t>(i)] = l;
        out.S += binary_entropy(l);
        out.Q += quadratic_entropy_fn(l);
    }
    return out;
}

// Occupations against the A-block of the full eigenbasis instead of the identity.
// Orthogonality error of close pairs (~res/gap) otherwise pushes them past 1.
EntropyResult entropy_of_pair(const Eigen::MatrixXd& M, const Eigen::MatrixXd& F) {
    if (M.rows() == 0) return EntropyResult{};
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(M, F, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
    if (es.info() != Eigen::Success) throw NumericalError("metric block not positive definite");
    return entropy_of_occupations(es.eigenvalues());
}

// filled block and the completeness block on A, weights w (empty: step at E_F)
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> pair_matrices(const SpectralData& spec, const Region& A,
                                                          const std::vector<double>& w) {
    need_complete(spec);
    check_in_box(A, spec.L());
    if (static_cast<int>(w.size()) != spec.count()) throw StructuralError("one weight per eigenvalue expected");
    const int n = A.size();
    Eigen::MatrixXd P = block_on(spec, A, spec.count());
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n, n), M = Eigen::MatrixXd::Zero(n, n);
    if (n == 0) return {M, F};
    F.selfadjointView<Eigen::Lower>().rankUpdate(P);
    for (int j = 0; j < spec.count(); ++j) P.col(j) *= std::sqrt(std::clamp(w[j], 0.0, 1.0));
    M.selfadjointView<Eigen::Lower>().rankUpdate(P);
    return {M.selfadjointView<Eigen::Lower>(), F.selfadjointView<Eigen::Lower>()};
}

std::vector<double> step_weights(const SpectralData& spec, double E_F) {
    std::vector<double> w(static_cast<std::size_t>(spec.count()), 0.0);
    const int nf = fermi_split(spec, E_F).filled;
    for (int j = 0; j < nf; ++j) w[j] = 1.0;
    return w;
}

}  // namespace

EntropyResult entropy_of_correlation(const Eigen::MatrixXd& M) {
    if (M.rows() == 0) return EntropyResult{};
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    return entropy_of_occupations(es.eigenvalues());
}

EntropyResult entanglement_entropy(const SpectralData& spec, const Region& A, double E_F) {
    const auto [M, F] = pair_matrices(spec, A, step_weights(spec, E_F));
    EntropyResult out = entropy_of_pair(M, F);
    out.L = spec.L();
    out.E_F = E_F;
    out.region = A;
    out.fermi_tie = fermi_split(spec, E_F).tie;
    return out;
}

double commutator_element(const SpectralData& spec, const Region& A, int j, int k) {
    if (A.empty()) return 0.0;
    return spec.component(j, A.x1) * spec.component(k, A.x1 - 1) - spec.component(j, A.x1 - 1) * spec.component(k, A.x1) +
           spec.component(j, A.x2) * spec.component(k, A.x2 + 1) - spec.component(j, A.x2 + 1) * spec.component(k, A.x2);
}

double commutator_element_prufer(const PruferTrajectory& a, const PruferTrajectory& b, const Region& A) {
    if (a.L() != b.L()) throw StructuralError("trajectories on different boxes");
    check_in_box(A, a.L());
    for (const PruferTrajectory* t : {&a, &b}) {
        if (std::fabs(t->phi(t->L())) > 1e-6) {
            throw ContractError("trajectory at E=" + std::to_string(t->energy()) + " is not at an eigenvalue");
        }
    }
    if (A.empty()) return 0.0;
    auto term = [&](int x) { return a.r(x) * b.r(x) * std::sin(a.theta(x) - b.theta(x)); };
    return term(A.x2 + 1) - term(A.x1);
}

double quadratic_entropy_commutator(const SpectralData& spec, const Region& A, double E_F) {
    need_complete(spec);
    check_in_box(A, spec.L());
    if (A.empty()) return 0.0;
    const int n = spec.count();
    const int nf = fermi_split(spec, E_F).filled;
    const BoundaryValues bv = boundary_values(spec, A);
    const double* E = spec.eigenvalues().data();
    double Q = 0.0;
    for (int j = 0; j < nf; ++j) {
        const double a0 = bv.a[0][j], a1 = bv.a[1][j], a2 = bv.a[2][j], a3 = bv.a[3][j], Ej = E[j];
        double row = 0.0;
        for (int k = nf; k < n; ++k) {
            const double c = a0 * bv.b[0][k] + a1 * bv.b[1][k] + a2 * bv.b[2][k] + a3 * bv.b[3][k];
            const double d = E[k] - Ej;
            row += (c * c) / (d * d);
        }
        Q += row;
    }
    return 4.0 * Q;
}

EntropyResult boundary_entropy(const SpectralData& spec, const Region& A, double E_F) {
    need_complete(spec);
    check_in_box(A, spec.L());
    EntropyResult out;
    out.L = spec.L();
    out.E_F = E_F;
    out.region = A;
    const FermiSplit fs = fermi_split(spec, E_F);
    out.fermi_tie = fs.tie;
    const int n = spec.count();
    const int nf = fs.filled, ne = n - nf;
    if (A.empty() || nf == 0 || ne == 0) return out;
    const BoundaryValues bv = boundary_values(spec, A);
    const std::vector<double>& E = spec.eigenvalues();

    Eigen::VectorXd s;
    if (static_cast<long long>(nf) * ne <= 1000000LL) {
        // small enough to write the block down
        Eigen::MatrixXd X(nf, ne);
        for (int j = 0; j < nf; ++j) {
            for (int k = 0; k < ne; ++k) {
                const int kk = nf + k;
                double c = 0.0;
                for (int r = 0; r < 4; ++r) c += bv.a[r][j] * bv.b[r][kk];
                X(j, k) = c / (E[kk] - E[j]);
            }
        }
        s = Eigen::BDCSVD<Eigen::MatrixXd>(X).singularValues();
    } else {
        // 1/s = int exp(u - s e^u) du, trapezoid with step h; relative error ~ 1e-11
        const double mid = 0.5 * (E[nf - 1] + E[nf]);
        const double smin = E[nf] - E[nf - 1];
        const double smax = E[n - 1] - E[0];
        const double h = 0.4;
        const double ulo = std::log(1e-11 / smax), uhi = std::log(26.0 / smin);
        const int m = static_cast<int>(std::ceil((uhi - ulo) / h)) + 1;
        const int K = 4 * m;
        Eigen::MatrixXd U(nf, K), V(ne, K);
        for (int q = 0; q < m; ++q) {
            const double u = ulo + q * h;
            const double t = std::exp(u);
            const double half = 0.5 * u + 0.5 * std::log(h);
            for (int j = 0; j < nf; ++j) {
                const double e = std::exp(half - t * (mid - E[j]));
                for (int r = 0; r < 4; ++r) U(j, r * m + q) = bv.a[r][j] * e;
            }
            for (int k = 0; k < ne; ++k) {
                const double e = std::exp(half - t * (E[nf + k] - mid));
                for (int r = 0; r < 4; ++r) V(k, r * m + q) = bv.b[r][nf + k] * e;
            }
        }
        Eigen::HouseholderQR<Eigen::MatrixXd> qu(U), qv(V);
        const int ru = std::min(nf, K), rv = std::min(ne, K);
        const Eigen::MatrixXd Ru = qu.matrixQR().topRows(ru).triangularView<Eigen::Upper>();
        const Eigen::MatrixXd Rv = qv.matrixQR().topRows(rv).triangularView<Eigen::Upper>();
        s = Eigen::BDCSVD<Eigen::MatrixXd>(Ru * Rv.transpose()).singularValues();
    }
    const EntropyResult sv = from_singular_values(s);
    out.S = sv.S;
    out.Q = sv.Q;
    return out;
}

double fermi_dirac(double E, double E_F, double T) {
    if (!(T > 0.0)) throw ParameterError("temperature must be > 0");
    const double z = (E - E_F) / T;
    if (z > 0.0) {
        const double e = std::exp(-z);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(z));
}

EntropyResult fermi_dirac_entropy(const SpectralData& spec, const Region& A, double E_F, double T) {
    if (!(T > 0.0)) throw ParameterError("temperature must be > 0");
    std::vector<double> w(static_cast<std::size_t>(spec.count()));
    for (int j = 0; j < spec.count(); ++j) w[j] = fermi_dirac(spec.eigenvalue(j), E_F, T);
    const auto [M, F] = pair_matrices(spec, A, w);
    EntropyResult out = entropy_of_pair(M, F);
    out.L = spec.L();
    out.E_F = E_F;
    out.region = A;
    return out;
}

RegionStability region_stability(const SpectralData& spec, const Region& A, const Region& B, double E_F) {
    RegionStability r;
    r.difference = std::fabs(entanglement_entropy(spec, A, E_F).Q - entanglement_entropy(spec, B, E_F).Q);
    r.bound = 4 * symmetric_difference(A, B);
    r.holds = r.difference <= r.bound + 1e-12;
    return r;
}

PaddedComparison finite_vs_padded(const PotentialConfig& small, const PotentialConfig& big,
                                  const DisorderParams& params, const Region& A, double E_F) {
    if (big.L < small.L || big.phase != small.phase) throw ContractError("padded box must contain the small box");
    for (int x = -small.L; x <= small.L - 1; ++x) {
        if (small.at(x) != big.at(x)) throw ContractError("disorder differs at site " + std::to_string(x));
    }
    check_in_box(A, small.L);
    EigenOptions o;
    o.vectors = VectorMode::sites;
    for (int x = A.x1; x <= A.x2; ++x) o.sites.push_back(x);
    if (A.empty()) o.vectors = VectorMode::none;

    auto corr = [&](const PotentialConfig& c) {
        const SpectralData s = eigensystem(build_hamiltonian(c, params), o);
        if (A.empty()) return std::pair{Eigen::MatrixXd(0, 0), Eigen::MatrixXd(0, 0)};
        return pair_matrices(s, A, step_weights(s, E_F));
    };
    const auto [Ms, Fs] = corr(small);
    const auto [Mb, Fb] = big.L == small.L ? std::pair{Ms, Fs} : corr(big);
    PaddedComparison out;
    const EntropyResult es = entropy_of_pair(Ms, Fs), eb = entropy_of_pair(Mb, Fb);
    out.Q_L = es.Q;
    out.Q_pad = eb.Q;
    out.S_L = es.S;
    out.S_pad = eb.S;
    if (!A.empty()) out.trace_norm_diff = Eigen::BDCSVD<Eigen::MatrixXd>(Mb - Ms).singularValues().sum();
    out.krein_holds = std::fabs(out.Q_pad - out.Q_L) <= 4.0 * out.trace_norm_diff + 1e-12;
    return out;
}

PaddedEntropy padded_entropy(const DisorderParams& params, std::uint64_t sample_index, const Region& A, double E_F,
                             double tol, int L_start, int L_cap) {
    if (!(tol > 0.0)) throw ParameterError("tolerance must be > 0");
    if (L_cap < L_start) throw ParameterError("pad cap below the starting box");
    check_in_box(A, L_start);
    PaddedEntropy out;
    double prev = std::numeric_limits<double>::quiet_NaN();
    for (int L = L_start; L <= L_cap; L *= 2) {
        const PotentialConfig c = sample_config(params, L, sample_index);
        const EntropyResult r = region_entropy(build_hamiltonian(c, params), A, E_F);
        ++out.steps;
        out.S = r.S;
        out.Q = r.Q;
        out.L_used = L;
        if (!std::isnan(prev)) {
            out.residual = std::fabs(r.S - prev);
            if (out.residual < tol) {
                out.converged = true;
                break;
            }
        }
        prev = r.S;
        if (L > L_cap / 2) break;
    }
    return out;
}

EntropyResult region_entropy(const TridiagonalOperator& op, const Region& A, double E_F) {
    check_in_box(A, op.L);
    EigenOptions o;
    o.vectors = VectorMode::sites;
    const bool small = A.size() <= kDenseRegionMax;
    if (small) {
        for (int x = A.x1; x <= A.x2; ++x) o.sites.push_back(x);
    } else {
        for (int x : {A.x1 - 1, A.x1, A.x2, A.x2 + 1}) {
            if (x >= -op.L && x <= op.L - 1) o.sites.push_back(x);
        }
    }
    if (o.sites.empty()) o.vectors = VectorMode::none;
    const SpectralData s = eigensystem(op, o);
    if (A.empty()) {
        EntropyResult r;
        r.L = op.L;
        r.E_F = E_F;
        r.region = A;
        return r;
    }
    return small ? entanglement_entropy(s, A, E_F) : boundary_entropy(s, A, E_F);
}

}  // namespace rdm
