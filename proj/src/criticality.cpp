#include "rdm/criticality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "rdm/error.hpp"
#include "rdm/transfer.hpp"

namespace rdm {

namespace {

constexpr double kPi = std::numbers::pi;
const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

// floor(a * L) that forgives the last-bit error of a product like 0.29 * 100
int floor_times(double a, int L) {
    const double p = a * static_cast<double>(L);
    const double r = std::round(p);
    if (std::fabs(p - r) <= 1e-9 * std::max(1.0, std::fabs(p))) return static_cast<int>(r);
    return static_cast<int>(std::floor(p));
}

}  // namespace

double CriticalWindow::half_width() const { return std::pow(static_cast<double>(L), -0.5 - alpha); }

EnergyWindow CriticalWindow::energies() const { return {E_c - half_width(), E_c + half_width()}; }

bool CriticalWindow::contains(double E) const {
    const EnergyWindow w = energies();
    return E >= w.lo && E <= w.hi;
}

bool CriticalWindow::separated() const { return v == 0.0 || half_width() < v; }

CriticalWindow make_window(double v, double E_c, int L, double alpha) {
    if (!(alpha > 0.0)) throw ParameterError("alpha must be positive");
    if (L < 1) throw ParameterError("L must be at least 1");
    if (E_c != 0.0 && std::fabs(E_c - v) > 1e-15 * std::max(1.0, v))
        throw ParameterError("critical energy must be 0 or v");
    CriticalWindow w;
    w.E_c = E_c;
    w.alpha = alpha;
    w.L = L;
    w.v = v;
    return w;
}

FlatnessProfile flatness_profile(const std::vector<double>& psi, int L) {
    if (static_cast<int>(psi.size()) != 2 * L || L < 1) throw StructuralError("psi must live on the box");
    FlatnessProfile f;
    f.min = std::numeric_limits<double>::infinity();
    f.max = 0.0;
    for (int i = 1; i < 2 * L; ++i) {
        const double q = L * (psi[i - 1] * psi[i - 1] + psi[i] * psi[i]);
        f.min = std::min(f.min, q);
        f.max = std::max(f.max, q);
    }
    f.ratio = f.min > 0.0 ? f.max / f.min : std::numeric_limits<double>::infinity();
    f.C = f.min > 0.0 ? std::max(f.max, 1.0 / f.min) : std::numeric_limits<double>::infinity();
    return f;
}

FlatnessProfile flatness_profile(const SpectralData& spec, int j) {
    if (!spec.has_vectors() || spec.vectors().rows() != spec.box_size())
        throw ContractError("flatness needs full eigenvectors");
    const auto col = spec.vectors().col(j);
    std::vector<double> psi(col.data(), col.data() + col.size());
    return flatness_profile(psi, spec.L());
}

WindowStats window_spacings(const SpectralData& spec, const CriticalWindow& win, const WindowCaps& caps) {
    WindowStats st;
    st.window = win;
    const bool full = spec.has_vectors() && spec.vectors().rows() == spec.box_size();
    std::vector<int> cols;
    for (int j = 0; j < spec.count(); ++j) {
        if (win.contains(spec.eigenvalue(j))) {
            st.eigenvalues.push_back(spec.eigenvalue(j));
            cols.push_back(j);
        }
    }
    for (std::size_t i = 1; i < st.eigenvalues.size(); ++i) st.spacings.push_back(st.eigenvalues[i] - st.eigenvalues[i - 1]);
    if (!st.spacings.empty()) {
        const auto [mn, mx] = std::minmax_element(st.spacings.begin(), st.spacings.end());
        st.spacing_ratio = st.spacings.size() >= 2 ? *mx / *mn : 0.0;
        std::vector<double> s = st.spacings;
        std::sort(s.begin(), s.end());
        const std::size_t m = s.size();
        st.median_spacing = m % 2 ? s[m / 2] : 0.5 * (s[m / 2 - 1] + s[m / 2]);
        const double unit = kPi / win.L;
        double c3 = 1.0;
        for (double x : st.spacings) {
            st.median_factor = std::max(st.median_factor, std::max(x / st.median_spacing, st.median_spacing / x));
            c3 = std::max(c3, std::max(x / unit, unit / x));
        }
        st.C_spacing = std::cbrt(c3);
        st.spacing_flag = st.spacings.size() >= 2 && st.spacing_ratio > caps.spacing_ratio;
    }
    if (full) {
        for (int j : cols) {
            st.flatness.push_back(flatness_profile(spec, j));
            st.C_emp = std::max(st.C_emp, st.flatness.back().C);
        }
        st.flatness_flag = !st.flatness.empty() && st.C_emp > caps.flatness_C;
    }
    return st;
}

WindowStats analyze_window(const TridiagonalOperator& op, const CriticalWindow& win, const WindowCaps& caps) {
    if (op.L != win.L) throw ContractError("window and operator disagree on L");
    EigenOptions o;
    o.window = win.energies();
    return window_spacings(eigensystem(op, o), win, caps);
}

DosEstimate dos_estimate(const DisorderParams& params, double E, int L, int samples, double alpha) {
    if (samples < 1) throw ParameterError("samples must be at least 1");
    if (L < 1) throw ParameterError("L must be at least 1");
    if (!(alpha > 0.0)) throw ParameterError("alpha must be positive");
    DosEstimate d;
    d.E = E;
    d.L = L;
    d.samples = samples;
    d.eps = std::pow(static_cast<double>(L), -0.5 - alpha);
    const std::vector<double> at = {E - d.eps, E + d.eps};
    double sum[3] = {0.0, 0.0, 0.0};
    const Boundary kinds[3] = {Boundary::plain, Boundary::dirichlet, Boundary::neumann};
    for (int s = 0; s < samples; ++s) {
        const PotentialConfig cfg = sample_config(params, L, static_cast<std::uint64_t>(s));
        std::vector<int> c[3];
        for (int b = 0; b < 3; ++b) {
            c[b] = eigenvalue_counts_below(build_hamiltonian(cfg, params, kinds[b]), at);
            sum[b] += c[b][1] - c[b][0];
        }
        for (int e = 0; e < 2; ++e) {
            d.max_rank_deviation = std::max({d.max_rank_deviation, std::abs(c[1][e] - c[0][e]), std::abs(c[2][e] - c[0][e])});
            d.max_dn_gap = std::max(d.max_dn_gap, std::abs(c[1][e] - c[2][e]));
        }
    }
    const double scale = 1.0 / (2.0 * d.eps * 2.0 * L * samples);
    d.density = sum[0] * scale;
    d.density_dirichlet = sum[1] * scale;
    d.density_neumann = sum[2] * scale;
    const double corr = 4.0 / (2.0 * d.eps * 2.0 * L);
    d.lo = d.density - corr;
    d.hi = d.density + corr;
    d.bracketing_holds = d.max_rank_deviation <= 2 && d.max_dn_gap <= 4;
    return d;
}

int rank_deviation(const PotentialConfig& config, const DisorderParams& params, const std::vector<double>& energies) {
    const std::vector<int> p = eigenvalue_counts_below(build_hamiltonian(config, params, Boundary::plain), energies);
    const std::vector<int> dn = eigenvalue_counts_below(build_hamiltonian(config, params, Boundary::dirichlet), energies);
    const std::vector<int> nn = eigenvalue_counts_below(build_hamiltonian(config, params, Boundary::neumann), energies);
    int worst = 0;
    for (std::size_t i = 0; i < energies.size(); ++i)
        worst = std::max({worst, std::abs(dn[i] - p[i]), std::abs(nn[i] - p[i])});
    return worst;
}

Region box_position(int L, double gamma, double delta) {
    if (L < 1) throw ParameterError("L must be at least 1");
    if (!(gamma >= 0.0) || !(delta > 0.0) || !(gamma + delta < 2.0))
        throw ParameterError("need 0 <= gamma, 0 < delta, gamma + delta < 2");
    const int a = floor_times(gamma, L);
    const int b = floor_times(gamma + delta, L);
    if (a == b)
        throw DegenerateRegionError("floor(gamma L) = floor((gamma+delta) L) = " + std::to_string(a) + " at L = " +
                                    std::to_string(L));
    return make_region(-L + a, -L + b - 1);
}

int BeatAnalysis::good_count() const {
    int n = 0;
    for (const auto& a : antinodes) n += static_cast<int>(a.good.size());
    return n;
}

int BeatAnalysis::hull_good_count() const {
    int n = 0;
    for (const auto& a : antinodes) n += static_cast<int>(a.hull_good.size());
    return n;
}

EdgeAngles edge_angles(const std::vector<double>& diag, double E, int x1, int x2) {
    return {prufer_angle(diag, E, x1), prufer_angle(diag, E, x2)};
}

namespace {

struct Labels {
    int zero = 0;  // local index of label 0
    std::vector<int> lt, ge;
};

Labels labels_of(const SpectralData& spec, const CriticalWindow& win) {
    Labels lb;
    lb.zero = spec.count_below(win.E_c);
    const int n = spec.count();
    for (int i = 1; i < n; ++i) {
        const int j = i - lb.zero;
        if (j < 0 && win.contains(spec.eigenvalue(i - 1)) && win.contains(spec.eigenvalue(i))) lb.lt.push_back(j);
    }
    for (int i = 0; i + 1 < n; ++i) {
        const int j = i - lb.zero;
        if (j >= 0 && win.contains(spec.eigenvalue(i)) && win.contains(spec.eigenvalue(i + 1))) lb.ge.push_back(j);
    }
    return lb;
}

// sign changes and partition of J_ge by the envelope values s_j
void partition(BeatAnalysis& b, const std::vector<double>& env) {
    const std::size_t n = b.J_ge.size();
    std::vector<std::size_t> starts = {0};
    for (std::size_t i = 1; i < n; ++i) {
        if (env[i] * env[i - 1] <= 0.0 && env[i] != 0.0) {
            b.sign_changes.push_back(b.J_ge[i]);
            starts.push_back(i);
        }
    }
    starts.push_back(n);
    // sign changes are only looked for from the second index on, so A_0 is never empty
    for (std::size_t q = 0; q + 1 < starts.size(); ++q) {
        Antinode a;
        a.interior = q >= 1 && q + 2 < starts.size();
        for (std::size_t i = starts[q]; i < starts[q + 1]; ++i) {
            const int j = b.J_ge[i];
            a.indices.push_back(j);
            if (std::fabs(env[i]) >= kInvSqrt2) {
                a.hull_good.push_back(j);
                if (b.boundary_variant || std::fabs(std::cos(b.z_plus[i])) >= kInvSqrt2) a.good.push_back(j);
            }
        }
        b.antinodes.push_back(std::move(a));
    }
}

}  // namespace

std::vector<int> lower_labels(const SpectralData& spec, const CriticalWindow& win) { return labels_of(spec, win).lt; }

BeatAnalysis beat_analysis(const TridiagonalOperator& op, const SpectralData& spec, const CriticalWindow& win,
                           const Region& A, int k) {
    if (op.boundary != Boundary::plain) throw ContractError("beat analysis needs the plain box");
    if (spec.L() != op.L || win.L != op.L) throw ContractError("operator, spectrum and window disagree on L");
    if (A.empty() || A.x1 < -op.L || A.x2 > op.L - 1) throw RangeError("region must be a nonempty part of the box");
    const Labels lb = labels_of(spec, win);
    BeatAnalysis b;
    b.k = k;
    b.A = A;
    b.J_lt = lb.lt;
    b.J_ge = lb.ge;
    b.boundary_variant = A.x1 == -op.L;
    if (std::find(lb.lt.begin(), lb.lt.end(), k) == lb.lt.end()) throw ContractError("k is not in J_<");
    b.sufficient = b.J_ge.size() >= 2;
    if (!b.sufficient) return b;

    // L1 = x1, L2 = x2 + 1
    const int L1 = A.x1, L2 = A.x2 + 1;
    const EdgeAngles ek = edge_angles(op.diag, spec.eigenvalue(k + lb.zero), L1, L2);
    std::vector<double> env;
    for (int j : b.J_ge) {
        const double E = spec.eigenvalue(j + lb.zero);
        const EdgeAngles ej = edge_angles(op.diag, E, L1, L2);
        const double d2 = ej.theta2 - ek.theta2, d1 = ej.theta1 - ek.theta1;
        b.energies_ge.push_back(E);
        b.z_plus.push_back(0.5 * (d2 + d1));
        b.z_minus.push_back(0.5 * (d2 - d1));
        env.push_back(b.boundary_variant ? std::sin(2.0 * b.z_minus.back()) : std::sin(b.z_minus.back()));
    }
    partition(b, env);
    return b;
}

GoodIndexReport good_index_density(const BeatAnalysis& beat, const GoodIndexParams& p) {
    GoodIndexReport r;
    for (const auto& a : beat.antinodes) {
        r.counts.push_back(static_cast<int>(a.good.size()));
        r.interior.push_back(a.interior);
        r.total += static_cast<int>(a.good.size());
    }
    const double C = p.C;
    if (beat.boundary_variant) {
        const double b = p.delta * kPi * std::pow(C, 6) / 2.0;
        r.bound = b > 0.0 ? std::floor(kPi / (2.0 * b)) : 0.0;
        if (!(C > 1.0 - 1e-15)) r.reason = "C < 1";
        else if (!(b <= kPi / 4.0)) r.reason = "b = delta pi C^6 / 2 exceeds pi/4";
    } else {
        r.bound = 1.0 / (32.0 * std::pow(C, 18) * p.delta);
        if (!(C <= 2.0)) r.reason = "C > 2";
        else if (!(p.gamma <= 1.0 / 256.0)) r.reason = "gamma > 2^-8";
        else if (!(p.delta / p.gamma <= std::ldexp(1.0, -17))) r.reason = "delta/gamma > 2^-17";
        else if (!(std::pow(C, 12) - 1.0 < p.delta / p.gamma)) r.reason = "C^12 - 1 >= delta/gamma";
    }
    r.hypotheses_met = r.reason.empty() && beat.sufficient;
    if (!beat.sufficient && r.reason.empty()) r.reason = "fewer than two indices in J_>=";
    if (!r.hypotheses_met) return r;
    for (std::size_t q = 0; q < r.counts.size(); ++q) {
        if (!r.interior[q]) continue;
        ++r.interior_checked;
        if (r.counts[q] < r.bound) r.holds = false;
    }
    return r;
}

double smallest_gamma_for(double C) {
    if (!(C >= 1.0)) throw DomainError("flatness constant below 1");
    return std::sqrt(C - 1.0);
}

}  // namespace rdm
