#include "rdm/eigensystem.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>

#include "rdm/error.hpp"
#include "rdm/format.hpp"
#include "rdm/philox.hpp"

namespace rdm {

// ---------------------------------------------------------------- SpectralData

SpectralData::SpectralData(int L, int first_index, std::vector<double> eigenvalues, std::vector<int> sites,
                           Eigen::MatrixXd vectors, std::vector<double> residuals, SpectralDiagnostics diag)
    : L_(L),
      first_index_(first_index),
      eigenvalues_(std::move(eigenvalues)),
      sites_(std::move(sites)),
      vectors_(std::move(vectors)),
      residuals_(std::move(residuals)),
      diag_(diag) {
    row_of_site_.assign(static_cast<std::size_t>(2 * L_), -1);
    for (std::size_t r = 0; r < sites_.size(); ++r) row_of_site_[static_cast<std::size_t>(sites_[r] + L_)] = int(r);
}

bool SpectralData::has_site(int x) const {
    if (x == -L_ - 1 || x == L_) return true;
    if (x < -L_ || x > L_ - 1) return false;
    return has_vectors() && row_of_site_[static_cast<std::size_t>(x + L_)] >= 0;
}

double SpectralData::component(int j, int x) const {
    if (x == -L_ - 1 || x == L_) return 0.0;
    if (x < -L_ || x > L_ - 1) throw RangeError("site " + std::to_string(x) + " outside box");
    const int r = has_vectors() ? row_of_site_[static_cast<std::size_t>(x + L_)] : -1;
    if (r < 0) throw ContractError("eigenvector component at site " + std::to_string(x) + " was not stored");
    return vectors_(r, j);
}

int SpectralData::count_below(double E) const {
    return static_cast<int>(std::lower_bound(eigenvalues_.begin(), eigenvalues_.end(), E) - eigenvalues_.begin());
}

// ---------------------------------------------------------------- kernels

namespace {

constexpr double kPivmin = 1e-280;
constexpr double kClamp = 1e300;
constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kLanes = 16;
constexpr int kBlock = 16;
constexpr int kMaxSweeps = 80;
constexpr double kKeepOverlap = 1e-12;
// twisted vectors of a pair at gap g overlap by about eps ||H|| / g; accept up to
// 100 times that, but never more than this
constexpr double kKeepOverlapCap = 2e-11;

// explicit vectors; the compiler will not vectorize the guarded divisions on its own
using vd = double __attribute__((vector_size(32)));
constexpr int kW = 4;
constexpr int kV = kLanes / kW;

inline vd splat(double x) { return vd{x, x, x, x}; }
inline vd vabs(vd x) { return x < splat(0.0) ? -x : x; }
inline vd guard(vd q) { return vabs(q) < splat(kPivmin) ? splat(-kPivmin) : q; }
inline vd vload(const double* p) {
    vd x;
    std::memcpy(&x, p, sizeof x);
    return x;
}

template <int S>
void count_block(const double* __restrict d, int n, const double* __restrict sig, int* __restrict out) {
    constexpr int V = S / kW;
    vd r[V], c[V], sg[V];
    for (int w = 0; w < V; ++w) {
        r[w] = splat(0.0);
        c[w] = splat(0.0);
        sg[w] = vload(sig + kW * w);
    }
    const vd one = splat(1.0), zero = splat(0.0);
    for (int k = 0; k < n; ++k) {
        const vd dk = splat(d[k]);
        for (int w = 0; w < V; ++w) {
            const vd q = guard((dk - sg[w]) - r[w]);
            c[w] += q < zero ? one : zero;
            r[w] = one / q;
        }
    }
    for (int w = 0; w < V; ++w) {
        for (int i = 0; i < kW; ++i) out[kW * w + i] = static_cast<int>(c[w][i]);
    }
}

template <class F>
void parallel_for(int threads, int items, F&& fn) {
    threads = std::max(1, std::min(threads, items));
    if (threads == 1) {
        fn(0, items);
        return;
    }
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
        const int b = static_cast<int>(static_cast<long long>(items) * t / threads);
        const int e = static_cast<int>(static_cast<long long>(items) * (t + 1) / threads);
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    for (auto& th : pool) th.join();
}

void sturm_counts(const std::vector<double>& d, const double* sig, int m, int* out, int threads) {
    const int n = static_cast<int>(d.size());
    const int blocks = (m + kBlock - 1) / kBlock;
    parallel_for(threads, blocks, [&](int b0, int b1) {
        for (int b = b0; b < b1; ++b) {
            const int i = b * kBlock;
            if (i + kBlock <= m) {
                count_block<kBlock>(d.data(), n, sig + i, out + i);
            } else {
                double pad[kBlock];
                int tmp[kBlock];
                for (int s = 0; s < kBlock; ++s) pad[s] = sig[std::min(i + s, m - 1)];
                count_block<kBlock>(d.data(), n, pad, tmp);
                for (int s = 0; i + s < m; ++s) out[i + s] = tmp[s];
            }
        }
    });
}

int sturm_count(const std::vector<double>& d, double sigma) {
    double r = 0.0;
    int c = 0;
    for (double dk : d) {
        double q = (dk - sigma) - r;
        if (std::fabs(q) < kPivmin) q = -kPivmin;
        c += q < 0.0;
        r = 1.0 / q;
    }
    return c;
}

struct Cell {
    double lo, hi;
    int clo, chi;
};

struct Isolation {
    std::vector<Cell> singles;     // exactly one eigenvalue (index clo)
    std::vector<Cell> unresolved;  // several eigenvalues in a cell too narrow to split
    int bisection_counts = 0;
};

// split [lo,hi) until every eigenvalue with index in [ilo,ihi) sits alone in a cell
Isolation isolate(const std::vector<double>& d, double lo, double hi, int clo, int chi, int ilo, int ihi,
                  double norm, int threads) {
    Isolation out;
    const int m = ihi - ilo;
    if (m <= 0) return out;
    const double min_width = 4.0 * kEps * std::max(1.0, norm);

    const int G = std::max(16, 2 * m);
    std::vector<double> grid(static_cast<std::size_t>(G - 1));
    for (int g = 1; g < G; ++g) grid[g - 1] = lo + (hi - lo) * (static_cast<double>(g) / G);
    std::vector<int> gc(grid.size());
    sturm_counts(d, grid.data(), G - 1, gc.data(), threads);
    out.bisection_counts += G - 1;

    std::vector<Cell> pending;
    auto keep = [&](const Cell& c) {
        if (c.chi <= c.clo) return;
        if (c.chi <= ilo || c.clo >= ihi) return;
        if (c.chi - c.clo == 1) {
            out.singles.push_back(c);
        } else {
            pending.push_back(c);
        }
    };
    for (int g = 0; g < G; ++g) {
        Cell c{g == 0 ? lo : grid[g - 1], g == G - 1 ? hi : grid[g], g == 0 ? clo : gc[g - 1],
               g == G - 1 ? chi : gc[g]};
        // a grid count can exceed its right neighbour only through roundoff; keep cells monotone
        keep(c);
    }

    while (!pending.empty()) {
        std::vector<Cell> work;
        std::vector<double> mids;
        for (const auto& c : pending) {
            const double mid = c.lo + 0.5 * (c.hi - c.lo);
            if (c.hi - c.lo <= min_width || mid <= c.lo || mid >= c.hi) {
                out.unresolved.push_back(c);
            } else {
                work.push_back(c);
                mids.push_back(mid);
            }
        }
        pending.clear();
        if (work.empty()) break;
        std::vector<int> mc(mids.size());
        sturm_counts(d, mids.data(), static_cast<int>(mids.size()), mc.data(), threads);
        out.bisection_counts += static_cast<int>(mids.size());
        for (std::size_t i = 0; i < work.size(); ++i) {
            const int cm = std::clamp(mc[i], work[i].clo, work[i].chi);
            keep(Cell{work[i].lo, mids[i], work[i].clo, cm});
            keep(Cell{mids[i], work[i].hi, cm, work[i].chi});
        }
    }
    auto by_index = [](const Cell& a, const Cell& b) { return a.clo < b.clo; };
    std::sort(out.singles.begin(), out.singles.end(), by_index);
    std::sort(out.unresolved.begin(), out.unresolved.end(), by_index);
    return out;
}

// where refined eigenpairs go
struct Sink {
    std::vector<double>* values;
    std::vector<double>* residuals;
    Eigen::MatrixXd* vectors;       // may be empty
    const std::vector<int>* rows;   // box offsets to store (empty = all)
    std::vector<char>* converged;
    int bisection_steps = 0;
};

// Rayleigh quotient iteration on twisted factorizations, eight shifts at a time.
// Each job owns a bracket holding exactly its eigenvalue; the forward pass
// doubles as a Sturm count so the bracket shrinks on every sweep.
class TwistedLanes {
public:
    // sparse: only the sink's rows are wanted, so vectors are never built in full
    TwistedLanes(const std::vector<double>& d, double norm, bool want_vectors, bool sparse = false)
        : d_(d), n_(static_cast<int>(d.size())), norm_(std::max(norm, 1.0)), want_vectors_(want_vectors),
          sparse_(want_vectors && sparse) {
        const auto sz = static_cast<std::size_t>(n_) * kV;
        S_.resize(sz);
        B_.resize(sz);
        if (want_vectors_) {
            R_.resize(sz);
            if (!sparse_) z_.resize(static_cast<std::size_t>(n_) * kLanes);
        }
    }

    // jobs[i] is refined into slot out_slot[i]
    int run(const std::vector<Cell>& jobs, const std::vector<int>& out_slot, Sink& sink) {
        const double tol_eig = 1e-14 * norm_;
        const double tol_res = 1e-11 * norm_;
        int next = 0;
        int job[kLanes];
        double sigma[kLanes], lo[kLanes], hi[kLanes];
        int sweeps[kLanes];
        bool accept_next[kLanes];
        std::fill(job, job + kLanes, -1);
        int steps = 0;

        for (;;) {
            for (int l = 0; l < kLanes; ++l) {
                if (job[l] < 0 && next < static_cast<int>(jobs.size())) {
                    job[l] = next;
                    lo[l] = jobs[next].lo;
                    hi[l] = jobs[next].hi;
                    sigma[l] = lo[l] + 0.5 * (hi[l] - lo[l]);
                    sweeps[l] = 0;
                    accept_next[l] = false;
                    ++next;
                }
            }
            int active = 0;
            double sg[kLanes];
            for (int l = 0; l < kLanes; ++l) {
                if (job[l] >= 0) ++active;
            }
            if (active == 0) break;
            for (int l = 0; l < kLanes; ++l) {
                if (job[l] >= 0) {
                    sg[l] = sigma[l];
                } else {
                    // idle lane: repeat an active shift, results ignored
                    for (int k = 0; k < kLanes; ++k) {
                        if (job[k] >= 0) {
                            sg[l] = sigma[k];
                            break;
                        }
                    }
                }
            }

            sweep(sg);

            bool build[kLanes] = {};
            bool any_build = false;
            for (int l = 0; l < kLanes; ++l) {
                if (job[l] < 0) continue;
                const Cell& c = jobs[job[l]];
                const int idx = c.clo;
                if (count_[l] <= idx) {
                    lo[l] = std::max(lo[l], sg[l]);
                } else {
                    hi[l] = std::min(hi[l], sg[l]);
                }
                const double delta = gamma_[l] / norm2_[l];
                const double snew = sg[l] + delta;
                const double res = std::fabs(gamma_[l]) / std::sqrt(norm2_[l]);
                const double margin = 2.0 * kEps * std::max({1.0, std::fabs(lo[l]), std::fabs(hi[l])});
                const bool inside = snew >= lo[l] - margin && snew <= hi[l] + margin;
                ++sweeps[l];
                if (!accept_next[l] && std::fabs(delta) <= tol_eig && res <= tol_res && inside &&
                    std::fabs(delta) > 4.0 * kEps * norm_ && snew > lo[l] && snew < hi[l]) {
                    // converged eigenvalue, but the vector built at sg would carry about
                    // delta / gap of its neighbours: one more sweep at the corrected shift
                    sigma[l] = snew;
                    accept_next[l] = true;
                    continue;
                }
                if ((std::fabs(delta) <= tol_eig && res <= tol_res && inside) || accept_next[l]) {
                    build[l] = true;
                    any_build = true;
                    lambda_[l] = accept_next[l] ? sg[l] : snew;
                    resid_[l] = res * std::sqrt(std::max(0.0, 1.0 - 1.0 / norm2_[l]));
                    continue;
                }
                if (sweeps[l] >= kMaxSweeps) {
                    throw NumericalError("inverse iteration did not converge for eigenvalue index " +
                                         std::to_string(idx));
                }
                if (hi[l] - lo[l] <= tol_eig) {
                    // bracket already tight: one more sweep at its centre gives the vector
                    sigma[l] = lo[l] + 0.5 * (hi[l] - lo[l]);
                    accept_next[l] = true;
                    ++steps;
                } else if (snew > lo[l] && snew < hi[l]) {
                    sigma[l] = snew;
                } else {
                    sigma[l] = lo[l] + 0.5 * (hi[l] - lo[l]);
                    ++steps;
                }
            }
            if (any_build) {
                if (want_vectors_ && !sparse_) build_vectors(build);
                for (int l = 0; l < kLanes; ++l) {
                    if (!build[l]) continue;
                    const int slot = out_slot[job[l]];
                    (*sink.values)[slot] = lambda_[l];
                    (*sink.residuals)[slot] = resid_[l];
                    (*sink.converged)[slot] = 1;
                    if (sparse_) {
                        store_sites(l, slot, sink);
                    } else if (want_vectors_) {
                        store_vector(l, slot, sink);
                    }
                    job[l] = -1;
                }
            }
        }
        return steps;
    }

private:
    // backward pivots p_k = (d_k - sigma) - 1/p_{k+1}, S_k = 1/p_k and
    // B_k = sum_{j>=k} (z_j/z_k)^2; then the forward pivots q_k give the Sturm
    // count, A_k, and the twist gamma_k = (d_k - sigma) - 1/q_{k-1} - S_{k+1}
    void sweep(const double* sg) {
        const double* d = d_.data();
        vd* __restrict S = S_.data();
        vd* __restrict B = B_.data();
        vd* __restrict R = want_vectors_ ? R_.data() : nullptr;
        const vd one = splat(1.0), zero = splat(0.0), clamp = splat(kClamp);
        vd sig[kV], s[kV], b[kV];
        for (int w = 0; w < kV; ++w) {
            sig[w] = vload(sg + kW * w);
            s[w] = zero;
            b[w] = zero;
        }
        for (int k = n_ - 1; k >= 0; --k) {
            const vd dk = splat(d[k]);
            vd* Sk = S + static_cast<std::size_t>(k) * kV;
            vd* Bk = B + static_cast<std::size_t>(k) * kV;
            for (int w = 0; w < kV; ++w) {
                vd bn = one + b[w] * s[w] * s[w];
                bn = bn < clamp ? bn : clamp;
                const vd p = guard((dk - sig[w]) - s[w]);
                b[w] = bn;
                s[w] = one / p;
                Bk[w] = bn;
                Sk[w] = s[w];
            }
        }
        vd r[kV], a[kV], cnt[kV], best[kV], bidx[kV], bnorm[kV], bgam[kV], bneg[kV];
        for (int w = 0; w < kV; ++w) {
            bneg[w] = zero;
            r[w] = zero;
            a[w] = zero;
            cnt[w] = zero;
            best[w] = splat(std::numeric_limits<double>::infinity());
            bidx[w] = zero;
            bnorm[w] = one;
            bgam[w] = zero;
        }
        for (int k = 0; k < n_; ++k) {
            const vd dk = splat(d[k]);
            const vd kd = splat(static_cast<double>(k));
            const vd* Sn = k + 1 < n_ ? S + static_cast<std::size_t>(k + 1) * kV : nullptr;
            const vd* Bk = B + static_cast<std::size_t>(k) * kV;
            vd* Rk = R ? R + static_cast<std::size_t>(k) * kV : nullptr;
            for (int w = 0; w < kV; ++w) {
                vd an = one + a[w] * r[w] * r[w];
                an = an < clamp ? an : clamp;
                const vd dm = dk - sig[w];
                const vd g = dm - r[w] - (Sn ? Sn[w] : zero);
                const auto better = vabs(g) < best[w];
                best[w] = better ? vabs(g) : best[w];
                bidx[w] = better ? kd : bidx[w];
                bnorm[w] = better ? an + Bk[w] - one : bnorm[w];
                bgam[w] = better ? g : bgam[w];
                bneg[w] = better ? cnt[w] : bneg[w];
                const vd q = guard(dm - r[w]);
                cnt[w] += q < zero ? one : zero;
                r[w] = one / q;
                a[w] = an;
                if (Rk) Rk[w] = r[w];
            }
        }
        for (int l = 0; l < kLanes; ++l) {
            const int w = l / kW, i = l % kW;
            count_[l] = static_cast<int>(cnt[w][i]);
            twist_[l] = static_cast<int>(bidx[w][i]);
            norm2_[l] = bnorm[w][i];
            gamma_[l] = bgam[w][i];
            negleft_[l] = static_cast<int>(bneg[w][i]);
        }
    }

    // z_t = 1; left of the twist z_k = z_{k+1}/q_k, right of it z_k = S_k z_{k-1}.
    // all finished lanes in one pass over the stored pivots
    void build_vectors(const bool* which) {
        const double* R = reinterpret_cast<const double*>(R_.data());
        const double* S = reinterpret_cast<const double*>(S_.data());
        int ls[kLanes], tw[kLanes];
        double z[kLanes];
        int nl = 0;
        for (int l = 0; l < kLanes; ++l) {
            if (which[l]) {
                ls[nl] = l;
                tw[nl] = twist_[l];
                z[nl] = 1.0;
                ++nl;
            }
        }
        const auto n = static_cast<std::size_t>(n_);
        for (int k = n_ - 1; k >= 0; --k) {
            const double* Rk = R + static_cast<std::size_t>(k) * kLanes;
            for (int i = 0; i < nl; ++i) {
                if (k < tw[i]) z[i] *= Rk[ls[i]];
                if (k <= tw[i]) z_[ls[i] * n + k] = z[i];
            }
        }
        for (int i = 0; i < nl; ++i) z[i] = 1.0;
        for (int k = 0; k < n_; ++k) {
            const double* Sk = S + static_cast<std::size_t>(k) * kLanes;
            for (int i = 0; i < nl; ++i) {
                if (k > tw[i]) {
                    z[i] *= Sk[ls[i]];
                    z_[ls[i] * n + k] = z[i];
                }
            }
        }
    }

    void store_vector(int l, int slot, Sink& sink) {
        const double* zl = z_.data() + static_cast<std::size_t>(l) * n_;
        double nrm = 0.0;
        for (int k = 0; k < n_; ++k) nrm += zl[k] * zl[k];
        // sign of z at the first site is the parity of negative pivots left of the twist;
        // it holds even when that component underflows
        const double scale = ((negleft_[l] & 1) ? -1.0 : 1.0) / std::sqrt(nrm);
        Eigen::MatrixXd& V = *sink.vectors;
        if (sink.rows->empty()) {
            for (int k = 0; k < n_; ++k) V(k, slot) = zl[k] * scale;
        } else {
            const auto& rows = *sink.rows;
            for (std::size_t i = 0; i < rows.size(); ++i) V(static_cast<Eigen::Index>(i), slot) = zl[rows[i]] * scale;
        }
    }

    // tracked rows only: walk outwards from the twist. The norm is summed on the way;
    // the sweep's A_t + B_t - 1 is unreliable once a guarded pivot clamps the recursion.
    void store_sites(int l, int slot, Sink& sink) {
        const double* R = reinterpret_cast<const double*>(R_.data());
        const double* S = reinterpret_cast<const double*>(S_.data());
        const int t = twist_[l];
        const std::vector<int>& rows = *sink.rows;
        Eigen::MatrixXd& V = *sink.vectors;
        // rows are ascending; split at the twist
        const auto split = static_cast<int>(std::upper_bound(rows.begin(), rows.end(), t) - rows.begin());
        double nrm = 1.0, z = 1.0;
        int i = split - 1;
        for (int k = t; k >= 0; --k) {
            if (k < t) {
                z *= R[static_cast<std::size_t>(k) * kLanes + l];
                nrm += z * z;
            }
            if (i >= 0 && rows[i] == k) V(i--, slot) = z;
        }
        z = 1.0;
        i = split;
        for (int k = t + 1; k < n_; ++k) {
            z *= S[static_cast<std::size_t>(k) * kLanes + l];
            nrm += z * z;
            if (i < static_cast<int>(rows.size()) && rows[i] == k) V(i++, slot) = z;
        }
        const double scale = ((negleft_[l] & 1) ? -1.0 : 1.0) / std::sqrt(nrm);
        for (std::size_t r = 0; r < rows.size(); ++r) V(static_cast<Eigen::Index>(r), slot) *= scale;
    }

    const std::vector<double>& d_;
    int n_;
    double norm_;
    bool want_vectors_;
    bool sparse_;
    std::vector<vd> S_, B_, R_;
    std::vector<double> z_;
    int count_[kLanes] = {};
    int twist_[kLanes] = {};
    int negleft_[kLanes] = {};
    double norm2_[kLanes] = {};
    double gamma_[kLanes] = {};
    double lambda_[kLanes] = {};
    double resid_[kLanes] = {};
};

// ---- cluster path: inverse iteration with partial pivoting and Gram-Schmidt

struct TridiagLU {
    std::vector<double> dl, dd, du, du2;
    std::vector<int> swapped;
};

TridiagLU factor_shifted(const std::vector<double>& d, double sigma, double tiny) {
    const int n = static_cast<int>(d.size());
    TridiagLU f;
    f.dl.assign(static_cast<std::size_t>(std::max(n - 1, 0)), -1.0);
    f.du.assign(static_cast<std::size_t>(std::max(n - 1, 0)), -1.0);
    f.du2.assign(static_cast<std::size_t>(std::max(n - 2, 0)), 0.0);
    f.swapped.assign(static_cast<std::size_t>(std::max(n - 1, 0)), 0);
    f.dd.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) f.dd[i] = d[i] - sigma;
    for (int i = 0; i + 1 < n; ++i) {
        if (std::fabs(f.dd[i]) >= std::fabs(f.dl[i])) {
            if (f.dd[i] == 0.0) f.dd[i] = tiny;
            const double fact = f.dl[i] / f.dd[i];
            f.dl[i] = fact;
            f.dd[i + 1] -= fact * f.du[i];
        } else {
            const double fact = f.dd[i] / f.dl[i];
            f.dd[i] = f.dl[i];
            f.dl[i] = fact;
            const double temp = f.du[i];
            f.du[i] = f.dd[i + 1];
            f.dd[i + 1] = temp - fact * f.dd[i + 1];
            if (i + 2 < n) {
                f.du2[i] = f.du[i + 1];
                f.du[i + 1] = -fact * f.du[i + 1];
            }
            f.swapped[i] = 1;
        }
    }
    for (auto& x : f.dd) {
        if (std::fabs(x) < tiny) x = x < 0 ? -tiny : tiny;
    }
    return f;
}

void solve_shifted(const TridiagLU& f, std::vector<double>& b) {
    const int n = static_cast<int>(b.size());
    for (int i = 0; i + 1 < n; ++i) {
        if (f.swapped[i]) {
            std::swap(b[i], b[i + 1]);
        }
        b[i + 1] -= f.dl[i] * b[i];
    }
    b[n - 1] /= f.dd[n - 1];
    if (n > 1) b[n - 2] = (b[n - 2] - f.du[n - 2] * b[n - 1]) / f.dd[n - 2];
    for (int i = n - 3; i >= 0; --i) b[i] = (b[i] - f.du[i] * b[i + 1] - f.du2[i] * b[i + 2]) / f.dd[i];
}

// orthonormal basis for the invariant subspace of a tight group, then Rayleigh-Ritz
void refine_cluster(const TridiagonalOperator& op, std::vector<double>& lambda, Eigen::MatrixXd& Zc,
                    std::uint64_t tag) {
    const int n = op.size();
    const int m = static_cast<int>(lambda.size());
    const double norm = std::max(1.0, op.norm_bound());
    const double sep = 10.0 * kEps * norm;
    const double tiny = kEps * norm;
    Zc.resize(n, m);
    std::vector<double> sig(lambda);
    for (int j = 1; j < m; ++j) sig[j] = std::max(sig[j], sig[j - 1] + sep);
    std::vector<double> x(static_cast<std::size_t>(n));
    for (int j = 0; j < m; ++j) {
        const TridiagLU f = factor_shifted(op.diag, sig[j], tiny);
        for (int k = 0; k < n; ++k) {
            const auto u = philox4x64({static_cast<std::uint64_t>(k), 7, static_cast<std::uint64_t>(j), 0}, {tag, 0});
            x[k] = to_unit(u[0]) - 0.5;
        }
        // stop one step after the growth says the residual is at roundoff level
        const double enough = 0.3 / (std::pow(static_cast<double>(n), 1.5) * kEps * norm);
        bool grown = false;
        for (int it = 0; it < 5; ++it) {
            double nx = 0.0;
            for (double xi : x) nx += xi * xi;
            nx = std::sqrt(nx);
            for (double& xi : x) xi /= nx;
            solve_shifted(f, x);
            for (int pass = 0; pass < 2; ++pass) {
                for (int i = 0; i < j; ++i) {
                    double dot = 0.0;
                    for (int k = 0; k < n; ++k) dot += Zc(k, i) * x[k];
                    for (int k = 0; k < n; ++k) x[k] -= dot * Zc(k, i);
                }
            }
            if (grown) break;
            double ny = 0.0;
            for (double xi : x) ny += xi * xi;
            grown = std::sqrt(ny) >= enough;
        }
        double nx = 0.0;
        for (double xi : x) nx += xi * xi;
        nx = std::sqrt(nx);
        if (!(nx > 0.0) || !std::isfinite(nx)) {
            throw NumericalError("cluster inverse iteration broke down near eigenvalue " + std::to_string(lambda[j]));
        }
        for (int k = 0; k < n; ++k) Zc(k, j) = x[k] / nx;
    }
    // Rayleigh-Ritz inside the group
    Eigen::MatrixXd HZ(n, m);
    for (int j = 0; j < m; ++j) op.apply(Zc.col(j).data(), HZ.col(j).data());
    Eigen::MatrixXd K = Zc.transpose() * HZ;
    K = 0.5 * (K + K.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
    Zc = (Zc * es.eigenvectors()).eval();
    for (int j = 0; j < m; ++j) lambda[j] = es.eigenvalues()(j);
}

void fix_sign(double* col, int n) {
    for (int k = 0; k < n; ++k) {
        if (col[k] != 0.0) {
            if (col[k] < 0.0) {
                for (int i = 0; i < n; ++i) col[i] = -col[i];
            }
            return;
        }
    }
}

int leftmost_support(const double* col, int n) {
    double mx = 0.0;
    for (int k = 0; k < n; ++k) mx = std::max(mx, std::fabs(col[k]));
    for (int k = 0; k < n; ++k) {
        if (std::fabs(col[k]) >= 1e-3 * mx) return k;
    }
    return n;
}

}  // namespace

// ---------------------------------------------------------------- public

int eigenvalue_count_below(const TridiagonalOperator& op, double E) { return sturm_count(op.diag, E); }

std::vector<int> eigenvalue_counts_below(const TridiagonalOperator& op, const std::vector<double>& E) {
    std::vector<int> out(E.size());
    if (!E.empty()) sturm_counts(op.diag, E.data(), static_cast<int>(E.size()), out.data(), 1);
    return out;
}

namespace {

// A close group whose twisted vectors are already orthogonal keeps them: they
// resolve the tails of localized states far better than a rotated basis.
bool keep_twisted(const TridiagonalOperator& op, const std::vector<Cell>& singles, const std::vector<int>& cell_of,
                  int j, int e, double norm, Sink& sink) {
    std::vector<Cell> jobs;
    std::vector<int> sl;
    for (int c = j; c < e; ++c) {
        if (cell_of[c] < 0) return false;
        jobs.push_back(singles[cell_of[c]]);
        sl.push_back(c - j);
    }
    const int k = e - j;
    std::vector<double> vals(k), res(k);
    std::vector<char> ok(k, 0);
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(op.size(), k);
    const std::vector<int> all_rows;
    Sink tmp{&vals, &res, &Z, &all_rows, &ok, 0};
    TwistedLanes lanes(op.diag, norm, true);
    lanes.run(jobs, sl, tmp);
    const Eigen::MatrixXd G = Z.transpose() * Z - Eigen::MatrixXd::Identity(k, k);
    for (int a = 0; a < k; ++a) {
        if (std::fabs(G(a, a)) > kKeepOverlap) return false;
        for (int b = a + 1; b < k; ++b) {
            const double gap = std::fabs(vals[b] - vals[a]);
            const double tol =
                gap > 0.0 ? std::clamp(100.0 * std::numeric_limits<double>::epsilon() * norm / gap, kKeepOverlap, kKeepOverlapCap)
                          : kKeepOverlap;
            if (std::fabs(G(a, b)) > tol) return false;
        }
    }
    for (int c = 0; c < k; ++c) {
        (*sink.values)[j + c] = vals[c];
        (*sink.residuals)[j + c] = res[c];
        (*sink.converged)[j + c] = 1;
        Eigen::MatrixXd& V = *sink.vectors;
        if (sink.rows->empty()) {
            V.col(j + c) = Z.col(c);
        } else {
            for (std::size_t r = 0; r < sink.rows->size(); ++r) V(static_cast<Eigen::Index>(r), j + c) = Z((*sink.rows)[r], c);
        }
    }
    return true;
}

}  // namespace

SpectralData eigensystem(const TridiagonalOperator& op, std::optional<EnergyWindow> window) {
    EigenOptions o;
    o.window = window;
    return eigensystem(op, o);
}

SpectralData eigensystem(const TridiagonalOperator& op, const EigenOptions& options) {
    const int n = op.size();
    if (n < 1 || n != 2 * op.L) throw StructuralError("operator size must be 2L >= 2");
    const double norm = op.norm_bound();
    const double glo = op.gershgorin_lo() - 1e-3;
    const double ghi = op.gershgorin_hi() + 1e-3;

    // target index range
    int ilo = 0, ihi = n;
    if (options.window) {
        if (!(options.window->lo <= options.window->hi)) throw ParameterError("energy window must have lo <= hi");
        ilo = sturm_count(op.diag, options.window->lo);
        ihi = sturm_count(op.diag, std::nextafter(options.window->hi, std::numeric_limits<double>::infinity()));
    }
    const int m = ihi - ilo;
    // compute a couple of neighbours outside a window so that clusters at its edge are handled whole
    const int pad = options.window ? 2 : 0;
    const int jlo = std::max(0, ilo - pad);
    const int jhi = std::min(n, ihi + pad);
    const int mm = jhi - jlo;

    std::vector<int> rows;
    std::vector<int> sites;
    const bool want_vectors = options.vectors != VectorMode::none;
    if (options.vectors == VectorMode::sites) {
        sites = options.sites;
        std::sort(sites.begin(), sites.end());
        sites.erase(std::unique(sites.begin(), sites.end()), sites.end());
        for (int x : sites) {
            if (x < -op.L || x > op.L - 1) throw RangeError("tracked site " + std::to_string(x) + " outside box");
            rows.push_back(x + op.L);
        }
    } else if (options.vectors == VectorMode::all) {
        sites.resize(static_cast<std::size_t>(n));
        std::iota(sites.begin(), sites.end(), -op.L);
    }

    std::vector<double> values(static_cast<std::size_t>(mm), 0.0);
    std::vector<double> resid(static_cast<std::size_t>(mm), 0.0);
    std::vector<char> done(static_cast<std::size_t>(mm), 0);
    Eigen::MatrixXd V;
    if (want_vectors) V.setZero(options.vectors == VectorMode::all ? n : static_cast<Eigen::Index>(rows.size()), mm);

    SpectralDiagnostics diag;
    diag.norm = norm;
    if (mm > 0) {
        const int clo = options.window ? sturm_count(op.diag, glo) : 0;
        const int chi = options.window ? sturm_count(op.diag, ghi) : n;
        Isolation iso = isolate(op.diag, glo, ghi, clo, chi, jlo, jhi, norm, options.threads);

        std::vector<int> slot(iso.singles.size());
        for (std::size_t i = 0; i < iso.singles.size(); ++i) slot[i] = iso.singles[i].clo - jlo;
        const int T = std::max(1, options.threads);
        const int njobs = static_cast<int>(iso.singles.size());
        std::vector<int> steps(static_cast<std::size_t>(T), 0);
        parallel_for(T, njobs, [&](int b, int e) {
            std::vector<Cell> jobs(iso.singles.begin() + b, iso.singles.begin() + e);
            std::vector<int> sl(slot.begin() + b, slot.begin() + e);
            Sink sink{&values, &resid, &V, &rows, &done, 0};
            TwistedLanes lanes(op.diag, norm, want_vectors, options.vectors == VectorMode::sites);
            const int s = lanes.run(jobs, sl, sink);
            const int t = static_cast<int>(static_cast<long long>(b) * T / std::max(1, njobs));
            steps[std::min(t, T - 1)] += s;
        });
        for (int s : steps) diag.bisection_steps += s;

        // unresolved cells: all eigenvalues sit at the cell centre for now
        for (const auto& c : iso.unresolved) {
            for (int i = std::max(c.clo, jlo); i < std::min(c.chi, jhi); ++i) {
                values[i - jlo] = c.lo + 0.5 * (c.hi - c.lo);
                done[i - jlo] = 2;
            }
        }

        std::vector<int> cell_of(static_cast<std::size_t>(mm), -1);
        for (std::size_t i = 0; i < iso.singles.size(); ++i) cell_of[slot[i]] = static_cast<int>(i);
        Sink sink_all{&values, &resid, &V, &rows, &done, 0};

        // groups of close eigenvalues (including unresolved cells) are redone together
        const double gap_tol = options.cluster_gap * std::max(1.0, norm);
        int j = 0;
        while (j < mm) {
            int e = j + 1;
            while (e < mm && values[e] - values[e - 1] < gap_tol) ++e;
            if (e - j >= 2) {
                ++diag.clusters;
                diag.largest_cluster = std::max(diag.largest_cluster, e - j);
                std::vector<double> lam(values.begin() + j, values.begin() + e);
                if (want_vectors && keep_twisted(op, iso.singles, cell_of, j, e, norm, sink_all)) {
                    --diag.clusters;
                } else if (!want_vectors) {
                    for (int c = j; c < e; ++c) done[c] = 1;
                } else {
                    Eigen::MatrixXd Zc;
                    refine_cluster(op, lam, Zc, static_cast<std::uint64_t>(jlo + j));
                    // tie ordering: leftmost support first within near-equal eigenvalues
                    std::vector<int> ord(static_cast<std::size_t>(e - j));
                    std::iota(ord.begin(), ord.end(), 0);
                    for (int c = 0; c < e - j; ++c) fix_sign(Zc.col(c).data(), n);
                    const double tie = 1e-14 * std::max(1.0, norm);
                    std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) {
                        if (std::fabs(lam[a] - lam[b]) > tie) return lam[a] < lam[b];
                        return leftmost_support(Zc.col(a).data(), n) < leftmost_support(Zc.col(b).data(), n);
                    });
                    for (int c = 0; c < e - j; ++c) {
                        const int src = ord[c];
                        values[j + c] = lam[src];
                        done[j + c] = 1;
                        Eigen::VectorXd col = Zc.col(src);
                        Eigen::VectorXd Hc(n);
                        op.apply(col.data(), Hc.data());
                        resid[j + c] = (Hc - lam[src] * col).norm();
                        if (!want_vectors) continue;
                        if (options.vectors == VectorMode::all) {
                            V.col(j + c) = col;
                        } else {
                            for (std::size_t r = 0; r < rows.size(); ++r) V(static_cast<Eigen::Index>(r), j + c) = col(rows[r]);
                        }
                    }
                }
            }
            j = e;
        }
        for (int i = 0; i < mm; ++i) {
            if (!done[i]) throw NumericalError("eigenpair " + std::to_string(jlo + i) + " was not computed");
        }
    }

    // drop the window padding
    const int off = ilo - jlo;
    std::vector<double> outv(values.begin() + off, values.begin() + off + m);
    std::vector<double> outr(resid.begin() + off, resid.begin() + off + m);
    Eigen::MatrixXd outV;
    if (want_vectors) outV = V.middleCols(off, m);

    if (options.vectors == VectorMode::all) {
        for (int c = 0; c < m; ++c) {
            Eigen::VectorXd Hc(n);
            op.apply(outV.col(c).data(), Hc.data());
            outr[c] = (Hc - outv[c] * outV.col(c)).norm();
        }
    }
    diag.min_gap = std::numeric_limits<double>::infinity();
    for (int c = 1; c < m; ++c) {
        const double g = outv[c] - outv[c - 1];
        diag.min_gap = std::min(diag.min_gap, g);
        if (g <= 1e-14 * std::max(1.0, norm)) ++diag.near_degenerate;
    }
    for (double r : outr) diag.max_residual = std::max(diag.max_residual, r);
    return SpectralData(op.L, ilo, std::move(outv), std::move(sites), std::move(outV), std::move(outr), diag);
}

std::vector<double> residual_norms(const TridiagonalOperator& op, const SpectralData& spec) {
    if (!spec.has_vectors() || spec.vectors().rows() != op.size()) {
        throw ContractError("residual_norms needs full eigenvectors");
    }
    std::vector<double> out(static_cast<std::size_t>(spec.count()));
    Eigen::VectorXd Hc(op.size());
    for (int j = 0; j < spec.count(); ++j) {
        op.apply(spec.vectors().col(j).data(), Hc.data());
        out[j] = (Hc - spec.eigenvalue(j) * spec.vectors().col(j)).norm();
    }
    return out;
}

double orthogonality_defect(const SpectralData& spec) {
    const Eigen::MatrixXd G = spec.vectors().transpose() * spec.vectors();
    return (G - Eigen::MatrixXd::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff();
}

void write_residual_csv(std::ostream& os, const SpectralData& spec) {
    os << "index,eigenvalue,residual\n";
    for (int j = 0; j < spec.count(); ++j) {
        os << spec.first_index() + j << ',' << fmt17(spec.eigenvalue(j)) << ',' << fmt17(spec.residuals()[j]) << '\n';
    }
}

}  // namespace rdm
