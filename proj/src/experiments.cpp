#include "rdm/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <ostream>
#include <thread>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "rdm/error.hpp"
#include "rdm/format.hpp"
#include "rdm/hamiltonian.hpp"

namespace rdm {

const char* to_string(RegionMode m) {
    switch (m) {
        case RegionMode::bulk: return "bulk";
        case RegionMode::positioned: return "positioned";
        case RegionMode::boundary: return "boundary";
    }
    return "?";
}

RegionMode parse_region_mode(const std::string& s) {
    if (s == "bulk") return RegionMode::bulk;
    if (s == "positioned") return RegionMode::positioned;
    if (s == "boundary") return RegionMode::boundary;
    throw PlanError("unknown region mode '" + s + "' (bulk, positioned, boundary)");
}

void SweepPlan::validate() const {
    if (L_grid.empty()) throw PlanError("empty L grid");
    for (std::size_t i = 0; i < L_grid.size(); ++i) {
        if (L_grid[i] < 1) throw PlanError("grid values must be positive");
        if (i > 0 && L_grid[i] <= L_grid[i - 1]) throw PlanError("L grid must be strictly increasing");
    }
    if (samples < 1) throw PlanError("samples must be at least 1");
    if (E_F.empty()) throw PlanError("no Fermi energy given");
    try {
        disorder().validate();
    } catch (const ParameterError& e) {
        throw PlanError(e.what());
    }
    if (!(alpha > 0.0)) throw PlanError("alpha must be positive");
    if (workers < 0) throw PlanError("workers must be >= 0");
    if (burn_in < 0) throw PlanError("burn_in must be >= 0");
    if (region == RegionMode::bulk && !(host > 1.0)) throw PlanError("host factor must exceed 1");
    if (region == RegionMode::positioned && !(gamma > 0.0)) throw PlanError("positioned regions need gamma > 0");
    if (region != RegionMode::bulk && !(delta > 0.0 && gamma + delta < 2.0))
        throw PlanError("need 0 < delta and gamma + delta < 2");
    if (spacing_cap < 0.0 || flatness_cap < 0.0) throw PlanError("caps must be >= 0");
}

DisorderParams SweepPlan::disorder() const {
    DisorderParams p;
    p.v = v;
    p.p_plus = p_plus;
    p.master_seed = master_seed;
    p.phase = phase;
    return p;
}

int SweepPlan::box_half_width(int L) const {
    if (region == RegionMode::bulk) return static_cast<int>(std::ceil(host * L));
    return L;
}

Region SweepPlan::region_for(int L) const {
    switch (region) {
        case RegionMode::bulk: return make_region(1, L);
        case RegionMode::positioned: return box_position(L, gamma, delta);
        case RegionMode::boundary: return box_position(L, 0.0, delta);
    }
    throw PlanError("bad region mode");
}

int resolve_workers(int plan_workers) {
    if (plan_workers > 0) return plan_workers;
    if (const char* env = std::getenv("RDM_WORKERS")) {
        char* end = nullptr;
        const long w = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && w > 0) return static_cast<int>(std::min<long>(w, 1024));
        throw PlanError(std::string("RDM_WORKERS must be a positive integer, got '") + env + "'");
    }
    return 1;
}

SampleRecord run_sample(const SweepPlan& plan, int L, std::uint64_t sample_index, double E_F) {
    SampleRecord r;
    r.L = L;
    r.sample_index = sample_index;
    r.E_F = E_F;
    try {
        const DisorderParams params = plan.disorder();
        r.box_L = plan.box_half_width(L);
        r.region = plan.region_for(L);
        const PotentialConfig cfg = sample_config(params, r.box_L, sample_index);
        const TridiagonalOperator op = build_hamiltonian(cfg, params);
        const EntropyResult e = region_entropy(op, r.region, E_F);
        r.S = e.S;
        r.Q = e.Q;
        const bool critical = E_F == 0.0 || E_F == plan.v;
        if (critical && (plan.spacing_cap > 0.0 || plan.flatness_cap > 0.0)) {
            WindowCaps caps;
            caps.spacing_ratio = plan.spacing_cap > 0.0 ? plan.spacing_cap : std::numeric_limits<double>::infinity();
            caps.flatness_C = plan.flatness_cap > 0.0 ? plan.flatness_cap : std::numeric_limits<double>::infinity();
            r.bad = analyze_window(op, make_window(plan.v, E_F, r.box_L, plan.alpha), caps).bad();
        }
        r.ok = true;
    } catch (const std::exception& e) {
        r.ok = false;
        r.error = e.what();
    }
    return r;
}

namespace {

// two-sided 95% quantiles
double t95(int dof) {
    if (dof < 1) return std::numeric_limits<double>::infinity();
    return boost::math::quantile(boost::math::students_t(dof), 0.975);
}

double z95() { return boost::math::quantile(boost::math::normal(), 0.975); }

}  // namespace

FitResult fit_log_scaling(const std::vector<SeriesPoint>& series) {
    const int n = static_cast<int>(series.size());
    if (n < 3) throw FitError("need at least 3 grid points, got " + std::to_string(n));
    bool distinct = false;
    for (const auto& p : series) {
        if (!(p.L > 0.0)) throw FitError("L must be positive");
        if (p.L != series.front().L) distinct = true;
    }
    if (!distinct) throw FitError("degenerate design: a single L");
    FitResult f;
    f.points = n;
    f.weighted = std::all_of(series.begin(), series.end(), [](const SeriesPoint& p) { return p.stderr_ > 0.0; });
    std::vector<double> x(n), y(n), w(n);
    for (int i = 0; i < n; ++i) {
        x[i] = std::log(series[i].L);
        y[i] = series[i].mean;
        w[i] = f.weighted ? 1.0 / (series[i].stderr_ * series[i].stderr_) : 1.0;
    }
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (int i = 0; i < n; ++i) {
        sw += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
    }
    const double xm = sx / sw, ym = sy / sw;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (int i = 0; i < n; ++i) {
        sxx += w[i] * (x[i] - xm) * (x[i] - xm);
        sxy += w[i] * (x[i] - xm) * (y[i] - ym);
        syy += w[i] * (y[i] - ym) * (y[i] - ym);
    }
    f.slope = sxy / sxx;
    f.intercept = ym - f.slope * xm;
    double chi2 = 0.0;
    f.residuals.resize(n);
    for (int i = 0; i < n; ++i) {
        f.residuals[i] = y[i] - (f.intercept + f.slope * x[i]);
        chi2 += w[i] * f.residuals[i] * f.residuals[i];
    }
    const int dof = n - 2;
    f.r2 = syy > 0.0 ? 1.0 - chi2 / syy : 1.0;
    double scale;  // variance multiplier
    double q;
    if (f.weighted) {
        // known variances, inflated when the points scatter more than their error bars
        scale = std::max(1.0, chi2 / dof);
        q = z95();
    } else {
        scale = chi2 / dof;
        q = t95(dof);
    }
    f.slope_stderr = std::sqrt(scale / sxx);
    f.intercept_stderr = std::sqrt(scale * (1.0 / sw + xm * xm / sxx));
    f.ci_lo = f.slope - q * f.slope_stderr;
    f.ci_hi = f.slope + q * f.slope_stderr;
    return f;
}

void summarize(ScalingResult& res) {
    const SweepPlan& plan = res.plan;
    res.series.clear();
    res.failed = 0;
    for (const auto& r : res.records)
        if (!r.ok) ++res.failed;
    for (double E : plan.E_F) {
        ScalingSeries s;
        s.E_F = E;
        for (int L : plan.L_grid) {
            LevelSummary lv;
            lv.L = L;
            lv.E_F = E;
            std::vector<double> S, Q;
            int bad = 0;
            for (const auto& r : res.records) {
                if (r.L != L || r.E_F != E) continue;
                if (!r.ok) {
                    ++lv.failed;
                    continue;
                }
                S.push_back(r.S);
                Q.push_back(r.Q);
                if (r.bad) ++bad;
            }
            lv.n = static_cast<int>(S.size());
            auto stats = [&](const std::vector<double>& a, double& mean, double& se) {
                mean = se = 0.0;
                if (a.empty()) return;
                double sum = 0.0;
                for (double t : a) sum += t;
                mean = sum / a.size();
                if (a.size() < 2) return;
                double ss = 0.0;
                for (double t : a) ss += (t - mean) * (t - mean);
                se = std::sqrt(ss / (a.size() - 1)) / std::sqrt(static_cast<double>(a.size()));
            };
            stats(S, lv.mean_S, lv.stderr_S);
            stats(Q, lv.mean_Q, lv.stderr_Q);
            lv.bad_fraction = lv.n ? static_cast<double>(bad) / lv.n : 0.0;
            s.levels.push_back(lv);
        }
        std::vector<SeriesPoint> ps, pq;
        for (const auto& lv : s.levels) {
            if (lv.L < plan.burn_in || lv.n == 0) continue;
            ps.push_back({static_cast<double>(lv.L), lv.mean_S, lv.stderr_S});
            pq.push_back({static_cast<double>(lv.L), lv.mean_Q, lv.stderr_Q});
        }
        try {
            s.fit = fit_log_scaling(ps);
            s.fit_Q = fit_log_scaling(pq);
            s.fitted = true;
        } catch (const FitError& e) {
            s.fit_error = e.what();
        }
        res.series.push_back(std::move(s));
    }
}

ScalingResult run_sweep(const SweepPlan& plan) {
    plan.validate();
    ScalingResult res;
    res.plan = plan;
    if (plan.region == RegionMode::boundary && plan.delta > plan.delta0)
        res.warnings.push_back("delta " + fmt17(plan.delta) + " above the configured delta0 " + fmt17(plan.delta0));

    struct Task {
        double E_F;
        int L;
        std::uint64_t s;
    };
    std::vector<Task> tasks;
    for (double E : plan.E_F)
        for (int L : plan.L_grid)
            for (int s = 0; s < plan.samples; ++s) tasks.push_back({E, L, static_cast<std::uint64_t>(s)});
    res.records.resize(tasks.size());

    const int workers = std::min<int>(resolve_workers(plan.workers), static_cast<int>(tasks.size()));
    // largest boxes first so the tail is short; results still land in their fixed slots
    std::vector<std::size_t> order(tasks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return tasks[a].L > tasks[b].L; });
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= order.size()) return;
            const Task& t = tasks[order[i]];
            res.records[order[i]] = run_sample(plan, t.L, t.s, t.E_F);
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    summarize(res);
    return res;
}

Comparison critical_vs_localized(const ScalingResult& critical, const ScalingResult& control) {
    if (critical.series.empty() || control.series.empty()) throw FitError("missing series");
    const ScalingSeries& c = critical.series.front();
    const ScalingSeries& o = control.series.front();
    if (!c.fitted) throw FitError("critical series not fitted: " + c.fit_error);
    if (!o.fitted) throw FitError("control series not fitted: " + o.fit_error);
    Comparison cmp;
    cmp.slope_critical = c.fit.slope;
    cmp.ci_lo_critical = c.fit.ci_lo;
    cmp.ci_hi_critical = c.fit.ci_hi;
    cmp.slope_control = o.fit.slope;
    cmp.ci_lo_control = o.fit.ci_lo;
    cmp.ci_hi_control = o.fit.ci_hi;
    cmp.enhanced = c.fit.ci_lo > 0.0;
    std::vector<const LevelSummary*> lv;
    for (const auto& l : o.levels)
        if (l.n > 0) lv.push_back(&l);
    if (lv.size() >= 2) {
        const LevelSummary& a = *lv[lv.size() - 2];
        const LevelSummary& b = *lv.back();
        cmp.last_difference = b.mean_S - a.mean_S;
        cmp.combined_stderr = std::sqrt(a.stderr_S * a.stderr_S + b.stderr_S * b.stderr_S);
        cmp.plateau = std::fabs(cmp.last_difference) < 2.0 * cmp.combined_stderr;
    }
    cmp.area_law = cmp.plateau && o.fit.ci_lo <= 0.0 && o.fit.ci_hi >= 0.0;
    return cmp;
}

RatioTrajectory ratio_trajectory(std::uint64_t sample_index, const std::vector<int>& L, const std::vector<double>& Q,
                                 const std::vector<double>& S) {
    if (Q.size() != L.size() || S.size() != L.size()) throw StructuralError("series lengths differ");
    RatioTrajectory t;
    t.sample_index = sample_index;
    t.L = L;
    for (std::size_t i = 0; i < L.size(); ++i) {
        if (L[i] < 2) throw DomainError("ln L must be positive");
        const double ln = std::log(static_cast<double>(L[i]));
        t.q_ratio.push_back(Q[i] / ln);
        t.s_ratio.push_back(S[i] / ln);
    }
    // upper half of the grid: the last ceil(n/2) points
    const std::size_t from = L.size() / 2;
    t.min_top_half = std::numeric_limits<double>::infinity();
    for (std::size_t i = from; i < L.size(); ++i) t.min_top_half = std::min(t.min_top_half, t.q_ratio[i]);
    return t;
}

BoundaryCheck boundary_ratio_check(const ScalingResult& result, double floor) {
    BoundaryCheck bc;
    bc.floor = floor;
    const SweepPlan& plan = result.plan;
    bc.delta_warning = plan.region == RegionMode::boundary && plan.delta > plan.delta0;
    if (plan.E_F.empty()) return bc;
    const double E = plan.E_F.front();
    int complete = 0, above = 0;
    for (int s = 0; s < plan.samples; ++s) {
        std::vector<int> Ls;
        std::vector<double> Q, S;
        bool all = true;
        for (int L : plan.L_grid) {
            for (const auto& r : result.records) {
                if (r.L != L || r.E_F != E || r.sample_index != static_cast<std::uint64_t>(s)) continue;
                if (!r.ok) {
                    all = false;
                    continue;
                }
                Ls.push_back(L);
                Q.push_back(r.Q);
                S.push_back(r.S);
            }
        }
        RatioTrajectory t = ratio_trajectory(static_cast<std::uint64_t>(s), Ls, Q, S);
        t.complete = all && Ls.size() == plan.L_grid.size();
        if (t.complete) {
            ++complete;
            if (t.min_top_half > floor) ++above;
        }
        bc.trajectories.push_back(std::move(t));
    }
    bc.fraction_above = complete ? static_cast<double>(above) / complete : 0.0;
    return bc;
}

namespace {

std::string clean(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ';';
    return s;
}

}  // namespace

void write_records_csv(std::ostream& os, const ScalingResult& result) {
    os << "E_F,L,sample_index,box_L,region_x1,region_x2,S,Q,ok,bad,error\n";
    for (const auto& r : result.records) {
        os << fmt17(r.E_F) << ',' << r.L << ',' << r.sample_index << ',' << r.box_L << ',' << r.region.x1 << ','
           << r.region.x2 << ',' << fmt17(r.S) << ',' << fmt17(r.Q) << ',' << (r.ok ? 1 : 0) << ',' << (r.bad ? 1 : 0)
           << ',' << clean(r.error) << '\n';
    }
}

std::string summary_json(const ScalingResult& result) {
    using nlohmann::ordered_json;
    ordered_json j;
    const SweepPlan& p = result.plan;
    j["name"] = p.name;
    j["failed"] = result.failed;
    j["warnings"] = result.warnings;
    ordered_json series = ordered_json::array();
    for (const auto& s : result.series) {
        ordered_json js;
        js["E_F"] = fmt17(s.E_F);
        ordered_json levels = ordered_json::array();
        for (const auto& lv : s.levels) {
            levels.push_back({{"L", lv.L},
                              {"n", lv.n},
                              {"failed", lv.failed},
                              {"mean_S", fmt17(lv.mean_S)},
                              {"stderr_S", fmt17(lv.stderr_S)},
                              {"mean_Q", fmt17(lv.mean_Q)},
                              {"stderr_Q", fmt17(lv.stderr_Q)},
                              {"bad_fraction", fmt17(lv.bad_fraction)}});
        }
        js["levels"] = levels;
        auto fit = [](const FitResult& f) {
            return ordered_json{{"slope", fmt17(f.slope)},
                                {"intercept", fmt17(f.intercept)},
                                {"slope_stderr", fmt17(f.slope_stderr)},
                                {"ci95", {fmt17(f.ci_lo), fmt17(f.ci_hi)}},
                                {"r2", fmt17(f.r2)},
                                {"points", f.points},
                                {"weighted", f.weighted}};
        };
        if (s.fitted) {
            js["fit_S"] = fit(s.fit);
            js["fit_Q"] = fit(s.fit_Q);
        } else {
            js["fit_error"] = s.fit_error;
        }
        series.push_back(js);
    }
    j["series"] = series;
    return j.dump(2);
}

}  // namespace rdm
