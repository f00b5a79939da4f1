#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "rdm/criticality.hpp"
#include "rdm/disorder.hpp"
#include "rdm/entropy.hpp"

namespace rdm {

// bulk: {1..L} inside a box of half-width ceil(host * L)
// positioned: [L1, L2 - 1] from (gamma, delta) in the box of half-width L
// boundary: the same with gamma = 0, attached to the left edge
enum class RegionMode { bulk, positioned, boundary };
const char* to_string(RegionMode m);
RegionMode parse_region_mode(const std::string& s);

struct SweepPlan {
    std::string name = "sweep";
    std::vector<int> L_grid;
    int samples = 1;
    std::vector<double> E_F = {0.0};
    double v = 0.3;
    double p_plus = 0.5;
    DimerPhase phase = DimerPhase::even;
    double gamma = 0.0;
    double delta = 0.05;
    double alpha = kDefaultAlpha;
    RegionMode region = RegionMode::bulk;
    double host = 1.5;            // bulk mode only
    std::uint64_t master_seed = 0;
    int workers = 0;              // 0: RDM_WORKERS, else 1
    int burn_in = 512;            // fits use L >= burn_in
    double delta0 = 0.1;          // boundary mode warns above this
    // exceptional-event proxy at critical E_F; both 0 disables it
    double spacing_cap = 0.0;
    double flatness_cap = 0.0;

    // PlanError on an empty or non-increasing grid, samples < 1, bad model parameters
    void validate() const;
    DisorderParams disorder() const;
    // box half-width and region for one grid point
    int box_half_width(int L) const;
    Region region_for(int L) const;
};

// worker count: plan value, else RDM_WORKERS, else 1
int resolve_workers(int plan_workers);

struct SampleRecord {
    int L = 0;
    std::uint64_t sample_index = 0;
    double E_F = 0.0;
    int box_L = 0;
    Region region;
    double S = 0.0;
    double Q = 0.0;
    bool ok = false;
    bool bad = false;             // exceptional-event proxy fired
    std::string error;
};

struct LevelSummary {
    int L = 0;
    double E_F = 0.0;
    int n = 0;                    // successful samples
    int failed = 0;
    double mean_S = 0.0;
    double stderr_S = 0.0;        // sample std / sqrt(n)
    double mean_Q = 0.0;
    double stderr_Q = 0.0;
    double bad_fraction = 0.0;
};

struct SeriesPoint {
    double L = 0.0;
    double mean = 0.0;
    double stderr_ = 0.0;
};

struct FitResult {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
    double intercept_stderr = 0.0;
    double r2 = 0.0;
    int points = 0;
    bool weighted = false;        // inverse-variance weights (else equal weights, residual variance)
    double ci_lo = 0.0;           // 95% interval for the slope
    double ci_hi = 0.0;
    std::vector<double> residuals;
};

// mean = slope ln L + intercept; weights 1/stderr^2 when every stderr is positive.
// FitError with fewer than 3 points or a single distinct L.
FitResult fit_log_scaling(const std::vector<SeriesPoint>& series);

struct ScalingSeries {
    double E_F = 0.0;
    std::vector<LevelSummary> levels;  // by L
    FitResult fit;                     // of mean S over L >= burn_in
    FitResult fit_Q;
    bool fitted = false;
    std::string fit_error;
};

struct ScalingResult {
    SweepPlan plan;
    std::vector<SampleRecord> records;  // ordered by (E_F index, L, sample)
    std::vector<ScalingSeries> series;  // one per E_F
    int failed = 0;
    std::vector<std::string> warnings;
};

// one task
SampleRecord run_sample(const SweepPlan& plan, int L, std::uint64_t sample_index, double E_F);
ScalingResult run_sweep(const SweepPlan& plan);
// recompute summaries and fits from records (used by run_sweep)
void summarize(ScalingResult& result);

struct Comparison {
    double slope_critical = 0.0;
    double ci_lo_critical = 0.0;
    double ci_hi_critical = 0.0;
    double slope_control = 0.0;
    double ci_lo_control = 0.0;
    double ci_hi_control = 0.0;
    double last_difference = 0.0;      // control mean S at the last two grid points
    double combined_stderr = 0.0;
    bool enhanced = false;             // critical CI above 0
    bool plateau = false;              // |last difference| < 2 combined stderr
    bool area_law = false;             // control CI contains 0 and plateau
};
// series: the first E_F series of each result; FitError if either is not fitted
Comparison critical_vs_localized(const ScalingResult& critical, const ScalingResult& control);

// per realization Q/ln L (and S/ln L) over the grid
struct RatioTrajectory {
    std::uint64_t sample_index = 0;
    std::vector<int> L;
    std::vector<double> q_ratio;
    std::vector<double> s_ratio;
    double min_top_half = 0.0;  // min of q_ratio over the upper half of the grid
    bool complete = true;       // every grid point succeeded
};
struct BoundaryCheck {
    std::vector<RatioTrajectory> trajectories;
    double floor = 0.0;
    double fraction_above = 0.0;  // among complete trajectories
    bool delta_warning = false;
};
BoundaryCheck boundary_ratio_check(const ScalingResult& result, double floor);
// the ratio of a synthetic value to ln L, one helper so the series logic is testable alone
RatioTrajectory ratio_trajectory(std::uint64_t sample_index, const std::vector<int>& L, const std::vector<double>& Q,
                                 const std::vector<double>& S);

// CSV: one row per (E_F, L, sample); columns fixed, see README
void write_records_csv(std::ostream& os, const ScalingResult& result);
// JSON summary: per-level means, fits, warnings
std::string summary_json(const ScalingResult& result);

}  // namespace rdm
