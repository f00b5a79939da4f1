#include "rdm/cli_io.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <ctime>
#include <istream>
#include <ostream>
#include <sstream>

#include "rdm/error.hpp"
#include "rdm/format.hpp"

namespace rdm {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<std::pair<std::string, std::string>> tolerance_table() {
    return {{"eig_step", "1e-14*norm"},        {"eig_residual", "1e-11*norm"}, {"cluster_gap", "1e-6*norm"},
            {"cluster_keep_overlap", "min(2e-11,max(1e-12,100*eps*norm/gap))"}, {"fermi_tie", "1e-14*norm"},    {"occupation_slack", fmt17(kOccupationSlack)},
            {"dense_region_max", std::to_string(kDenseRegionMax)}};
}

void write_manifest_header(std::ostream& os, const Manifest& m) {
    os << "# tool: " << m.tool << '\n';
    os << "# plan_hash: " << m.plan_hash << '\n';
    os << "# master_seed: " << m.master_seed << '\n';
    if (!m.schema.empty()) os << "# schema: " << m.schema << '\n';
    std::string tol;
    for (const auto& [k, v] : tolerance_table()) tol += (tol.empty() ? "" : " ") + k + "=" + v;
    os << "# tolerances: " << tol << '\n';
}

void write_manifest_file(std::ostream& os, const Manifest& m) {
    write_manifest_header(os, m);
    os << "# timestamp: " << m.timestamp << '\n';
}

std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

bool PlanAssertion::holds(double x) const {
    if (op == ">") return x > value;
    if (op == ">=") return x >= value;
    if (op == "<") return x < value;
    if (op == "<=") return x <= value;
    if (op == "==") return x == value;
    if (op == "!=") return x != value;
    return false;
}

std::string PlanAssertion::text() const { return metric + " " + op + " " + fmt17(value); }

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double d = 0.0;
    try {
        d = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw PlanError("key '" + key + "': not a number: '" + v + "'");
    }
    if (pos != v.size()) throw PlanError("key '" + key + "': not a number: '" + v + "'");
    return d;
}

long long to_integer(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    long long d = 0;
    try {
        d = std::stoll(v, &pos);
    } catch (const std::exception&) {
        throw PlanError("key '" + key + "': not an integer: '" + v + "'");
    }
    if (pos != v.size()) throw PlanError("key '" + key + "': not an integer: '" + v + "'");
    return d;
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',' || c == ' ' || c == '\t') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

void apply_key(PlanSection& s, const std::string& key, const std::string& v) {
    SweepPlan& p = s.plan;
    if (key == "L") {
        p.L_grid.clear();
        for (const auto& t : split_list(v)) p.L_grid.push_back(static_cast<int>(to_integer(key, t)));
    } else if (key == "samples") {
        p.samples = static_cast<int>(to_integer(key, v));
    } else if (key == "E_F") {
        p.E_F.clear();
        for (const auto& t : split_list(v)) p.E_F.push_back(to_double(key, t));
    } else if (key == "v") {
        p.v = to_double(key, v);
    } else if (key == "p_plus") {
        p.p_plus = to_double(key, v);
    } else if (key == "phase") {
        try {
            p.phase = parse_dimer_phase(v);
        } catch (const Error& e) {
            throw PlanError(e.what());
        }
    } else if (key == "gamma") {
        p.gamma = to_double(key, v);
    } else if (key == "delta") {
        p.delta = to_double(key, v);
    } else if (key == "alpha") {
        p.alpha = to_double(key, v);
    } else if (key == "region") {
        p.region = parse_region_mode(v);
    } else if (key == "host") {
        p.host = to_double(key, v);
    } else if (key == "seed") {
        const long long x = to_integer(key, v);
        if (x < 0) throw PlanError("seed must be >= 0");
        p.master_seed = static_cast<std::uint64_t>(x);
    } else if (key == "workers") {
        p.workers = static_cast<int>(to_integer(key, v));
    } else if (key == "burn_in") {
        p.burn_in = static_cast<int>(to_integer(key, v));
    } else if (key == "delta0") {
        p.delta0 = to_double(key, v);
    } else if (key == "spacing_cap") {
        p.spacing_cap = to_double(key, v);
    } else if (key == "flatness_cap") {
        p.flatness_cap = to_double(key, v);
    } else if (key == "ratio_floor") {
        s.ratio_floor = to_double(key, v);
    } else {
        throw PlanError("unknown key '" + key + "'");
    }
}

}  // namespace

PlanAssertion parse_assertion(const std::string& s) {
    std::istringstream is(s);
    PlanAssertion a;
    std::string value, extra;
    if (!(is >> a.metric >> a.op >> value) || (is >> extra)) throw PlanError("malformed assertion '" + s + "'");
    static const char* ops[] = {">", ">=", "<", "<=", "==", "!="};
    if (std::find(std::begin(ops), std::end(ops), a.op) == std::end(ops))
        throw PlanError("unknown comparison '" + a.op + "'");
    a.value = to_double(a.metric, value);
    return a;
}

PlanFile parse_plan(std::istream& is) {
    struct Entry {
        std::string key, value;
        int line;
    };
    std::vector<Entry> defaults;
    std::vector<std::pair<std::string, std::vector<Entry>>> sections;
    PlanFile pf;
    std::string line;
    int no = 0;
    while (std::getline(is, line)) {
        ++no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        try {
            if (line.front() == '[') {
                if (line.back() != ']') throw PlanError("unterminated section header");
                const std::string name = trim(line.substr(1, line.size() - 2));
                if (name.empty()) throw PlanError("empty section name");
                for (const auto& s : sections)
                    if (s.first == name) throw PlanError("duplicate section '" + name + "'");
                sections.push_back({name, {}});
            } else if (line.rfind("assert", 0) == 0 && (line.size() == 6 || line[6] == ' ' || line[6] == '\t')) {
                pf.asserts.push_back(parse_assertion(line.substr(6)));
            } else {
                const auto eq = line.find('=');
                if (eq == std::string::npos) throw PlanError("expected 'key = value'");
                const std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
                if (key.empty() || val.empty()) throw PlanError("expected 'key = value'");
                auto& target = sections.empty() ? defaults : sections.back().second;
                for (const auto& kv : target)
                    if (kv.key == key) throw PlanError("duplicate key '" + key + "'");
                target.push_back({key, val, no});
            }
        } catch (const PlanError& e) {
            throw PlanError("plan line " + std::to_string(no) + ": " + e.what());
        }
    }
    if (sections.empty()) sections.push_back({"main", {}});
    for (const auto& [name, kvs] : sections) {
        PlanSection s;
        s.name = name;
        s.plan.name = name;
        for (const std::vector<Entry>* list : std::array<const std::vector<Entry>*, 2>{&defaults, &kvs}) {
            for (const auto& e : *list) {
                try {
                    apply_key(s, e.key, e.value);
                } catch (const PlanError& err) {
                    throw PlanError("plan line " + std::to_string(e.line) + ": " + err.what());
                }
            }
        }
        try {
            s.plan.validate();
        } catch (const PlanError& e) {
            throw PlanError("section '" + name + "': " + e.what());
        }
        pf.sections.push_back(std::move(s));
    }
    return pf;
}

PlanFile parse_plan_text(const std::string& text) {
    std::istringstream is(text);
    return parse_plan(is);
}

std::string PlanFile::canonical() const {
    std::vector<std::string> secs;
    for (const auto& s : sections) {
        const SweepPlan& p = s.plan;
        std::vector<std::string> kv;
        std::string grid;
        for (int L : p.L_grid) grid += std::to_string(L) + " ";
        std::string ef;
        for (double e : p.E_F) ef += fmt17(e) + " ";
        kv.push_back("L=" + grid);
        kv.push_back("samples=" + std::to_string(p.samples));
        kv.push_back("E_F=" + ef);
        kv.push_back("v=" + fmt17(p.v));
        kv.push_back("p_plus=" + fmt17(p.p_plus));
        kv.push_back(std::string("phase=") + to_string(p.phase));
        kv.push_back("gamma=" + fmt17(p.gamma));
        kv.push_back("delta=" + fmt17(p.delta));
        kv.push_back("alpha=" + fmt17(p.alpha));
        kv.push_back(std::string("region=") + to_string(p.region));
        kv.push_back("host=" + fmt17(p.host));
        kv.push_back("seed=" + std::to_string(p.master_seed));
        kv.push_back("burn_in=" + std::to_string(p.burn_in));
        kv.push_back("delta0=" + fmt17(p.delta0));
        kv.push_back("spacing_cap=" + fmt17(p.spacing_cap));
        kv.push_back("flatness_cap=" + fmt17(p.flatness_cap));
        kv.push_back("ratio_floor=" + fmt17(s.ratio_floor));
        std::sort(kv.begin(), kv.end());
        std::string t = "[" + s.name + "]\n";
        for (const auto& x : kv) t += x + "\n";
        secs.push_back(t);
    }
    std::sort(secs.begin(), secs.end());
    std::vector<std::string> as;
    for (const auto& a : asserts) as.push_back("assert " + a.text() + "\n");
    std::sort(as.begin(), as.end());
    std::string out;
    for (const auto& s : secs) out += s;
    for (const auto& a : as) out += a;
    return out;
}

bool PlanOutcome::all_passed() const {
    return std::all_of(assertions.begin(), assertions.end(), [](const AssertionOutcome& a) { return a.passed; });
}

void section_metrics(const PlanSection& s, const ScalingResult& r, std::map<std::string, double>& out) {
    const std::string suf = "_" + s.name;
    out["failed" + suf] = r.failed;
    for (std::size_t i = 0; i < r.series.size(); ++i) {
        const ScalingSeries& ser = r.series[i];
        const std::string sfx = i == 0 ? suf : suf + "_" + std::to_string(i);
        double bad = 0.0;
        for (const auto& lv : ser.levels) bad = std::max(bad, lv.bad_fraction);
        out["bad_fraction_max" + sfx] = bad;
        if (!ser.levels.empty()) {
            out["mean_S_last" + sfx] = ser.levels.back().mean_S;
            out["mean_Q_last" + sfx] = ser.levels.back().mean_Q;
        }
        if (!ser.fitted) continue;
        out["slope" + sfx] = ser.fit.slope;
        out["slope_stderr" + sfx] = ser.fit.slope_stderr;
        out["ci_lo" + sfx] = ser.fit.ci_lo;
        out["ci_hi" + sfx] = ser.fit.ci_hi;
        out["r2" + sfx] = ser.fit.r2;
        out["slope_Q" + sfx] = ser.fit_Q.slope;
    }
    if (s.plan.region == RegionMode::boundary) {
        const BoundaryCheck bc = boundary_ratio_check(r, s.ratio_floor);
        out["fraction_above" + suf] = bc.fraction_above;
        double mn = std::numeric_limits<double>::infinity();
        for (const auto& t : bc.trajectories)
            if (t.complete) mn = std::min(mn, t.min_top_half);
        if (std::isfinite(mn)) out["min_ratio" + suf] = mn;
    }
}

PlanOutcome run_plan(const PlanFile& plan, int workers) {
    PlanOutcome out;
    for (const auto& s : plan.sections) {
        SweepPlan p = s.plan;
        if (workers > 0) p.workers = workers;
        ScalingResult r = run_sweep(p);
        // keep the plan as written so outputs do not depend on the worker override
        r.plan.workers = s.plan.workers;
        section_metrics(s, r, out.metrics);
        out.results.emplace_back(s.name, std::move(r));
    }
    const ScalingResult* crit = nullptr;
    const ScalingResult* ctrl = nullptr;
    for (const auto& [name, r] : out.results) {
        if (name == "critical") crit = &r;
        if (name == "control") ctrl = &r;
    }
    if (crit && ctrl) {
        try {
            const Comparison c = critical_vs_localized(*crit, *ctrl);
            out.metrics["enhanced"] = c.enhanced ? 1.0 : 0.0;
            out.metrics["plateau"] = c.plateau ? 1.0 : 0.0;
            out.metrics["area_law"] = c.area_law ? 1.0 : 0.0;
            out.metrics["last_difference_control"] = c.last_difference;
            out.metrics["combined_stderr_control"] = c.combined_stderr;
        } catch (const FitError&) {
            // metrics stay absent; assertions on them fail as unknown
        }
    }
    for (const auto& a : plan.asserts) {
        AssertionOutcome o;
        o.assertion = a;
        const auto it = out.metrics.find(a.metric);
        o.known = it != out.metrics.end();
        if (o.known) {
            o.value = it->second;
            o.passed = a.holds(o.value);
        }
        out.assertions.push_back(o);
    }
    return out;
}

}  // namespace rdm
