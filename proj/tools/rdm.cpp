// rdm: spectrum, entropy and sweep drivers
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "rdm/cli_io.hpp"
#include "rdm/criticality.hpp"
#include "rdm/eigensystem.hpp"
#include "rdm/entropy.hpp"
#include "rdm/error.hpp"
#include "rdm/format.hpp"
#include "rdm/hamiltonian.hpp"

using namespace rdm;
namespace fs = std::filesystem;

namespace {

// hash of the semantic arguments of a one-shot command
std::string args_hash(const std::map<std::string, std::string>& args) {
    std::string s;
    for (const auto& [k, v] : args) s += k + "=" + v + "\n";
    return hex64(fnv1a64(s));
}

struct Output {
    std::ofstream file;
    std::ostream* os = &std::cout;
    explicit Output(const std::string& path) {
        if (path.empty() || path == "-") return;
        file.open(path, std::ios::binary);
        if (!file) throw ParameterError("cannot write '" + path + "'");
        os = &file;
    }
};

struct SpectrumArgs {
    int L = 0;
    double v = 0.0;
    double p_plus = 0.5;
    std::uint64_t seed = 0;
    std::uint64_t sample = 0;
    std::string phase = "even";
    std::string boundary = "plain";
    std::vector<double> window;  // E_c alpha
    std::string out;
};

int cmd_spectrum(const SpectrumArgs& a) {
    const DisorderParams params{a.v, a.p_plus, a.seed, parse_dimer_phase(a.phase)};
    params.validate();
    if (a.L < 1) throw ParameterError("L must be >= 1");
    const Boundary b = parse_boundary(a.boundary);
    const TridiagonalOperator op = build_hamiltonian(sample_config(params, a.L, a.sample), params, b);

    std::map<std::string, std::string> key{{"L", std::to_string(a.L)},  {"v", fmt17(a.v)},
                                           {"p_plus", fmt17(a.p_plus)}, {"seed", std::to_string(a.seed)},
                                           {"sample", std::to_string(a.sample)}, {"phase", a.phase},
                                           {"boundary", a.boundary}};
    if (!a.window.empty()) key["window"] = fmt17(a.window[0]) + " " + fmt17(a.window[1]);
    Manifest m;
    m.plan_hash = args_hash(key);
    m.master_seed = a.seed;

    Output out(a.out);
    std::ostream& os = *out.os;
    if (a.window.empty()) {
        EigenOptions opt;
        opt.vectors = VectorMode::none;
        const SpectralData spec = eigensystem(op, opt);
        m.schema = "spectrum-v1";
        write_manifest_header(os, m);
        os << "index,eigenvalue\n";
        for (int j = 0; j < spec.count(); ++j) os << j << ',' << fmt17(spec.eigenvalue(j)) << '\n';
        return 0;
    }
    const CriticalWindow win = make_window(a.v, a.window[0], a.L, a.window[1]);
    EigenOptions opt;
    opt.window = win.energies();
    const SpectralData spec = eigensystem(op, opt);
    // no pass bars here: the caller reads the numbers
    WindowCaps caps{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    const WindowStats st = window_spacings(spec, win, caps);
    m.schema = "spectrum-window-v1";
    write_manifest_header(os, m);
    os << "# window: " << fmt17(win.energies().lo) << ' ' << fmt17(win.energies().hi) << '\n';
    os << "# spacing_ratio: " << fmt17(st.spacing_ratio) << '\n';
    os << "# C_emp: " << fmt17(st.C_emp) << '\n';
    os << "index,eigenvalue,in_window,spacing,flat_min,flat_max,flat_C\n";
    for (int j = 0; j < spec.count(); ++j) {
        const double E = spec.eigenvalue(j);
        os << spec.first_index() + j << ',' << fmt17(E) << ',' << (win.contains(E) ? 1 : 0) << ',';
        if (j + 1 < spec.count()) os << fmt17(spec.eigenvalue(j + 1) - E);
        const FlatnessProfile f = flatness_profile(spec, j);
        os << ',' << fmt17(f.min) << ',' << fmt17(f.max) << ',' << fmt17(f.C) << '\n';
    }
    return 0;
}

struct EntropyArgs {
    int L = 0;
    double v = 0.0;
    double p_plus = 0.5;
    std::uint64_t seed = 0;
    std::uint64_t sample = 0;
    int samples = 1;
    std::string phase = "even";
    double ef = 0.0;
    std::vector<int> region;
    int padded = 0;
    double temp = 0.0;
    std::string out;
};

int cmd_entropy(const EntropyArgs& a) {
    const DisorderParams params{a.v, a.p_plus, a.seed, parse_dimer_phase(a.phase)};
    params.validate();
    if (a.L < 1) throw ParameterError("L must be >= 1");
    if (a.samples < 1) throw ParameterError("samples must be >= 1");
    const Region A = make_region(a.region[0], a.region[1]);
    if (A.empty() || A.x1 < -a.L || A.x2 > a.L - 1)
        throw RangeError("region [" + std::to_string(a.region[0]) + ", " + std::to_string(a.region[1]) +
                         "] outside the box {" + std::to_string(-a.L) + ".." + std::to_string(a.L - 1) + "}");
    if (a.padded != 0 && a.padded < a.L) throw ParameterError("--padded must be >= L");
    if (a.temp < 0.0) throw ParameterError("temperature must be > 0");
    const bool dense = A.size() <= kDenseRegionMax || a.temp > 0.0;

    std::map<std::string, std::string> key{{"L", std::to_string(a.L)},   {"v", fmt17(a.v)},
                                           {"p_plus", fmt17(a.p_plus)}, {"seed", std::to_string(a.seed)},
                                           {"sample", std::to_string(a.sample)}, {"samples", std::to_string(a.samples)},
                                           {"phase", a.phase},          {"E_F", fmt17(a.ef)},
                                           {"region", std::to_string(A.x1) + " " + std::to_string(A.x2)},
                                           {"padded", std::to_string(a.padded)}, {"temp", fmt17(a.temp)}};
    Manifest m;
    m.plan_hash = args_hash(key);
    m.master_seed = a.seed;
    m.schema = "entropy-v1";

    Output out(a.out);
    std::ostream& os = *out.os;
    write_manifest_header(os, m);
    os << "sample_index,L,E_F,region_x1,region_x2,S,Q,Q_commutator,oracle_diff";
    if (a.padded) os << ",L_pad,S_pad,Q_pad,trace_norm_diff,krein_holds";
    if (a.temp > 0.0) os << ",T,S_T,Q_T";
    os << '\n';

    std::vector<int> sites;
    for (int x : {A.x1 - 1, A.x1, A.x2, A.x2 + 1})
        if (x >= -a.L && x <= a.L - 1) sites.push_back(x);
    if (dense)
        for (int x = A.x1; x <= A.x2; ++x) sites.push_back(x);
    std::sort(sites.begin(), sites.end());
    sites.erase(std::unique(sites.begin(), sites.end()), sites.end());

    for (int s = 0; s < a.samples; ++s) {
        const std::uint64_t idx = a.sample + static_cast<std::uint64_t>(s);
        const PotentialConfig cfg = sample_config(params, a.L, idx);
        const TridiagonalOperator op = build_hamiltonian(cfg, params);
        EigenOptions opt;
        opt.vectors = VectorMode::sites;
        opt.sites = sites;
        const SpectralData spec = eigensystem(op, opt);
        const EntropyResult r = A.size() <= kDenseRegionMax ? entanglement_entropy(spec, A, a.ef)
                                                            : boundary_entropy(spec, A, a.ef);
        const double qc = quadratic_entropy_commutator(spec, A, a.ef);
        os << idx << ',' << a.L << ',' << fmt17(a.ef) << ',' << A.x1 << ',' << A.x2 << ',' << fmt17(r.S) << ','
           << fmt17(r.Q) << ',' << fmt17(qc) << ',' << fmt17(std::fabs(r.Q - qc));
        if (a.padded) {
            const PaddedComparison pc = finite_vs_padded(cfg, sample_config(params, a.padded, idx), params, A, a.ef);
            os << ',' << a.padded << ',' << fmt17(pc.S_pad) << ',' << fmt17(pc.Q_pad) << ','
               << fmt17(pc.trace_norm_diff) << ',' << (pc.krein_holds ? 1 : 0);
        }
        if (a.temp > 0.0) {
            const EntropyResult t = fermi_dirac_entropy(spec, A, a.ef, a.temp);
            os << ',' << fmt17(a.temp) << ',' << fmt17(t.S) << ',' << fmt17(t.Q);
        }
        os << '\n';
    }
    return 0;
}

struct SweepArgs {
    std::string plan;
    int workers = 0;
    std::string out = ".";
};

int cmd_sweep(const SweepArgs& a) {
    std::ifstream in(a.plan);
    if (!in) throw PlanError("cannot read plan '" + a.plan + "'");
    const PlanFile plan = parse_plan(in);
    if (a.workers < 0) throw ParameterError("--workers must be >= 0");

    const fs::path dir(a.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ParameterError("cannot create '" + a.out + "': " + ec.message());

    const PlanOutcome res = run_plan(plan, a.workers);

    Manifest m;
    m.plan_hash = plan.hash();
    m.master_seed = plan.sections.front().plan.master_seed;
    m.schema = kRecordsSchema;
    for (const auto& [name, r] : res.results) {
        std::ofstream f(dir / (name + ".csv"), std::ios::binary);
        if (!f) throw ParameterError("cannot write results for section '" + name + "'");
        Manifest ms = m;
        ms.master_seed = r.plan.master_seed;
        write_manifest_header(f, ms);
        write_records_csv(f, r);
    }

    using nlohmann::ordered_json;
    ordered_json j;
    j["manifest"] = {{"tool", m.tool}, {"plan_hash", m.plan_hash}, {"schema", "summary-v1"}};
    ordered_json tol = ordered_json::object();
    for (const auto& [k, v] : tolerance_table()) tol[k] = v;
    j["manifest"]["tolerances"] = tol;
    ordered_json secs = ordered_json::object();
    for (const auto& [name, r] : res.results) {
        ordered_json s = ordered_json::parse(summary_json(r));
        s["master_seed"] = r.plan.master_seed;
        secs[name] = s;
    }
    j["sections"] = secs;
    ordered_json met = ordered_json::object();
    for (const auto& [k, v] : res.metrics) met[k] = fmt17(v);
    j["metrics"] = met;
    ordered_json as = ordered_json::array();
    for (const auto& o : res.assertions) {
        as.push_back({{"assert", o.assertion.text()},
                      {"value", o.known ? ordered_json(fmt17(o.value)) : ordered_json(nullptr)},
                      {"passed", o.passed}});
    }
    j["assertions"] = as;
    {
        std::ofstream f(dir / "summary.json", std::ios::binary);
        if (!f) throw ParameterError("cannot write summary.json");
        f << j.dump(2) << '\n';
    }
    {
        std::ofstream f(dir / "manifest.txt", std::ios::binary);
        m.timestamp = utc_timestamp();
        write_manifest_file(f, m);
        f << "# sections:";
        for (const auto& s : plan.sections) f << ' ' << s.name;
        f << '\n';
    }

    for (const auto& o : res.assertions) {
        std::cout << (o.passed ? "PASS " : "FAIL ") << o.assertion.text() << "  (";
        if (o.known)
            std::cout << o.assertion.metric << " = " << fmt17(o.value);
        else
            std::cout << "no such metric";
        std::cout << ")\n";
    }
    for (const auto& [name, r] : res.results)
        for (const auto& w : r.warnings) std::cerr << "warning [" << name << "]: " << w << '\n';
    return res.all_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"random dimer model laboratory"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    SpectrumArgs sa;
    auto* sp = app.add_subcommand("spectrum", "eigenvalues of one realization");
    sp->add_option("--L", sa.L, "box half-width (box has 2L sites)")->required();
    sp->add_option("--v", sa.v, "dimer potential strength, in (0,2)")->required();
    sp->add_option("--p-plus", sa.p_plus, "probability of V = +1");
    sp->add_option("--seed", sa.seed, "master seed");
    sp->add_option("--sample", sa.sample, "sample index");
    sp->add_option("--phase", sa.phase, "dimer phase: even|odd");
    sp->add_option("--boundary", sa.boundary, "plain|dirichlet|neumann");
    sp->add_option("--window", sa.window, "critical window: E_c alpha")->expected(2);
    sp->add_option("--out", sa.out, "output file (default stdout)");

    EntropyArgs ea;
    auto* en = app.add_subcommand("entropy", "entanglement entropy of an interval");
    en->add_option("--L", ea.L, "box half-width")->required();
    en->add_option("--v", ea.v, "dimer potential strength, in (0,2)")->required();
    en->add_option("--p-plus", ea.p_plus, "probability of V = +1");
    en->add_option("--seed", ea.seed, "master seed");
    en->add_option("--sample", ea.sample, "first sample index");
    en->add_option("--samples", ea.samples, "number of consecutive samples");
    en->add_option("--phase", ea.phase, "dimer phase: even|odd");
    en->add_option("--ef", ea.ef, "Fermi energy")->required();
    en->add_option("--region", ea.region, "interval x1 x2 (inclusive)")->expected(2)->required();
    en->add_option("--padded", ea.padded, "also compare with a box of this half-width");
    en->add_option("--temp", ea.temp, "also report the Fermi-Dirac state at temperature T");
    en->add_option("--out", ea.out, "output file (default stdout)");

    SweepArgs wa;
    auto* sw = app.add_subcommand("sweep", "run a plan file");
    sw->add_option("--plan", wa.plan, "plan file")->required();
    sw->add_option("--workers", wa.workers, "worker threads (default RDM_WORKERS, else 1)");
    sw->add_option("--out", wa.out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*sp) return cmd_spectrum(sa);
        if (*en) return cmd_entropy(ea);
        if (*sw) return cmd_sweep(wa);
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const RangeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const PlanError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const DegenerateRegionError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 2;
}
