#include "rdm/disorder.hpp"

#include <cmath>
#include <sstream>

#include "rdm/error.hpp"
#include "rdm/philox.hpp"

namespace rdm {

namespace {

// counter word 1 separates independent uses of the same key
constexpr std::uint64_t kTagPotential = 0;
constexpr std::uint64_t kTagSeed = 1;

}  // namespace

const char* to_string(DimerPhase p) { return p == DimerPhase::even ? "even" : "odd"; }

DimerPhase parse_dimer_phase(const std::string& s) {
    if (s == "even") return DimerPhase::even;
    if (s == "odd") return DimerPhase::odd;
    throw ParameterError("dimer phase must be 'even' or 'odd', got '" + s + "'");
}

void DisorderParams::validate() const {
    if (!std::isfinite(v) || v < 0.0 || v >= 2.0) {
        std::ostringstream os;
        os << "disorder strength v=" << v << " outside (0,2) (v=0 accepted as the free limit)";
        throw ParameterError(os.str());
    }
    if (!std::isfinite(p_plus) || p_plus < 0.0 || p_plus > 1.0) {
        std::ostringstream os;
        os << "p_plus=" << p_plus << " outside [0,1]";
        throw ParameterError(os.str());
    }
}

int PotentialConfig::at(int x) const {
    if (x < -L || x > L - 1) {
        throw RangeError("site " + std::to_string(x) + " outside box of half-width " + std::to_string(L));
    }
    return values[static_cast<std::size_t>(x + L)];
}

std::int64_t dimer_index(std::int64_t x, DimerPhase phase) {
    // arithmetic shift is floor division by 2
    return phase == DimerPhase::even ? (x >> 1) : ((x + 1) >> 1);
}

int dimer_value(const DisorderParams& params, std::uint64_t sample_index, std::int64_t dimer) {
    const std::uint64_t block = static_cast<std::uint64_t>(dimer >> 2);
    const int lane = static_cast<int>(dimer & 3);
    const auto out = philox4x64({block, kTagPotential, 0, 0}, {params.master_seed, sample_index});
    return to_unit(out[lane]) < params.p_plus ? 1 : 0;
}

std::uint64_t sample_seed(std::uint64_t master_seed, std::uint64_t sample_index) {
    return philox4x64({0, kTagSeed, 0, 0}, {master_seed, sample_index})[0];
}

PotentialConfig sample_config(const DisorderParams& params, int L, std::uint64_t sample_index) {
    params.validate();
    if (L < 1) throw ParameterError("L must be >= 1");
    PotentialConfig c;
    c.L = L;
    c.sample_index = sample_index;
    c.sample_seed = sample_seed(params.master_seed, sample_index);
    c.phase = params.phase;
    c.values.resize(static_cast<std::size_t>(2 * L));

    // one philox block serves four consecutive dimers
    std::int64_t cached_block = INT64_MIN;
    std::array<std::uint64_t, 4> out{};
    for (int x = -L; x <= L - 1; ++x) {
        const std::int64_t d = dimer_index(x, params.phase);
        const std::int64_t block = d >> 2;
        if (block != cached_block) {
            out = philox4x64({static_cast<std::uint64_t>(block), kTagPotential, 0, 0},
                             {params.master_seed, sample_index});
            cached_block = block;
        }
        c.values[static_cast<std::size_t>(x + L)] = to_unit(out[d & 3]) < params.p_plus ? 1 : 0;
    }
    return c;
}

std::vector<int> dimer_phase_convention(int L, DimerPhase phase) {
    std::vector<int> starts;
    const int parity = phase == DimerPhase::even ? 0 : 1;
    for (int x = -L; x + 1 <= L - 1; ++x) {
        if (((x % 2) + 2) % 2 == parity) starts.push_back(x);
    }
    return starts;
}

PotentialConfig constant_config(int L, int value) {
    if (L < 1) throw ParameterError("L must be >= 1");
    PotentialConfig c;
    c.L = L;
    c.values.assign(static_cast<std::size_t>(2 * L), static_cast<std::uint8_t>(value ? 1 : 0));
    return c;
}

std::string config_to_row(const PotentialConfig& c) {
    std::ostringstream os;
    os << c.sample_index << ',' << c.sample_seed << ',' << c.L << ',' << to_string(c.phase) << ',';
    if (c.values.empty()) return os.str();
    os << int(c.values[0]) << ':';
    std::size_t run = 1;
    for (std::size_t i = 1; i <= c.values.size(); ++i) {
        if (i < c.values.size() && c.values[i] == c.values[i - 1]) {
            ++run;
            continue;
        }
        os << run;
        if (i < c.values.size()) os << '.';
        run = 1;
    }
    return os.str();
}

PotentialConfig config_from_row(const std::string& row) {
    std::istringstream is(row);
    std::string f[5];
    for (int i = 0; i < 5; ++i) {
        if (!std::getline(is, f[i], i < 4 ? ',' : '\n')) throw StructuralError("config row: missing field");
    }
    PotentialConfig c;
    try {
        c.sample_index = std::stoull(f[0]);
        c.sample_seed = std::stoull(f[1]);
        c.L = std::stoi(f[2]);
    } catch (const std::exception&) {
        throw StructuralError("config row: bad integer field");
    }
    c.phase = parse_dimer_phase(f[3]);
    const auto colon = f[4].find(':');
    if (colon == std::string::npos) throw StructuralError("config row: bad rle");
    int value = std::stoi(f[4].substr(0, colon));
    std::istringstream runs(f[4].substr(colon + 1));
    std::string tok;
    while (std::getline(runs, tok, '.')) {
        const auto n = std::stoull(tok);
        c.values.insert(c.values.end(), n, static_cast<std::uint8_t>(value));
        value = 1 - value;
    }
    if (c.size() != 2 * c.L) throw StructuralError("config row: rle length does not match L");
    return c;
}

}  // namespace rdm
