#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rdm {

// which site pairs are tied together: even -> (2k, 2k+1), odd -> (2k-1, 2k)
enum class DimerPhase { even, odd };

const char* to_string(DimerPhase p);
DimerPhase parse_dimer_phase(const std::string& s);

struct DisorderParams {
    double v = 0.3;
    double p_plus = 0.5;
    std::uint64_t master_seed = 0;
    DimerPhase phase = DimerPhase::even;

    // v in [0,2), p_plus in [0,1]; the endpoints v=0, p=0, p=1 are kept as degenerate limits
    void validate() const;
};

struct PotentialConfig {
    int L = 0;
    std::vector<std::uint8_t> values;  // values[i] = V(-L + i)
    std::uint64_t sample_seed = 0;
    std::uint64_t sample_index = 0;
    DimerPhase phase = DimerPhase::even;

    int size() const { return static_cast<int>(values.size()); }
    int first_site() const { return -L; }
    int last_site() const { return L - 1; }
    // V(x) for x in the box; throws RangeError otherwise
    int at(int x) const;
};

// dimer index of site x; two sites share a draw iff their dimer indices agree
std::int64_t dimer_index(std::int64_t x, DimerPhase phase);

// single Bernoulli draw for a dimer, keyed by (master_seed, sample_index, dimer)
int dimer_value(const DisorderParams& params, std::uint64_t sample_index, std::int64_t dimer);

std::uint64_t sample_seed(std::uint64_t master_seed, std::uint64_t sample_index);

PotentialConfig sample_config(const DisorderParams& params, int L, std::uint64_t sample_index);

// first sites of the pairs lying wholly inside the box
std::vector<int> dimer_phase_convention(int L, DimerPhase phase = DimerPhase::even);

// homogeneous configuration, handy for tests
PotentialConfig constant_config(int L, int value);

// audit row: sample_index,sample_seed,L,phase,rle
// rle is "<first value>:<run>.<run>..." with alternating values
std::string config_to_row(const PotentialConfig& c);
PotentialConfig config_from_row(const std::string& row);

}  // namespace rdm
