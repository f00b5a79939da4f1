#pragma once

#include <array>
#include <cstdint>

namespace rdm {

// Philox4x64-10 counter-based generator (Salmon et al., Random123).
// Pure function of (counter, key); no state.
inline std::array<std::uint64_t, 4> philox4x64(std::array<std::uint64_t, 4> ctr,
                                               std::array<std::uint64_t, 2> key) {
    constexpr std::uint64_t M0 = 0xD2E7470EE14C6C93ULL;
    constexpr std::uint64_t M1 = 0xCA5A826395121157ULL;
    constexpr std::uint64_t W0 = 0x9E3779B97F4A7C15ULL;
    constexpr std::uint64_t W1 = 0xBB67AE8584CAA73BULL;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += W0;
            key[1] += W1;
        }
        const unsigned __int128 p0 = static_cast<unsigned __int128>(M0) * ctr[0];
        const unsigned __int128 p1 = static_cast<unsigned __int128>(M1) * ctr[2];
        const auto hi0 = static_cast<std::uint64_t>(p0 >> 64);
        const auto lo0 = static_cast<std::uint64_t>(p0);
        const auto hi1 = static_cast<std::uint64_t>(p1 >> 64);
        const auto lo1 = static_cast<std::uint64_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

// top 53 bits as a double in [0,1)
inline double to_unit(std::uint64_t u) { return static_cast<double>(u >> 11) * 0x1.0p-53; }

}  // namespace rdm
