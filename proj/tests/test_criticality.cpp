#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "rdm/criticality.hpp"
#include "rdm/error.hpp"

using namespace rdm;

namespace {

constexpr double kPi = std::numbers::pi;

TridiagonalOperator sample_op(double v, int L, std::uint64_t s, std::uint64_t seed = 11) {
    DisorderParams p{v, 0.5, seed};
    return build_hamiltonian(sample_config(p, L, s), p);
}

SpectralData window_spec(const TridiagonalOperator& op, const CriticalWindow& w) {
    EigenOptions o;
    o.window = w.energies();
    return eigensystem(op, o);
}

// labels -> local column of a windowed spectrum
int column(const SpectralData& spec, double E_c, int label) { return label + spec.count_below(E_c); }

}  // namespace

TEST_CASE("critical window") {
    auto w = make_window(0.3, 0.3, 4000);
    CHECK(w.half_width() == doctest::Approx(std::pow(4000.0, -0.5 - 1.0 / 12.0)));
    CHECK(w.contains(0.3));
    CHECK_FALSE(w.contains(0.3 + 1.01 * w.half_width()));
    CHECK(w.separated());
    CHECK_FALSE(make_window(0.01, 0.0, 100).separated());
    CHECK_THROWS_AS(make_window(0.3, 0.1, 100), ParameterError);
    CHECK_THROWS_AS(make_window(0.3, 0.0, 100, 0.0), ParameterError);
    CHECK_THROWS_AS(make_window(0.3, 0.0, 0), ParameterError);
}

TEST_CASE("free spacings near the band centre") {
    const int L = 2000;
    auto op = sample_op(0.0, L, 0);
    auto w = make_window(0.0, 0.0, L);
    auto st = analyze_window(op, w, {3.0, 2.0});
    REQUIRE(st.spacings.size() >= 5);
    for (double s : st.spacings) CHECK(std::fabs(s / (kPi / L) - 1.0) < 0.01);
    CHECK_FALSE(st.bad());
    // flatness of the free sines is close to 1 at the centre
    for (const auto& f : st.flatness) {
        CHECK(f.ratio < 1.2);
        CHECK(f.ratio >= 1.0);
    }
}

TEST_CASE("spacings within a factor 3 of their median at v = 0.3") {
    const int L = 4000;
    for (std::uint64_t s = 0; s < 20; ++s) {
        auto op = sample_op(0.3, L, s);
        for (double Ec : {0.0, 0.3}) {
            auto st = analyze_window(op, make_window(0.3, Ec, L), {3.0, 2.0});
            REQUIRE(st.spacings.size() >= 2);
            for (double x : st.spacings) CHECK(x > 0.0);
            CHECK(st.median_factor <= 3.0);
        }
    }
}

TEST_CASE("a single eigenvalue in the window has no spacings") {
    SpectralData one(10, 9, {0.001}, {}, Eigen::MatrixXd(), {0.0}, {});
    auto st = window_spacings(one, make_window(0.3, 0.0, 10), {3.0, 2.0});
    CHECK(st.eigenvalues.size() == 1);
    CHECK(st.spacings.empty());
    CHECK(st.spacing_ratio == 0.0);
    CHECK_FALSE(st.spacing_flag);
    CHECK_FALSE(st.flatness_flag);
}

TEST_CASE("flatness at weak disorder and for localized states") {
    const int L = 4000;
    int below2 = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        auto st = analyze_window(sample_op(0.2, L, s), make_window(0.2, 0.0, L), {3.0, 2.0});
        REQUIRE_FALSE(st.flatness.empty());
        if (st.C_emp < 2.0) ++below2;
    }
    CHECK(below2 >= 18);

    // deep band-edge state at strong disorder
    auto op = sample_op(1.5, 300, 1);
    auto spec = eigensystem(op);
    auto f = flatness_profile(spec, 0);
    CHECK(f.ratio > 1e6);
    CHECK(f.C >= f.max);

    CHECK_THROWS_AS(flatness_profile(std::vector<double>(5, 0.1), 3), StructuralError);
    EigenOptions o;
    o.vectors = VectorMode::none;
    CHECK_THROWS_AS(flatness_profile(eigensystem(op, o), 0), ContractError);
}

TEST_CASE("density of states") {
    DisorderParams free{0.0, 0.5, 1};
    auto d = dos_estimate(free, 0.0, 4000, 1);
    CHECK(std::fabs(d.density - 1.0 / (2.0 * kPi)) < 0.05 / (2.0 * kPi));
    CHECK(d.lo < d.density);
    CHECK(d.hi > d.density);
    CHECK(d.bracketing_holds);

    DisorderParams weak{0.2, 0.5, 5};
    const int L = 4000;
    auto dw = dos_estimate(weak, 0.0, L, 20);
    CHECK(dw.max_dn_gap <= 4);
    CHECK(dw.max_rank_deviation <= 2);
    double C = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto cfg = sample_config(weak, L, s);
        C = std::max(C, analyze_window(build_hamiltonian(cfg, weak), make_window(0.2, 0.0, L), {3.0, 2.0}).C_emp);
    }
    const double c3 = C * C * C;
    CHECK(dw.density >= 1.0 / (2.0 * kPi * c3));
    CHECK(dw.density <= c3 / (2.0 * kPi));

    // rank-2 bracketing across the spectrum
    std::vector<double> grid;
    for (int i = 0; i <= 200; ++i) grid.push_back(-2.5 + 5.5 * i / 200.0);
    for (double v : {0.3, 1.0, 1.7}) {
        DisorderParams p{v, 0.5, 2};
        for (std::uint64_t s = 0; s < 5; ++s) CHECK(rank_deviation(sample_config(p, 200, s), p, grid) <= 2);
    }
    CHECK_THROWS_AS(dos_estimate(weak, 0.0, 100, 0), ParameterError);
}

TEST_CASE("box position") {
    Region a = box_position(100, 0.1, 0.01);
    CHECK(a.x1 == -90);
    CHECK(a.x2 == -90);
    Region b = box_position(100, 0.0, 0.05);
    CHECK(b.x1 == -100);
    CHECK(b.x2 == -96);
    // 0.29 * 100 rounds to 28.999...
    CHECK(box_position(100, 0.29, 0.05).x1 == -71);
    CHECK_THROWS_AS(box_position(100, 0.1, 0.001), DegenerateRegionError);
    CHECK_THROWS_AS(box_position(100, -0.1, 0.1), ParameterError);
    CHECK_THROWS_AS(box_position(100, 0.1, 0.0), ParameterError);
    CHECK_THROWS_AS(box_position(100, 1.5, 0.6), ParameterError);

    // every length up to 200 occurs for some L
    for (double gamma : {0.1, 0.25, 0.37}) {
        const double delta = 0.013;
        std::set<int> seen;
        for (int L = 1; L <= 20000; ++L) {
            const int len = static_cast<int>(std::floor((gamma + delta) * L)) - static_cast<int>(std::floor(gamma * L));
            if (len > 0) seen.insert(box_position(L, gamma, delta).size());
        }
        for (int len = 1; len <= 200; ++len) CHECK(seen.count(len) == 1);
    }
}

TEST_CASE("beat partition and good indices") {
    const double v = 0.05, gamma = 0.3, delta = 0.4, alpha = 0.02;
    const int L = 20000;
    for (std::uint64_t s = 0; s < 3; ++s) {
        auto op = sample_op(v, L, s);
        auto w = make_window(v, 0.0, L, alpha);
        auto spec = window_spec(op, w);
        const double C = window_spacings(spec, w, {3.0, 2.0}).C_emp;
        Region A = box_position(L, gamma, delta);
        auto lt = lower_labels(spec, w);
        REQUIRE(lt.size() >= 2);
        const int k = lt.back();
        auto b = beat_analysis(op, spec, w, A, k);
        REQUIRE(b.sufficient);
        CHECK_FALSE(b.boundary_variant);
        REQUIRE(b.antinodes.size() >= 3);

        // contiguous, disjoint, covering, and starting at the sign changes
        std::vector<int> all;
        for (std::size_t q = 0; q < b.antinodes.size(); ++q) {
            const auto& a = b.antinodes[q];
            REQUIRE_FALSE(a.indices.empty());
            for (std::size_t i = 1; i < a.indices.size(); ++i) CHECK(a.indices[i] == a.indices[i - 1] + 1);
            if (q > 0) CHECK(a.indices.front() == b.sign_changes[q - 1]);
            all.insert(all.end(), a.indices.begin(), a.indices.end());
            for (int j : a.good) CHECK(std::find(a.hull_good.begin(), a.hull_good.end(), j) != a.hull_good.end());
            for (int j : a.hull_good) CHECK(std::find(a.indices.begin(), a.indices.end(), j) != a.indices.end());
            CHECK(a.interior == (q > 0 && q + 1 < b.antinodes.size()));
        }
        CHECK(all == b.J_ge);
        CHECK(b.sign_changes.size() + 1 == b.antinodes.size());

        // good pairs have a non-cancelling commutator element
        REQUIRE(b.good_count() > 0);
        for (const auto& a : b.antinodes)
            for (int j : a.good) {
                const double c = commutator_element(spec, A, column(spec, 0.0, k), column(spec, 0.0, j));
                CHECK(std::fabs(c) >= 1.0 / (C * L));
            }

        // fast phase increments
        const double lo = kPi * (2.0 * gamma + delta) / (4.0 * std::pow(C, 6));
        const double hi = lo * std::pow(C, 12);
        for (std::size_t i = 1; i < b.z_plus.size(); ++i) {
            const double dz = b.z_plus[i] - b.z_plus[i - 1];
            CHECK(dz >= lo);
            CHECK(dz <= hi);
        }

        auto r = good_index_density(b, {C, gamma, delta});
        CHECK_FALSE(r.hypotheses_met);
        CHECK(r.reason == "gamma > 2^-8");
        int sum = 0;
        for (int c : r.counts) {
            CHECK(c >= 0);
            sum += c;
        }
        CHECK(sum == b.good_count());
        CHECK(r.total == sum);
    }
}

TEST_CASE("beats for a region at the left edge") {
    const double v = 0.05, delta = 0.2, alpha = 0.02;
    const int L = 20000;
    for (std::uint64_t s = 0; s < 3; ++s) {
        auto op = sample_op(v, L, s);
        auto w = make_window(v, 0.0, L, alpha);
        auto spec = window_spec(op, w);
        const double C = window_spacings(spec, w, {3.0, 2.0}).C_emp;
        Region A = box_position(L, 0.0, delta);
        CHECK(A.x1 == -L);
        const int k = lower_labels(spec, w).back();
        auto b = beat_analysis(op, spec, w, A, k);
        REQUIRE(b.boundary_variant);
        for (std::size_t i = 0; i < b.z_plus.size(); ++i) CHECK(b.z_plus[i] == b.z_minus[i]);
        for (const auto& a : b.antinodes) {
            CHECK(a.good == a.hull_good);
            for (int j : a.good) {
                const double c = commutator_element(spec, A, column(spec, 0.0, k), column(spec, 0.0, j));
                CHECK(std::fabs(c) >= 1.0 / (std::sqrt(2.0) * C * L));
            }
        }
        auto r = good_index_density(b, {C, 0.0, delta});
        REQUIRE(r.hypotheses_met);
        CHECK(r.bound == std::floor(kPi / (2.0 * (delta * kPi * std::pow(C, 6) / 2.0))));
        CHECK(r.interior_checked >= 1);
        CHECK(r.holds);
    }
}

TEST_CASE("beat guards") {
    const int L = 2000;
    auto op = sample_op(0.05, L, 0);
    auto w = make_window(0.05, 0.0, L);
    auto spec = window_spec(op, w);
    Region A = box_position(L, 0.1, 0.05);
    auto lt = lower_labels(spec, w);
    REQUIRE_FALSE(lt.empty());
    CHECK_THROWS_AS(beat_analysis(op, spec, w, A, 0), ContractError);
    CHECK_THROWS_AS(beat_analysis(op, spec, w, make_region(-L - 1, 0), lt.back()), RangeError);

    // a window holding only a couple of eigenvalues above E_F
    auto narrow = make_window(0.05, 0.0, L, 0.4);
    auto sn = window_spec(op, narrow);
    auto ltn = lower_labels(sn, narrow);
    if (!ltn.empty()) {
        auto b = beat_analysis(op, sn, narrow, A, ltn.back());
        if (b.J_ge.size() < 2) {
            CHECK_FALSE(b.sufficient);
            CHECK(b.antinodes.empty());
            auto r = good_index_density(b, {1.01, 0.001, 1e-9});
            CHECK_FALSE(r.hypotheses_met);
        }
    }

    // the small-parameter regime is out of reach once C^12 - 1 exceeds delta/gamma
    BeatAnalysis fake;
    fake.sufficient = true;
    auto r = good_index_density(fake, {1.05, 1e-3, 1e-6});
    CHECK_FALSE(r.hypotheses_met);
    CHECK(r.reason == "delta/gamma > 2^-17");
    r = good_index_density(fake, {1.05, 1e-3, 1e-9});
    CHECK(r.reason == "C^12 - 1 >= delta/gamma");
    r = good_index_density(fake, {1.0, 1e-3, 1e-9});
    CHECK(r.hypotheses_met);
    CHECK(r.bound == doctest::Approx(1.0 / (32.0 * 1e-9)));
}

TEST_CASE("smallest gamma for a measured flatness constant") {
    CHECK(smallest_gamma_for(1.0) == 0.0);
    CHECK(smallest_gamma_for(1.0625) == doctest::Approx(0.25));
    CHECK_THROWS_AS(smallest_gamma_for(0.9), DomainError);
}
