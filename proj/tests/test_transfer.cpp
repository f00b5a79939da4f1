#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <sstream>

#include "rdm/eigensystem.hpp"
#include "rdm/error.hpp"
#include "rdm/transfer.hpp"

using namespace rdm;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<double> diag_of(const PotentialConfig& c, double v) {
    std::vector<double> d(c.values.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = v * c.values[i];
    return d;
}

}  // namespace

TEST_CASE("single-step matrices") {
    Eigen::Matrix2d W = single_step(0, 0.0, 0.3);
    CHECK(W(0, 0) == 0.0);
    CHECK(W(0, 1) == -1.0);
    CHECK(W(1, 0) == 1.0);
    CHECK(W(1, 1) == 0.0);
    W = single_step(1, 0.0, 0.5);
    CHECK(W(0, 0) == 0.5);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(-3, 3);
    for (int i = 0; i < 100; ++i) CHECK(single_step(i % 2, U(rng), 1.2).determinant() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("multi-step products") {
    DisorderParams p{0.3, 0.5, 11};
    auto c = sample_config(p, 50, 0);
    CHECK(multi_step(c, 0.3, 0.4, 5, 5) == Eigen::Matrix2d::Identity());
    auto z = constant_config(10, 0);
    CHECK((multi_step(z, 0.3, 0.0, -4, -2) + Eigen::Matrix2d::Identity()).norm() < 1e-15);
    CHECK_THROWS_AS(multi_step(c, 0.3, 0.0, -51, 0), RangeError);
    CHECK_THROWS_AS(multi_step(c, 0.3, 0.0, 3, 2), RangeError);
    // norms of entries near the renormalization threshold stay finite
    Eigen::Matrix2d huge;
    huge << 3e150, 1e150, -2e150, 5e149;
    CHECK(norm2x2(huge) == doctest::Approx(norm2x2(Eigen::Matrix2d(huge / 1e150)) * 1e150).epsilon(1e-14));

    // propagating (phi(-L), phi(-L-1)) = (1, 0) reproduces the shooting solution
    const double E = 0.137;
    auto t = solve_shooting(c, p, E);
    const double s = t.phi(-50);
    for (int x = -49; x <= 50; x += 7) {
        Eigen::Vector2d w = multi_step(c, 0.3, E, -50, x) * Eigen::Vector2d(1.0, 0.0);
        CHECK(std::fabs(w(0) * s - t.phi(x)) <= 1e-12 * std::max(std::fabs(t.phi(x)), s));
        CHECK(std::fabs(w(1) * s - t.phi(x - 1)) <= 1e-12 * std::max(std::fabs(t.phi(x - 1)), s));
    }

    // unimodularity: absolute for short products, relative to ||M||^2 once they grow
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> UE(-2.0, 2.0);
    for (int i = 0; i < 50; ++i) {
        const int x = -50 + static_cast<int>(rng() % 60);
        const Eigen::Matrix2d M = multi_step(c, 0.3, UE(rng), x, x + 40);
        CHECK(std::fabs(M.determinant() - 1.0) < 1e-10 * std::max(1.0, M.squaredNorm()));
    }
    auto big = sample_config(DisorderParams{1.5, 0.5, 3}, 2000, 0);
    auto m = multi_step_scaled(big, 1.5, -2.6, -2000, 2000);
    CHECK(m.log_scale > 100.0);
    CHECK(std::fabs(m.m.determinant() - 0.0) < 1e-10 * m.m.squaredNorm());
    CHECK(std::isfinite(m.log_norm()));
}

TEST_CASE("basis change and dimer similarity") {
    for (double v = 0.1; v < 1.95; v += 0.1) {
        auto M = basis_change(v);
        CHECK(std::fabs(std::abs(M.determinant()) - 1.0) < 1e-14);
        auto T0 = dimer_similarity(0, 0.0, v).matrix();
        CHECK((T0 + Eigen::Matrix2cd::Identity()).cwiseAbs().maxCoeff() < 1e-12);
        auto T1 = dimer_similarity(1, 0.0, v).matrix();
        CHECK(std::abs(T1(0, 1)) < 1e-14);
        CHECK(std::abs(T1(1, 0)) < 1e-14);
    }
    CHECK_THROWS_AS(basis_change(0.0), ParameterError);
    CHECK_THROWS_AS(basis_change(2.0), ParameterError);

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> U(-2.5, 2.5), Uv(0.05, 1.95);
    for (int i = 0; i < 200; ++i) {
        auto t = dimer_similarity(i % 2, U(rng), Uv(rng));
        CHECK(std::fabs(std::norm(t.a) - std::norm(t.b) - 1.0) < 1e-12);
    }
}

TEST_CASE("small-energy expansions of a and b") {
    const double v = 0.6, s = std::sqrt(4.0 - v * v);
    const cplx I(0.0, 1.0);
    // every remainder divided by E^2 should stay put when E shrinks tenfold
    auto remainders = [&](double E) {
        auto t0 = dimer_similarity(0, E, v);
        auto t1 = dimer_similarity(1, E, v);
        std::array<double, 4> r{
            std::abs(t0.b + t1.b) / (E * E),
            std::abs(t0.a + 1.0 + 2.0 * I * E / s) / (E * E),
            std::abs(t0.b - 0.5 * E * v * (-1.0 + I * v / s)) / (E * E),
            std::abs(t1.a - (-1.0 + 0.5 * v * v + 0.5 * I * v * s - E * (v + I * (2.0 - v * v) / s))) / (E * E)};
        return r;
    };
    auto r3 = remainders(1e-3), r4 = remainders(1e-4);
    for (int k = 0; k < 4; ++k) {
        CHECK(r3[k] < 10.0);
        CHECK(r4[k] == doctest::Approx(r3[k]).epsilon(0.05));
    }
}

TEST_CASE("rho and Theta") {
    for (double th : {0.0, 0.3, 2.0, 4.0, 6.2}) {
        auto rt = rho_theta(0, 0.0, 0.7, th);
        CHECK(rt.rho == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(rt.Theta == doctest::Approx(std::fmod(th + kPi, 2 * kPi)).epsilon(1e-12));
        CHECK(rho_theta(1, 0.0, 0.7, th).rho == doctest::Approx(1.0).epsilon(1e-13));
    }
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> UE(-2.0, 2.0), Uv(0.05, 1.95), Ut(0.0, 2 * kPi);
    for (int i = 0; i < 1000; ++i) {
        const int V = i % 2;
        const double E = UE(rng), v = Uv(rng), th = Ut(rng);
        auto t = dimer_similarity(V, E, v);
        auto rt = rho_theta(t, th);
        CHECK(std::fabs(rt.rho * rt.rho - rho_squared_formula(t, th)) < 1e-12 * std::max(1.0, rt.rho * rt.rho));
        CHECK(rt.Theta >= 0.0);
        CHECK(rt.Theta < 2 * kPi);
        // T e_theta = rho e_Theta, checked componentwise
        Eigen::Vector2cd e, f;
        e << std::polar(1.0, -th) / std::sqrt(2.0), std::polar(1.0, th) / std::sqrt(2.0);
        f << std::polar(rt.rho, -rt.Theta) / std::sqrt(2.0), std::polar(rt.rho, rt.Theta) / std::sqrt(2.0);
        CHECK((t.matrix() * e - f).norm() < 1e-12 * std::max(1.0, rt.rho));
    }
}

TEST_CASE("rho products reproduce transfer-matrix norms") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> Ut(0.0, 2 * kPi);
    for (double v : {0.3, 1.0, 1.7}) {
        DisorderParams p{v, 0.5, 77};
        for (int L : {31, 40}) {
            auto c = sample_config(p, L, 1);
            std::uniform_real_distribution<double> UE(-v, v);
            for (int i = 0; i < 40; ++i) {
                const double E = UE(rng), a = Ut(rng);
                const Eigen::Vector2d w(std::cos(a), std::sin(a));
                const int x = -L + 2 + static_cast<int>(rng() % (2 * L - 2));
                const double direct = std::log((multi_step(c, v, E, -L, x) * w).norm());
                const double iter = iterate_log_norm(c, v, E, x, w);
                CHECK(std::fabs(std::exp(iter - direct) - 1.0) < 1e-8);
            }
        }
    }
    DisorderParams odd{0.5, 0.5, 5, DimerPhase::odd};
    auto c = sample_config(odd, 40, 0);
    bool broken = false;
    for (int k = -20; k < 19; ++k) broken = broken || c.at(2 * k) != c.at(2 * k + 1);
    if (broken) CHECK_THROWS_AS(iterate_log_norm(c, 0.5, 0.1, 38, Eigen::Vector2d(1, 0)), ContractError);
}

TEST_CASE("shooting solution") {
    DisorderParams p{0.3, 0.5, 21};
    auto c = sample_config(p, 50, 2);
    auto t = solve_shooting(c, p, 0.05);
    CHECK(t.phi(-51) == 0.0);
    CHECK(t.phi(-50) > 0.0);
    double nrm = 0.0;
    for (int x = -50; x < 50; ++x) nrm += t.phi(x) * t.phi(x);
    CHECK(nrm == doctest::Approx(1.0).epsilon(1e-13));
    for (int x = -50; x <= 50; ++x) {
        const double r2 = t.phi(x) * t.phi(x) + t.phi(x - 1) * t.phi(x - 1);
        CHECK(t.r(x) * t.r(x) == doctest::Approx(r2).epsilon(1e-12));
        CHECK(t.r(x) * std::cos(t.theta(x)) == doctest::Approx(t.phi(x)).epsilon(1e-10).scale(t.r(x)));
        CHECK(t.r(x) * std::sin(t.theta(x)) == doctest::Approx(t.phi(x - 1)).epsilon(1e-10).scale(t.r(x)));
    }
    CHECK(t.theta(-50) == 0.0);
    CHECK_THROWS_AS(t.phi(51), RangeError);

    // free solution at E=0: 1, 0, -1, 0, ... so r^2 is constant
    auto f = solve_shooting(std::vector<double>(40, 0.0), 0.0);
    for (int x = -20; x <= 20; ++x) CHECK(f.r(x) * f.r(x) == doctest::Approx(1.0 / 20.0).epsilon(1e-13));
    CHECK(f.phi(-19) == doctest::Approx(0.0).scale(1.0));
    CHECK(f.phi(-18) == doctest::Approx(-f.phi(-20)));

    // eigenvalues are exactly the energies with phi(L) = 0
    // rounding in E is amplified by about 1/psi(L-1)^2, so edge states are skipped
    auto op = build_hamiltonian(c, p);
    auto s = eigensystem(op);
    int used = 0;
    for (int j = 0; j < s.count(); ++j) {
        const double psi = s.component(j, 49);
        if (1e-15 / (psi * psi) > 1e-10) continue;
        CHECK(std::fabs(solve_shooting(c, p, s.eigenvalue(j)).phi(50)) < 1e-8);
        ++used;
    }
    CHECK(used > 80);
    CHECK(std::fabs(t.phi(50)) > 1e-3);

    // long localized run: no overflow, log radii finite
    DisorderParams q{1.9, 0.5, 4};
    auto cl = sample_config(q, 3000, 0);
    auto tl = solve_shooting(cl, q, 0.7);
    CHECK(std::isfinite(tl.log_r(3000)));
    CHECK(std::isfinite(tl.theta(3000)));
}

TEST_CASE("angle derivative against finite differences") {
    DisorderParams p{0.3, 0.5, 8};
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> UE(-2.2, 2.5);
    int checked = 0;
    for (int i = 0; i < 100; ++i) {
        auto c = sample_config(p, 200, static_cast<std::uint64_t>(i));
        const double E = UE(rng);
        const int l = -200 + 1 + static_cast<int>(rng() % 400);
        auto d = diag_of(c, 0.3);
        const double h = 1e-7;
        const double fd = (prufer_angle(d, E + h, l) - prufer_angle(d, E - h, l)) / (2 * h);
        const double an = prufer_angle_derivative(solve_shooting(d, E), l);
        CHECK(an > 0.0);
        CHECK(std::fabs(an - fd) / an < 1e-4);
        ++checked;
    }
    CHECK(checked == 100);
    auto t = solve_shooting(std::vector<double>(10, 0.0), 0.3);
    CHECK(prufer_angle_derivative(t, -5) == 0.0);
}

TEST_CASE("angle quantization at eigenvalues") {
    for (double v : {0.3, 1.0}) {
        DisorderParams p{v, 0.5, 13};
        for (std::uint64_t smp = 0; smp < 3; ++smp) {
            const int L = 120;
            auto c = sample_config(p, L, smp);
            auto d = diag_of(c, v);
            auto op = build_hamiltonian(c, p);
            auto s = eigensystem(op);
            double prev = 0.0;
            int shot = 0;
            for (int j = 0; j < s.count(); ++j) {
                // angles of the eigenfunction itself
                std::vector<double> vals(2 * L + 2);
                for (int x = -L - 1; x <= L; ++x) vals[x + L + 1] = s.component(j, x);
                const double th = prufer_angles_of(vals).back();
                CHECK(std::fabs(th - (0.5 * kPi + j * kPi)) < 1e-6);
                if (j > 0) CHECK(std::fabs(th - prev - kPi) < 1e-6);
                prev = th;
                // shooting at the rounded eigenvalue where that is well conditioned
                const double psi = s.component(j, L - 1);
                if (1e-15 / (psi * psi) < 1e-8) {
                    CHECK(std::fabs(prufer_angle(d, s.eigenvalue(j), L) - (0.5 * kPi + j * kPi)) < 1e-6);
                    ++shot;
                }
            }
            if (v < 0.5) CHECK(shot > s.count() / 2);
            std::mt19937_64 rng(smp);
            std::uniform_real_distribution<double> UE(-2.5, 3.5);
            for (int i = 0; i < 300; ++i) {
                const double E = UE(rng);
                CHECK(prufer_count(d, E) == s.count_below(E));
            }
            // the eigenfunction angles agree with shooting along the way for a central state
            const int j = s.count_below(0.05);
            auto tr = solve_shooting(d, s.eigenvalue(j));
            std::vector<double> vals(2 * L + 2);
            for (int x = -L - 1; x <= L; ++x) vals[x + L + 1] = s.component(j, x);
            auto ang = prufer_angles_of(vals);
            for (int x = -L; x <= 0; ++x) CHECK(std::fabs(ang[x + L] - tr.theta(x)) < 1e-8);
        }
    }
}

TEST_CASE("c_v constant") {
    // brute force: dense grid with Eigen's SVD for the norms
    auto brute = [](double v) {
        Eigen::JacobiSVD<Eigen::Matrix2cd> sm(basis_change(v));
        double mx = 0.0;
        for (int i = 0; i <= 40000; ++i) {
            const double E = -v + 2.0 * v * i / 40000.0;
            for (int V = 0; V <= 1; ++V) {
                Eigen::JacobiSVD<Eigen::Matrix2d> sw(single_step(V, E, v));
                mx = std::max(mx, std::log(sw.singularValues()(0)));
            }
        }
        return 4.0 * std::log(sm.singularValues()(0)) + 4.0 * mx;
    };
    for (double v : {0.01, 0.1, 0.5, 1.0, 1.9}) {
        const double c = cv_constant(v);
        const double b = brute(v);
        CHECK(c > 0.0);
        CHECK(c >= b - 1e-12);
        CHECK(c <= b + 4.0 * 2.0 * v / 9999.0);
    }
    CHECK(cv_constant(0.01) < cv_constant(0.1));
    CHECK(cv_constant(0.1) < cv_constant(0.5));
    CHECK(cv_constant(0.01) < 0.1);
    CHECK(flatness_constant(0.2) == doctest::Approx(std::exp(6.0 * cv_constant(0.2))));
    CHECK_THROWS_AS(cv_constant(0.0), ParameterError);
}

TEST_CASE("energy perturbation bound") {
    DisorderParams p{0.5, 0.5, 31};
    auto c = sample_config(p, 20, 0);
    const double E = 0.2;
    CHECK(energy_perturbation_bound(c, 0.5, E, 0.0).half_width == 0.0);
    double last = 0.0;
    for (double eps : {1e-6, 1e-5, 1e-4, -1e-3}) {
        auto b = energy_perturbation_bound(c, 0.5, E, eps);
        CHECK(b.half_width > last);
        last = b.half_width;
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> Ut(0.0, 2 * kPi);
        for (int i = 0; i < 50; ++i) {
            const double a = Ut(rng);
            const Eigen::Vector2d w(std::cos(a), std::sin(a));
            const int x = -20 + static_cast<int>(rng() % 40);
            const double d = (multi_step(c, 0.5, E + eps, -20, x) * w).squaredNorm() -
                             (multi_step(c, 0.5, E, -20, x) * w).squaredNorm();
            CHECK(std::fabs(d) <= b.half_width);
        }
    }
    // G from its definition
    double G = 0.0;
    for (int x = -20; x < 19; ++x) {
        for (int y = x + 1; y <= 19; ++y) G = std::max(G, norm2x2(multi_step(c, 0.5, E, x, y)));
    }
    CHECK(energy_perturbation_bound(c, 0.5, E, 1e-3).G == doctest::Approx(G).epsilon(1e-12));
}

TEST_CASE("trajectory CSV") {
    auto t = solve_shooting(std::vector<double>(4, 0.0), 0.1);
    std::ostringstream os;
    write_trajectory_csv(os, t);
    const std::string out = os.str();
    CHECK(out.rfind("x,phi,r,theta\n", 0) == 0);
    CHECK(std::count(out.begin(), out.end(), '\n') == 6);
}
