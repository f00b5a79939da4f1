#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "rdm/eigensystem.hpp"
#include "rdm/error.hpp"
#include "rdm/hamiltonian.hpp"

using namespace rdm;

namespace {

TridiagonalOperator random_op(double v, int L, std::uint64_t sample, Boundary b = Boundary::plain) {
    DisorderParams p{v, 0.5, 2024};
    return build_hamiltonian(sample_config(p, L, sample), p, b);
}

Eigen::MatrixXd dense(const TridiagonalOperator& op) {
    const int n = op.size();
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k < n; ++k) {
        H(k, k) = op.diag[k];
        if (k + 1 < n) H(k, k + 1) = H(k + 1, k) = -1.0;
    }
    return H;
}

}  // namespace

TEST_CASE("build_hamiltonian diagonals") {
    DisorderParams p{0.0, 0.5, 3};
    auto op = build_hamiltonian(sample_config(p, 20, 0), p);
    for (double d : op.diag) CHECK(d == 0.0);

    DisorderParams q{0.5, 0.5, 3};
    op = build_hamiltonian(constant_config(10, 1), q);
    for (double d : op.diag) CHECK(d == 0.5);

    auto D = build_hamiltonian(constant_config(10, 1), q, Boundary::dirichlet);
    auto N = build_hamiltonian(constant_config(10, 1), q, Boundary::neumann);
    CHECK(D.diag.front() == 1.5);
    CHECK(D.diag.back() == 1.5);
    CHECK(N.diag.front() == -0.5);
    CHECK(N.diag[5] == 0.5);

    PotentialConfig bad = constant_config(10, 0);
    bad.values.pop_back();
    CHECK_THROWS_AS(build_hamiltonian(bad, q), StructuralError);
    CHECK_THROWS_AS(operator_from_diagonal({0.0, 1.0, 2.0}), StructuralError);
}

TEST_CASE("free spectrum and sine eigenvectors") {
    for (int L : {1, 2, 7, 50}) {
        auto op = operator_from_diagonal(std::vector<double>(2 * L, 0.0));
        const int N = 2 * L;
        auto s = eigensystem(op);
        REQUIRE(s.count() == N);
        for (int k = 1; k <= N; ++k) {
            CHECK(std::fabs(s.eigenvalue(k - 1) + 2.0 * std::cos(k * M_PI / (N + 1))) < 1e-13);
            double nrm = 0.0;
            for (int x = -L; x < L; ++x) nrm += std::pow(std::sin(k * M_PI * (x + L + 1) / (N + 1)), 2);
            nrm = std::sqrt(nrm);
            double err = 0.0;
            for (int x = -L; x < L; ++x) {
                // sign convention: first component positive, sin(k pi/(N+1)) > 0
                err = std::max(err, std::fabs(s.component(k - 1, x) - std::sin(k * M_PI * (x + L + 1) / (N + 1)) / nrm));
            }
            CHECK(err < 1e-10);
        }
        CHECK(s.component(0, -L - 1) == 0.0);
        CHECK(s.component(0, L) == 0.0);
    }
}

TEST_CASE("random config residuals, orthogonality, spectrum bounds") {
    for (double v : {0.3, 0.5, 1.0, 1.9}) {
        auto op = random_op(v, 100, 1);
        auto s = eigensystem(op);
        REQUIRE(s.count() == 200);
        auto r = residual_norms(op, s);
        CHECK(*std::max_element(r.begin(), r.end()) < 1e-9);
        CHECK(orthogonality_defect(s) < 1e-10 * 200);
        CHECK(s.eigenvalues().front() >= -2.0);
        CHECK(s.eigenvalues().back() <= 4.0);
        CHECK(s.eigenvalues().back() <= 2.0 + v + 1e-12);
        for (int j = 1; j < s.count(); ++j) CHECK(s.eigenvalue(j) > s.eigenvalue(j - 1));
        for (int j = 0; j < s.count(); ++j) {
            int x = -100;
            while (s.component(j, x) == 0.0) ++x;
            CHECK(s.component(j, x) > 0.0);
        }
    }
}

TEST_CASE("agreement with a dense solver") {
    for (std::uint64_t sample = 0; sample < 4; ++sample) {
        for (Boundary b : {Boundary::plain, Boundary::dirichlet, Boundary::neumann}) {
            auto op = random_op(0.7, 60, sample, b);
            auto s = eigensystem(op);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense(op));
            const double norm = op.norm_bound();
            for (int j = 0; j < s.count(); ++j) {
                CHECK(std::fabs(s.eigenvalue(j) - es.eigenvalues()(j)) < 1e-12 * norm);
                const double overlap = std::fabs(s.vectors().col(j).dot(es.eigenvectors().col(j)));
                CHECK(overlap > 1.0 - 1e-9);
            }
        }
    }
}

TEST_CASE("Sturm counts match returned eigenvalues") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(-2.5, 4.5);
    for (std::uint64_t sample = 0; sample < 3; ++sample) {
        for (double v : {0.3, 1.5}) {
            auto op = random_op(v, 80, sample);
            auto s = eigensystem(op, EigenOptions{std::nullopt, VectorMode::none});
            std::vector<double> E(1000);
            for (auto& e : E) e = U(rng);
            auto batch = eigenvalue_counts_below(op, E);
            for (std::size_t i = 0; i < E.size(); ++i) {
                const int c = eigenvalue_count_below(op, E[i]);
                CHECK(c == s.count_below(E[i]));
                CHECK(c == batch[i]);
            }
            CHECK(eigenvalue_count_below(op, -2.0001) == 0);
            CHECK(eigenvalue_count_below(op, 2.0 + v + 1e-9) == 160);
        }
    }
}

TEST_CASE("Dirichlet >= plain >= Neumann, counts within 4") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> U(-2.5, 3.0);
    for (std::uint64_t sample = 0; sample < 5; ++sample) {
        auto P = random_op(0.5, 70, sample, Boundary::plain);
        auto D = random_op(0.5, 70, sample, Boundary::dirichlet);
        auto N = random_op(0.5, 70, sample, Boundary::neumann);
        auto sp = eigensystem(P, EigenOptions{std::nullopt, VectorMode::none});
        auto sd = eigensystem(D, EigenOptions{std::nullopt, VectorMode::none});
        auto sn = eigensystem(N, EigenOptions{std::nullopt, VectorMode::none});
        for (int j = 0; j < sp.count(); ++j) {
            CHECK(sd.eigenvalue(j) >= sp.eigenvalue(j) - 1e-13);
            CHECK(sp.eigenvalue(j) >= sn.eigenvalue(j) - 1e-13);
        }
        for (int i = 0; i < 200; ++i) {
            const double E = U(rng);
            const int cp = eigenvalue_count_below(P, E);
            const int cd = eigenvalue_count_below(D, E);
            const int cn = eigenvalue_count_below(N, E);
            CHECK(std::abs(cp - cd) <= 2);
            CHECK(std::abs(cp - cn) <= 2);
            CHECK(std::abs(cd - cn) <= 4);
        }
    }
}

TEST_CASE("windowed and site-restricted queries agree with the full solve") {
    auto op = random_op(0.3, 150, 2);
    auto full = eigensystem(op);
    EigenOptions o;
    o.window = EnergyWindow{-0.4, 0.35};
    auto w = eigensystem(op, o);
    CHECK(w.first_index() == full.count_below(-0.4));
    CHECK(w.count() == full.count_below(0.35) - full.count_below(-0.4));
    CHECK_FALSE(w.complete());
    for (int j = 0; j < w.count(); ++j) {
        const int g = w.first_index() + j;
        CHECK(w.eigenvalue(j) == doctest::Approx(full.eigenvalue(g)).epsilon(1e-13));
        CHECK((w.vectors().col(j) - full.vectors().col(g)).norm() < 1e-9);
    }

    o.vectors = VectorMode::sites;
    o.sites = {-150, -3, 0, 7, 149};
    o.threads = 3;
    auto ws = eigensystem(op, o);
    REQUIRE(ws.count() == w.count());
    CHECK(ws.has_site(7));
    CHECK_FALSE(ws.has_site(8));
    CHECK_THROWS_AS(ws.component(0, 8), ContractError);
    for (int j = 0; j < ws.count(); ++j) {
        for (int x : o.sites) CHECK(std::fabs(ws.component(j, x) - w.component(j, x)) < 1e-9);
        CHECK(ws.residuals()[j] < 1e-9);
    }

    o.sites = {150};
    CHECK_THROWS_AS(eigensystem(op, o), RangeError);
    o.window = EnergyWindow{1.0, 0.0};
    CHECK_THROWS_AS(eigensystem(op, o), ParameterError);

    o = EigenOptions{};
    o.window = EnergyWindow{5.0, 6.0};
    CHECK(eigensystem(op, o).count() == 0);
}

TEST_CASE("site-restricted vectors of the free chain") {
    // zero pivots occur here; the stored components must still be normalized
    auto op = random_op(0.0, 60, 9);
    auto full = eigensystem(op);
    EigenOptions o;
    o.vectors = VectorMode::sites;
    for (int x = -21; x <= 16; ++x) o.sites.push_back(x);
    auto s = eigensystem(op, o);
    REQUIRE(s.count() == full.count());
    double worst = 0.0;
    for (int j = 0; j < s.count(); ++j)
        for (int x : o.sites) worst = std::max(worst, std::fabs(s.component(j, x) - full.component(j, x)));
    CHECK(worst < 1e-9);
}

TEST_CASE("threads do not change the result") {
    auto op = random_op(0.3, 200, 4);
    EigenOptions o;
    auto a = eigensystem(op, o);
    o.threads = 4;
    auto b = eigensystem(op, o);
    CHECK(a.eigenvalues() == b.eigenvalues());
    CHECK((a.vectors() - b.vectors()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("near-degenerate clusters stay orthonormal") {
    // two identical wells far apart: eigenvalues come in pairs split by tunnelling ~ 1e-20
    const int L = 60;
    std::vector<double> d(2 * L, 3.0);
    for (int k : {10, 11, 100, 101}) d[k] = -1.0;
    auto op = operator_from_diagonal(d);
    auto s = eigensystem(op);
    CHECK(s.diagnostics().clusters >= 1);
    CHECK(orthogonality_defect(s) < 1e-10 * 2 * L);
    auto r = residual_norms(op, s);
    CHECK(*std::max_element(r.begin(), r.end()) < 1e-9);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense(op));
    for (int j = 0; j < s.count(); ++j) CHECK(std::fabs(s.eigenvalue(j) - es.eigenvalues()(j)) < 1e-12 * 4);
    // the lowest pair is numerically tied; ordered by where the support starts
    CHECK(s.diagnostics().near_degenerate >= 1);
    auto first_big = [&](int j) {
        double mx = s.vectors().col(j).cwiseAbs().maxCoeff();
        int k = 0;
        while (std::fabs(s.vectors()(k, j)) < 1e-3 * mx) ++k;
        return k;
    };
    CHECK(first_big(0) <= first_big(1));
}

TEST_CASE("residual CSV") {
    auto op = random_op(0.3, 3, 0);
    auto s = eigensystem(op);
    std::ostringstream os;
    write_residual_csv(os, s);
    const std::string out = os.str();
    CHECK(out.rfind("index,eigenvalue,residual\n", 0) == 0);
    CHECK(std::count(out.begin(), out.end(), '\n') == 7);
}

TEST_CASE("close but resolvable pairs keep their node counts") {
    // wells at slightly different distances from the ends: gap ~ 1e-8
    const int L = 60;
    std::vector<double> d(2 * L, 3.0);
    for (int k : {5, 6, 2 * L - 8, 2 * L - 7}) d[k] = -1.0;
    auto op = operator_from_diagonal(d);
    for (VectorMode mode : {VectorMode::all, VectorMode::sites}) {
        EigenOptions o;
        o.vectors = mode;
        if (mode == VectorMode::sites) o.sites = {-L, -L + 5, L - 8, L - 1};
        auto s = eigensystem(op, o);
        CHECK(s.eigenvalue(1) - s.eigenvalue(0) < 1e-6);
        CHECK(s.diagnostics().clusters == 0);
        if (mode == VectorMode::sites) continue;
        CHECK(orthogonality_defect(s) < 1e-10 * 2 * L);
        for (int j = 0; j < 2; ++j) {
            int changes = 0;
            for (int x = -L + 1; x < L; ++x) changes += s.component(j, x) * s.component(j, x - 1) < 0.0;
            CHECK(changes == j);
        }
    }
}

TEST_CASE("tunnelling pair near the band edge keeps its node counts") {
    // gap ~2e-6 between j = 946 and 947; the twisted vectors overlap by ~1e-11
    DisorderParams p{0.3, 0.5, 505};
    const int L = 500;
    auto s = eigensystem(build_hamiltonian(sample_config(p, L, 10), p));
    CHECK(s.eigenvalue(947) - s.eigenvalue(946) < 3e-6);
    CHECK(orthogonality_defect(s) < 1e-8);
    for (int j = 940; j < 954; ++j) {
        int changes = 0;
        for (int x = -L + 1; x < L; ++x) changes += s.component(j, x) * s.component(j, x - 1) < 0.0;
        CHECK(changes == j);
    }
}
