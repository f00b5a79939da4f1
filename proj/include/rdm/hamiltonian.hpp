#pragma once

#include <string>
#include <vector>

#include "rdm/disorder.hpp"

namespace rdm {

enum class Boundary { plain, dirichlet, neumann };

const char* to_string(Boundary b);
Boundary parse_boundary(const std::string& s);

// H on the box {-L..L-1}: diagonal v*V(x) (+/-1 at both ends for the rank-2 variants),
// off-diagonal -1
struct TridiagonalOperator {
    int L = 0;
    double v = 0.0;
    Boundary boundary = Boundary::plain;
    std::vector<double> diag;

    int size() const { return static_cast<int>(diag.size()); }
    // Gershgorin bound on the spectral norm
    double norm_bound() const;
    double gershgorin_lo() const;
    double gershgorin_hi() const;
    // (H u)(x) with zero outside the box
    void apply(const double* u, double* out) const;
};

TridiagonalOperator build_hamiltonian(const PotentialConfig& config, const DisorderParams& params,
                                      Boundary boundary = Boundary::plain);

// from an explicit diagonal (size 2L, boundary shifts not yet applied)
TridiagonalOperator operator_from_diagonal(std::vector<double> diag, Boundary boundary = Boundary::plain);

}  // namespace rdm
