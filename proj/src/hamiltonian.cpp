#include "rdm/hamiltonian.hpp"

#include <algorithm>
#include <cmath>

#include "rdm/error.hpp"

namespace rdm {

const char* to_string(Boundary b) {
    switch (b) {
        case Boundary::plain: return "plain";
        case Boundary::dirichlet: return "dirichlet";
        case Boundary::neumann: return "neumann";
    }
    return "?";
}

Boundary parse_boundary(const std::string& s) {
    if (s == "plain") return Boundary::plain;
    if (s == "dirichlet") return Boundary::dirichlet;
    if (s == "neumann") return Boundary::neumann;
    throw ParameterError("boundary must be plain|dirichlet|neumann, got '" + s + "'");
}

double TridiagonalOperator::gershgorin_lo() const {
    double lo = 0.0;
    const int n = size();
    for (int k = 0; k < n; ++k) {
        const double off = (k > 0 ? 1.0 : 0.0) + (k + 1 < n ? 1.0 : 0.0);
        lo = std::min(lo, diag[k] - off);
    }
    return lo;
}

double TridiagonalOperator::gershgorin_hi() const {
    double hi = 0.0;
    const int n = size();
    for (int k = 0; k < n; ++k) {
        const double off = (k > 0 ? 1.0 : 0.0) + (k + 1 < n ? 1.0 : 0.0);
        hi = std::max(hi, diag[k] + off);
    }
    return hi;
}

double TridiagonalOperator::norm_bound() const {
    return std::max(std::abs(gershgorin_lo()), std::abs(gershgorin_hi()));
}

void TridiagonalOperator::apply(const double* u, double* out) const {
    const int n = size();
    for (int k = 0; k < n; ++k) {
        double s = diag[k] * u[k];
        if (k > 0) s -= u[k - 1];
        if (k + 1 < n) s -= u[k + 1];
        out[k] = s;
    }
}

static void apply_boundary(TridiagonalOperator& op) {
    const double shift = op.boundary == Boundary::dirichlet ? 1.0 : op.boundary == Boundary::neumann ? -1.0 : 0.0;
    if (shift != 0.0) {
        op.diag.front() += shift;
        op.diag.back() += shift;
    }
}

TridiagonalOperator build_hamiltonian(const PotentialConfig& config, const DisorderParams& params,
                                      Boundary boundary) {
    params.validate();
    if (config.L < 1 || config.size() != 2 * config.L) {
        throw StructuralError("config has " + std::to_string(config.size()) + " entries, expected 2L=" +
                              std::to_string(2 * config.L));
    }
    TridiagonalOperator op;
    op.L = config.L;
    op.v = params.v;
    op.boundary = boundary;
    op.diag.resize(config.values.size());
    for (std::size_t i = 0; i < config.values.size(); ++i) {
        if (config.values[i] > 1) throw StructuralError("potential values must be 0 or 1");
        op.diag[i] = params.v * config.values[i];
    }
    apply_boundary(op);
    return op;
}

TridiagonalOperator operator_from_diagonal(std::vector<double> diag, Boundary boundary) {
    if (diag.size() < 2 || diag.size() % 2 != 0) {
        throw StructuralError("diagonal length must be 2L >= 2");
    }
    TridiagonalOperator op;
    op.L = static_cast<int>(diag.size() / 2);
    op.boundary = boundary;
    op.diag = std::move(diag);
    apply_boundary(op);
    return op;
}

}  // namespace rdm
