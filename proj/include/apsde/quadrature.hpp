#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include <Eigen/Eigenvalues>

#include "apsde/error.hpp"

namespace apsde {

/// n-point Gauss–Hermite rule for the standard normal measure:
/// sum_i weights[i] * f(nodes[i]) ~= E f(U), U ~ N(0, 1). Exact for
/// polynomials of degree < 2n.
struct GaussHermiteRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

namespace detail {

// Orthonormal Hermite values p_{n-1}(x), p_n(x) and sum_{k<n} p_k(x)^2,
// with p_k = He_k / sqrt(k!).
struct HermiteEval {
    double previous;
    double last;
    double christoffel;
};

inline HermiteEval orthonormal_hermite(int n, double x) {
    double p0 = 1.0;
    double p1 = x;
    double sum = 1.0;
    if (n == 1) {
        return {p0, p1, sum};
    }
    for (int k = 1; k < n; ++k) {
        sum += p1 * p1;
        const double p2 = (x * p1 - std::sqrt(static_cast<double>(k)) * p0) / std::sqrt(k + 1.0);
        p0 = p1;
        p1 = p2;
    }
    return {p0, p1, sum};
}

// Golub–Welsch on the Jacobi matrix of the probabilists' Hermite polynomials
// for starting nodes, Newton polish, then weights 1 / sum_k p_k(x_i)^2, which
// keeps the tiny outer weights accurate to relative precision.
inline GaussHermiteRule build_gauss_hermite(int n) {
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
        jacobi(k, k - 1) = jacobi(k - 1, k);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
    GaussHermiteRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = solver.eigenvalues()(i);
        for (int iter = 0; iter < 3; ++iter) {
            const HermiteEval e = orthonormal_hermite(n, x);
            // p_n' = sqrt(n) p_{n-1}
            x -= e.last / (std::sqrt(static_cast<double>(n)) * e.previous);
        }
        rule.nodes[i] = x;
        rule.weights[i] = 1.0 / orthonormal_hermite(n, x).christoffel;
    }
    // Symmetrize: nodes come in +/- pairs, weights are even.
    for (int i = 0; i < n / 2; ++i) {
        const int j = n - 1 - i;
        const double node = 0.5 * (rule.nodes[j] - rule.nodes[i]);
        const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
        rule.nodes[i] = -node;
        rule.nodes[j] = node;
        rule.weights[i] = w;
        rule.weights[j] = w;
    }
    if (n % 2 == 1) {
        rule.nodes[n / 2] = 0.0;
    }
    return rule;
}

} // namespace detail

/// Cached rule; safe to call concurrently.
inline const GaussHermiteRule& gauss_hermite(int n) {
    if (n < 2) {
        throw ParameterError("gauss_hermite: quadrature order must be >= 2, got " +
                             std::to_string(n));
    }
    static std::mutex mutex;
    static std::map<int, std::unique_ptr<const GaussHermiteRule>> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto& slot = cache[n];
    if (!slot) {
        slot = std::make_unique<const GaussHermiteRule>(detail::build_gauss_hermite(n));
    }
    return *slot;
}

} // namespace apsde
