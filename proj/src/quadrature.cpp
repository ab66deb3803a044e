#include "kolmo/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <map>
#include <mutex>

namespace kolmo {

namespace {

// Golub–Welsch: nodes are eigenvalues of the symmetric Jacobi matrix, weights are
// mu0 times the squared first eigenvector components.
QuadratureRule golub_welsch(const Vector& off_diag, double mu0) {
    const int n = static_cast<int>(off_diag.size()) + 1;
    Matrix jacobi = Matrix::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) {
        jacobi(i, i + 1) = off_diag(i);
        jacobi(i + 1, i) = off_diag(i);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(jacobi);
    QuadratureRule rule;
    rule.nodes = es.eigenvalues();
    rule.weights = mu0 * es.eigenvectors().row(0).transpose().array().square();
    return rule;
}

QuadratureRule make_legendre(int order) {
    if (order < 1) throw DomainError("Gauss-Legendre order must be >= 1");
    if (order == 1) return {Vector::Zero(1), Vector::Constant(1, 2.0)};
    Vector beta(order - 1);
    for (int k = 1; k < order; ++k) beta(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
    auto rule = golub_welsch(beta, 2.0);
    // symmetrize to kill eigen-solver asymmetry
    for (int i = 0; i < order / 2; ++i) {
        const int j = order - 1 - i;
        const double x = 0.5 * (rule.nodes(j) - rule.nodes(i));
        const double w = 0.5 * (rule.weights(i) + rule.weights(j));
        rule.nodes(i) = -x;
        rule.nodes(j) = x;
        rule.weights(i) = rule.weights(j) = w;
    }
    if (order % 2 == 1) rule.nodes(order / 2) = 0.0;
    return rule;
}

QuadratureRule make_hermite(int order) {
    if (order < 1) throw DomainError("Gauss-Hermite order must be >= 1");
    if (order == 1) return {Vector::Zero(1), Vector::Ones(1)};
    Vector beta(order - 1);
    for (int k = 1; k < order; ++k) beta(k - 1) = std::sqrt(static_cast<double>(k));
    auto rule = golub_welsch(beta, 1.0);
    for (int i = 0; i < order / 2; ++i) {
        const int j = order - 1 - i;
        const double x = 0.5 * (rule.nodes(j) - rule.nodes(i));
        const double w = 0.5 * (rule.weights(i) + rule.weights(j));
        rule.nodes(i) = -x;
        rule.nodes(j) = x;
        rule.weights(i) = rule.weights(j) = w;
    }
    if (order % 2 == 1) rule.nodes(order / 2) = 0.0;
    rule.weights /= rule.weights.sum();
    return rule;
}

std::mutex g_cache_mutex;

}  // namespace

const QuadratureRule& gauss_legendre(int order) {
    static std::map<int, QuadratureRule> cache;
    std::lock_guard lock(g_cache_mutex);
    auto it = cache.find(order);
    if (it == cache.end()) it = cache.emplace(order, make_legendre(order)).first;
    return it->second;
}

QuadratureRule gauss_legendre(int order, double a, double b) {
    QuadratureRule rule = gauss_legendre(order);
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    rule.nodes = (mid + half * rule.nodes.array()).matrix();
    rule.weights *= half;
    return rule;
}

const QuadratureRule& gauss_hermite(int order) {
    static std::map<int, QuadratureRule> cache;
    std::lock_guard lock(g_cache_mutex);
    auto it = cache.find(order);
    if (it == cache.end()) it = cache.emplace(order, make_hermite(order)).first;
    return it->second;
}

const TensorRule& gauss_hermite_tensor(int order, int dim) {
    static std::map<std::pair<int, int>, TensorRule> cache;
    const QuadratureRule& base = gauss_hermite(order);
    std::lock_guard lock(g_cache_mutex);
    auto key = std::make_pair(order, dim);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    long count = 1;
    for (int k = 0; k < dim; ++k) count *= order;
    TensorRule rule;
    rule.nodes.resize(dim, count);
    rule.weights.resize(count);
    rule.log_normal.resize(count);
    std::vector<int> idx(dim, 0);
    for (long c = 0; c < count; ++c) {
        double w = 1.0;
        double sq = 0.0;
        for (int k = 0; k < dim; ++k) {
            const double z = base.nodes(idx[k]);
            rule.nodes(k, c) = z;
            w *= base.weights(idx[k]);
            sq += z * z;
        }
        rule.weights(c) = w;
        rule.log_normal(c) = -0.5 * dim * kLog2Pi - 0.5 * sq;
        for (int k = 0; k < dim; ++k) {
            if (++idx[k] < order) break;
            idx[k] = 0;
        }
    }
    return cache.emplace(key, std::move(rule)).first->second;
}

std::vector<std::pair<double, double>> dyadic_panels(double lo, double hi, int levels) {
    std::vector<std::pair<double, double>> panels;
    if (!(hi > lo)) return panels;
    const double w = hi - lo;
    double right = hi;
    for (int k = 1; k <= levels; ++k) {
        const double left = lo + w * std::ldexp(1.0, -k);
        panels.emplace_back(left, right);
        right = left;
    }
    panels.emplace_back(lo, right);
    return panels;
}

}  // namespace kolmo
