#pragma once

#include "kolmo/core.hpp"

#include <vector>

namespace kolmo {

/// One-dimensional rule: nodes and weights.
struct QuadratureRule {
    Vector nodes;
    Vector weights;
    int size() const { return static_cast<int>(nodes.size()); }
};

/// Gauss–Legendre rule of the given order on [-1, 1] (Golub–Welsch).
const QuadratureRule& gauss_legendre(int order);

/// Gauss–Legendre rule mapped to [a, b].
QuadratureRule gauss_legendre(int order, double a, double b);

/// Gauss–Hermite rule for the standard normal weight, weights summing to one.
const QuadratureRule& gauss_hermite(int order);

/// Tensor-product Gauss–Hermite rule in `dim` dimensions: nodes are columns.
struct TensorRule {
    Matrix nodes;     // dim x count
    Vector weights;   // count
    Vector log_normal;  // log of the standard normal density at each node
};

const TensorRule& gauss_hermite_tensor(int order, int dim);

/// Dyadic panels of (lo, hi] accumulating towards lo: [lo + w 2^-k-1, lo + w 2^-k].
/// The innermost panel starts at lo + w 2^-levels.
std::vector<std::pair<double, double>> dyadic_panels(double lo, double hi, int levels);

}  // namespace kolmo
