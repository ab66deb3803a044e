#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace kolmo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A point (s, x) of the space-time strip, x partitioned into n blocks of size d.
struct SpaceTimePoint {
    double s = 0.0;
    Vector x;
};

// Error hierarchy. Every failure mode named by a module contract has its own type
// so callers (and the CLI runner) can record it without string matching.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ModelEvaluationError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class DivergenceError : public Error { using Error::Error; };
class ConditioningError : public Error { using Error::Error; };
class AccuracyError : public Error { using Error::Error; };
class UsageError : public Error { using Error::Error; };
class DegenerateIntervalError : public Error { using Error::Error; };
class ResolutionError : public Error { using Error::Error; };
class DivergentSeriesError : public Error { using Error::Error; };
class StepSizeError : public Error { using Error::Error; };
class InsufficientDataError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };

/// Block view helpers: block i (0-based) of a vector partitioned into blocks of size d.
template <typename Derived>
auto block(Eigen::MatrixBase<Derived>& v, int i, int d) {
    return v.segment(i * d, d);
}

template <typename Derived>
auto block(const Eigen::MatrixBase<Derived>& v, int i, int d) {
    return v.segment(i * d, d);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.allFinite();
}

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLog2Pi = 1.83787706640934548356;

}  // namespace kolmo
