#pragma once

#include "kolmo/core.hpp"

#include <functional>
#include <limits>
#include <optional>

namespace kolmo {

/// A bounded test function f(t, y) on the strip, with hints used to place quadrature nodes.
struct SpaceTimeField {
    std::function<double(double, const Vector&)> value;
    /// f vanishes outside [t_lo, t_hi).
    double t_lo = -std::numeric_limits<double>::infinity();
    double t_hi = std::numeric_limits<double>::infinity();
    /// Optional Gaussian-like spatial profile: centre and per-coordinate standard deviation.
    std::optional<Vector> center;
    std::optional<Vector> spread;
    /// sup |f|, when known.
    double sup_norm = std::numeric_limits<double>::quiet_NaN();

    double operator()(double t, const Vector& y) const {
        if (t < t_lo || t >= t_hi) return 0.0;
        return value(t, y);
    }
};

SpaceTimeField constant_field(double c, double t_lo = -std::numeric_limits<double>::infinity(),
                              double t_hi = std::numeric_limits<double>::infinity());

/// amplitude * exp(-sum_k (y_k - c_k)^2 / (2 w_k^2)) on [t_lo, t_hi).
SpaceTimeField gaussian_bump(double amplitude, const Vector& center, const Vector& widths, double t_lo,
                             double t_hi);

/// amplitude * bump(y) * sin^2(pi (t - t_lo)/(t_hi - t_lo)) on [t_lo, t_hi): smooth in time as well.
SpaceTimeField smooth_bump(double amplitude, const Vector& center, const Vector& widths, double t_lo,
                           double t_hi);

}  // namespace kolmo
