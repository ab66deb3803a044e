#pragma once

#include "kolmo/model.hpp"

namespace kolmo {

struct FlowOptions {
    /// Fixed RK4 steps per unit time (at least one step per call).
    int steps_per_unit = 256;
    /// Gauss–Legendre order per panel for the covariance and shift integrals.
    int gl_order = 16;
    /// Flows are only requested over |t - s| <= 2 * horizon.
    double horizon = 1.0;
    double overflow_guard = 1e12;
};

/// Everything the proxy kernel needs along the trajectory through (t, y), for a start time s:
/// theta_{s,t}(y), the resolvent R(t,s), the covariance K(s,t) and the shift m(s,t).
struct FrozenMoments {
    double s = 0.0;
    double t = 0.0;
    Vector y;
    Vector theta_start;
    Matrix resolvent;
    Matrix covariance;
    Vector shift;
};

/// Affine map x -> R x + m of the flow linearized along a frozen trajectory.
class LinearizedFlow {
public:
    LinearizedFlow(SpaceTimePoint freeze, double s, double t, Matrix resolvent, Vector shift)
        : freeze_(std::move(freeze)), s_(s), t_(t), resolvent_(std::move(resolvent)), shift_(std::move(shift)) {}

    const SpaceTimePoint& freeze() const { return freeze_; }
    double s() const { return s_; }
    double t() const { return t_; }
    const Matrix& resolvent() const { return resolvent_; }
    const Vector& shift() const { return shift_; }

    /// theta~_{t,s}(x) = R(t,s) x + m(s,t). Throws UsageError if (t,s) differ from construction.
    Vector operator()(double t, double s, const Vector& x) const;

private:
    SpaceTimePoint freeze_;
    double s_;
    double t_;
    Matrix resolvent_;
    Vector shift_;
};

/// Deterministic flows of dtheta/du = F(u, theta), resolvents of the partial gradients
/// along frozen trajectories and the associated covariance integrals.
/// Immutable after construction; all members are reentrant.
class FlowSolver {
public:
    explicit FlowSolver(ChainSpec spec, FlowOptions options = {});

    const ChainSpec& spec() const { return spec_; }
    const FlowOptions& options() const { return options_; }

    /// theta_{t,s}(x): the solution at time t of the drift ODE started from x at time s.
    Vector flow(double t, double s, const Vector& x) const;

    /// R~^{T,y}(t,s) for freeze = (T, y).
    Matrix resolvent(const SpaceTimePoint& freeze, double t, double s) const;

    /// Affine flow linearized along the trajectory through freeze, on the span (s, t).
    LinearizedFlow linearize(const SpaceTimePoint& freeze, double s, double t) const;

    /// One backward sweep from (t, y) to s. `frozen_override` replaces varsigma by a constant.
    FrozenMoments frozen_moments(double s, double t, const Vector& y, const Matrix* frozen_override = nullptr) const;

    /// T_{t-s}^{-1} R~^{freeze}(u, s) T_{t-s} for u in [s, t].
    Matrix scaled_resolvent(const SpaceTimePoint& freeze, double s, double t, double u) const;

    int steps_for(double span) const;

private:
    void check_span(double t, double s) const;
    /// (E, c) with theta_{s+tau, s}(x) = E x + c for the affine drift.
    std::pair<Matrix, Vector> affine_map(double tau) const;

    ChainSpec spec_;
    FlowOptions options_;
};

}  // namespace kolmo
