#include "kolmo/flow.hpp"

#include "kolmo/kernel.hpp"
#include "kolmo/quadrature.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <sstream>

namespace kolmo {

Vector LinearizedFlow::operator()(double t, double s, const Vector& x) const {
    if (t != t_ || s != s_) throw UsageError("linearized flow evaluated on a span it was not built for");
    if (x.size() != resolvent_.cols()) throw ShapeError("point has wrong dimension");
    return resolvent_ * x + shift_;
}

FlowSolver::FlowSolver(ChainSpec spec, FlowOptions options) : spec_(std::move(spec)), options_(options) {
    if (options_.steps_per_unit < 1) throw DomainError("steps_per_unit must be >= 1");
    if (options_.gl_order < 1) throw DomainError("gl_order must be >= 1");
}

int FlowSolver::steps_for(double span) const {
    return std::max(1, static_cast<int>(std::ceil(options_.steps_per_unit * std::abs(span) - 1e-9)));
}

void FlowSolver::check_span(double t, double s) const {
    if (!std::isfinite(t) || !std::isfinite(s)) throw DomainError("non-finite time");
    if (std::abs(t - s) > 2.0 * options_.horizon * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << "flow span |t-s| = " << std::abs(t - s) << " exceeds twice the horizon " << options_.horizon;
        throw DomainError(os.str());
    }
}

std::pair<Matrix, Vector> FlowSolver::affine_map(double tau) const {
    const auto& aff = *spec_.affine;
    const int dim = spec_.dim();
    Matrix aug = Matrix::Zero(dim + 1, dim + 1);
    aug.topLeftCorner(dim, dim) = aff.A * tau;
    aug.topRightCorner(dim, 1) = aff.b * tau;
    const Matrix e = aug.exp();
    return {e.topLeftCorner(dim, dim), e.topRightCorner(dim, 1)};
}

namespace {

void guard(const Vector& state, double limit, double u) {
    // also used on RK stage inputs so that overflow is caught before the drift sees it
    if (!state.allFinite() || state.cwiseAbs().maxCoeff() > limit) {
        std::ostringstream os;
        os << "flow diverged near time " << u;
        throw DivergenceError(os.str());
    }
}

}  // namespace

Vector FlowSolver::flow(double t, double s, const Vector& x) const {
    check_span(t, s);
    if (x.size() != spec_.dim()) throw ShapeError("point has wrong dimension");
    if (!x.allFinite()) throw DomainError("non-finite start point");
    if (t == s) return x;
    if (spec_.affine) {
        auto [e, c] = affine_map(t - s);
        return e * x + c;
    }
    const int steps = steps_for(t - s);
    const double h = (t - s) / steps;
    const double limit = options_.overflow_guard;
    auto stage = [&](double u, const Vector& z) {
        guard(z, limit, u);
        return eval_drift(spec_, u, z);
    };
    Vector z = x;
    for (int k = 0; k < steps; ++k) {
        const double u = s + k * h;
        const Vector k1 = stage(u, z);
        const Vector k2 = stage(u + 0.5 * h, z + 0.5 * h * k1);
        const Vector k3 = stage(u + 0.5 * h, z + 0.5 * h * k2);
        const Vector k4 = stage(u + h, z + h * k3);
        z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        guard(z, options_.overflow_guard, u + h);
    }
    return z;
}

Matrix FlowSolver::resolvent(const SpaceTimePoint& freeze, double t, double s) const {
    check_span(t, s);
    const int dim = spec_.dim();
    if (freeze.x.size() != dim) throw ShapeError("freeze point has wrong dimension");
    if (t == s) return Matrix::Identity(dim, dim);
    if (spec_.affine) return (spec_.affine->A * (t - s)).exp();

    // Joint forward integration of (theta_{u,T}(y), R(u,s)) from u = s to u = t.
    Vector z = flow(s, freeze.s, freeze.x);
    Matrix r = Matrix::Identity(dim, dim);
    const int steps = steps_for(t - s);
    const double h = (t - s) / steps;
    for (int k = 0; k < steps; ++k) {
        const double u = s + k * h;
        const Vector f1 = eval_drift(spec_, u, z);
        const Matrix a1 = eval_partial_gradient(spec_, u, z);
        const Vector z2 = z + 0.5 * h * f1;
        guard(z2, options_.overflow_guard, u);
        const Vector f2 = eval_drift(spec_, u + 0.5 * h, z2);
        const Matrix a2 = eval_partial_gradient(spec_, u + 0.5 * h, z2);
        const Vector z3 = z + 0.5 * h * f2;
        guard(z3, options_.overflow_guard, u);
        const Vector f3 = eval_drift(spec_, u + 0.5 * h, z3);
        const Matrix a3 = eval_partial_gradient(spec_, u + 0.5 * h, z3);
        const Vector z4 = z + h * f3;
        guard(z4, options_.overflow_guard, u);
        const Matrix a4 = eval_partial_gradient(spec_, u + h, z4);
        const Vector f4 = eval_drift(spec_, u + h, z4);

        const Matrix r1 = a1 * r;
        const Matrix r2 = a2 * (r + 0.5 * h * r1);
        const Matrix r3 = a3 * (r + 0.5 * h * r2);
        const Matrix r4 = a4 * (r + h * r3);
        r += (h / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
        z += (h / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4);
        guard(z, options_.overflow_guard, u + h);
    }
    if (!r.allFinite()) throw ModelEvaluationError("non-finite resolvent");
    return r;
}

FrozenMoments FlowSolver::frozen_moments(double s, double t, const Vector& y, const Matrix* frozen_override) const {
    check_span(t, s);
    const int dim = spec_.dim();
    const int d = spec_.d;
    if (y.size() != dim) throw ShapeError("freeze point has wrong dimension");

    FrozenMoments mom;
    mom.s = s;
    mom.t = t;
    mom.y = y;
    mom.covariance = Matrix::Zero(dim, dim);
    mom.shift = Vector::Zero(dim);
    if (t == s) {
        mom.theta_start = y;
        mom.resolvent = Matrix::Identity(dim, dim);
        return mom;
    }

    auto frozen_at = [&](double u) -> Matrix {
        return frozen_override ? *frozen_override : eval_frozen_coeff(spec_, u);
    };
    const bool constant_frozen = frozen_override != nullptr || spec_.constant_frozen_coeff;

    // Integrals below are accumulated as \int_t^s (signed) and negated at the end.
    if (spec_.affine) {
        const auto& aff = *spec_.affine;
        auto [e_back, c_back] = affine_map(s - t);
        mom.theta_start = e_back * y + c_back;
        auto [e_fwd, c_fwd] = affine_map(t - s);
        mom.resolvent = e_fwd;
        mom.shift = c_fwd;
        int panels = steps_for(t - s);
        if (constant_frozen) {
            const double norm = aff.A.lpNorm<Eigen::Infinity>();
            panels = std::max(1, static_cast<int>(std::ceil(norm * std::abs(t - s))));
        }
        const Matrix fixed = constant_frozen ? frozen_at(t) : Matrix();
        const double h = (t - s) / panels;
        for (int k = 0; k < panels; ++k) {
            const auto rule = gauss_legendre(options_.gl_order, s + k * h, s + (k + 1) * h);
            for (int j = 0; j < rule.size(); ++j) {
                const double u = rule.nodes(j);
                const Matrix p1 = (aff.A * (t - u)).exp().leftCols(d);
                const Matrix sig = constant_frozen ? fixed : frozen_at(u);
                mom.covariance.noalias() += rule.weights(j) * (p1 * sig * p1.transpose());
            }
        }
        mom.covariance = 0.5 * (mom.covariance + mom.covariance.transpose()).eval();
        return mom;
    }

    // Backward sweep: theta_u = theta_{u,t}(y), P(u) = R~^{t,y}(t,u), dP/du = -P DF(u, theta_u).
    struct State {
        Vector z;
        Matrix p;
    };
    auto rk4 = [&](const State& st, double u, double h) {
        auto rhs = [&](double uu, const Vector& z, const Matrix& p, Vector& dz, Matrix& dp) {
            guard(z, options_.overflow_guard, uu);
            dz = eval_drift(spec_, uu, z);
            dp = -p * eval_partial_gradient(spec_, uu, z);
        };
        Vector dz1, dz2, dz3, dz4;
        Matrix dp1, dp2, dp3, dp4;
        rhs(u, st.z, st.p, dz1, dp1);
        rhs(u + 0.5 * h, st.z + 0.5 * h * dz1, st.p + 0.5 * h * dp1, dz2, dp2);
        rhs(u + 0.5 * h, st.z + 0.5 * h * dz2, st.p + 0.5 * h * dp2, dz3, dp3);
        rhs(u + h, st.z + h * dz3, st.p + h * dp3, dz4, dp4);
        State out{st.z + (h / 6.0) * (dz1 + 2.0 * dz2 + 2.0 * dz3 + dz4),
                  st.p + (h / 6.0) * (dp1 + 2.0 * dp2 + 2.0 * dp3 + dp4)};
        guard(out.z, options_.overflow_guard, u + h);
        return out;
    };

    const int steps = steps_for(t - s);
    const double h = (s - t) / steps;
    State st{y, Matrix::Identity(dim, dim)};
    const QuadratureRule& base = gauss_legendre(options_.gl_order);
    Matrix cov_acc = Matrix::Zero(dim, dim);
    Vector shift_acc = Vector::Zero(dim);
    for (int k = 0; k < steps; ++k) {
        const double u0 = t + k * h;
        for (int j = 0; j < base.size(); ++j) {
            const double off = 0.5 * h * (base.nodes(j) + 1.0);
            const double w = 0.5 * h * base.weights(j);
            const State node = rk4(st, u0, off);
            const double u = u0 + off;
            const Matrix p1 = node.p.leftCols(d);
            cov_acc.noalias() += w * (p1 * frozen_at(u) * p1.transpose());
            const Vector g = eval_drift(spec_, u, node.z) - eval_partial_gradient(spec_, u, node.z) * node.z;
            shift_acc.noalias() += w * (node.p * g);
        }
        st = rk4(st, u0, h);
    }
    mom.theta_start = st.z;
    mom.resolvent = st.p;
    mom.covariance = -0.5 * (cov_acc + cov_acc.transpose());
    mom.shift = -shift_acc;
    if (!mom.covariance.allFinite() || !mom.resolvent.allFinite())
        throw ModelEvaluationError("non-finite frozen moments");
    return mom;
}

LinearizedFlow FlowSolver::linearize(const SpaceTimePoint& freeze, double s, double t) const {
    if (freeze.x.size() != spec_.dim()) throw ShapeError("freeze point has wrong dimension");
    // The frozen trajectory passes through z at time t; the moments along it give R and m.
    const Vector z = flow(t, freeze.s, freeze.x);
    FrozenMoments mom = frozen_moments(s, t, z);
    return LinearizedFlow(freeze, s, t, std::move(mom.resolvent), std::move(mom.shift));
}

Matrix FlowSolver::scaled_resolvent(const SpaceTimePoint& freeze, double s, double t, double u) const {
    if (t == s) throw DegenerateIntervalError("scaled resolvent needs t != s");
    const double lo = std::min(s, t);
    const double hi = std::max(s, t);
    if (u < lo - 1e-15 || u > hi + 1e-15) throw DomainError("u must lie in [s, t]");
    const Vector scale = scale_diagonal(std::abs(t - s), spec_.n, spec_.d);
    const Matrix r = resolvent(freeze, u, s);
    return scale.cwiseInverse().asDiagonal() * r * scale.asDiagonal();
}

}  // namespace kolmo
