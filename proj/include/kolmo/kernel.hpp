#pragma once

#include "kolmo/flow.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <random>

namespace kolmo {

/// Diagonal of the scale matrix diag(t^i I_d), i = 1..n.
template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> scale_diagonal(Scalar t, int n, int d) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> diag(n * d);
    Scalar p = t;
    for (int i = 0; i < n; ++i, p *= t) diag.segment(i * d, d).setConstant(p);
    return diag;
}

struct ScaleMatrix {
    double t = 1.0;
    int n = 1;
    int d = 1;
    Vector diag;

    Matrix dense() const { return diag.asDiagonal(); }
    Vector apply(const Vector& v) const { return diag.cwiseProduct(v); }
    Vector apply_inverse(const Vector& v) const { return v.cwiseQuotient(diag); }
};

/// diag(t^i I_d); throws DomainError for t <= 0.
ScaleMatrix scale_matrix(double t, int n, int d);

/// Moments along one frozen trajectory, factored in scaled coordinates.
/// Shared between all FrozenGaussian values that differ only in the start point x.
struct FrozenFactor {
    double s = 0.0;
    double t = 0.0;
    double delta = 0.0;
    int n = 1;
    int d = 1;
    Vector anchor;        // the frozen trajectory at time t
    Vector anchor_start;  // the frozen trajectory at time s
    Matrix resolvent;
    Matrix covariance;
    Matrix scaled_covariance;
    Eigen::LLT<Matrix> scaled_chol;
    Vector scale;  // diagonal of T_delta
    double log_det = 0.0;
    double log_det_scaled = 0.0;
};

/// Factors K~ through K^ = delta T^-1 K~ T^-1; throws ConditioningError if K^ is not PD.
std::shared_ptr<const FrozenFactor> factor_moments(const FrozenMoments& mom, int n, int d);

/// The frozen Gaussian kernel q~(s, t, x, .) for a fixed freezing point.
class FrozenGaussian {
public:
    FrozenGaussian(std::shared_ptr<const FrozenFactor> factor, SpaceTimePoint freeze, Vector x);

    double s() const { return f_->s; }
    double t() const { return f_->t; }
    double delta() const { return f_->delta; }
    const SpaceTimePoint& freeze() const { return freeze_; }
    const Vector& start() const { return x_; }
    const Vector& mean() const { return mean_; }
    const Matrix& covariance() const { return f_->covariance; }
    const Matrix& scaled_covariance() const { return f_->scaled_covariance; }
    const Matrix& resolvent() const { return f_->resolvent; }
    double log_det() const { return f_->log_det; }
    const FrozenFactor& factor() const { return *f_; }

    /// delta |T^-1 (mean - y)|^2, the exponent scale of the multi-scale envelopes.
    double scaled_distance2(const Vector& y) const;
    /// <K~^-1 r, r> with r = mean - y.
    double mahalanobis2(const Vector& y) const;
    /// K~^-1 v computed through the scaled factorization.
    Vector precision_apply(const Vector& v) const;
    Matrix precision_apply(const Matrix& v) const;

    double log_density(const Vector& y) const;
    double density(const Vector& y) const;
    /// d/dx_j q~ (x is the start point), block j in 0..n-1.
    Vector density_grad(const Vector& y, int j) const;
    /// Full gradient in x.
    Vector density_grad(const Vector& y) const;
    /// D^2_{x_1} q~ = (-[R* K^-1 R]_11 + [R* K^-1 (mean - y)]_1^{(x)2}) q~.
    Matrix density_hess11(const Vector& y) const;
    /// The polynomial factor of density_hess11: D^2_{x_1} q~ = hess11_factor * q~.
    Matrix hess11_factor(const Vector& y) const;
    /// The polynomial factor of the full x-gradient: grad_x q~ = grad_factor * q~.
    Vector grad_factor(const Vector& y) const;

    /// mean + T delta^{-1/2} L z with L the Cholesky factor of K^.
    Vector sample(const Vector& z) const;

private:
    std::shared_ptr<const FrozenFactor> f_;
    SpaceTimePoint freeze_;
    Vector x_;
    Vector mean_;
};

/// K~^{freeze}(s, t).
Matrix covariance(const FlowSolver& solver, const SpaceTimePoint& freeze, double s, double t);

/// Frozen Gaussian started at (s, x); mean theta~^{freeze}_{t,s}(x).
/// `frozen_override` replaces varsigma by a constant matrix.
FrozenGaussian frozen_gaussian(const FlowSolver& solver, double s, double t, const Vector& x,
                               const SpaceTimePoint& freeze, const Matrix* frozen_override = nullptr);

double frozen_density(const FrozenGaussian& g, const Vector& y);
Vector frozen_density_grad(const FrozenGaussian& g, const Vector& y, int j);
Matrix frozen_density_hess11(const FrozenGaussian& g, const Vector& y);

/// <K~ xi, xi> / ((t-s)^-1 |T xi|^2); throws DomainError for xi = 0.
double gsp_ratio(const FrozenGaussian& g, const Vector& xi);
/// max(lambda_max(K^), 1/lambda_min(K^)).
double gsp_constant(const FrozenGaussian& g);
/// (lambda_min, lambda_max) of K~; lambda_min is taken from the precision, which keeps relative accuracy.
std::pair<double, double> covariance_extremes(const FrozenGaussian& g);

Vector sample_frozen(const FrozenGaussian& g, std::mt19937_64& rng);

/// c^{nd/2} (2 pi)^{-nd/2} delta^{-n^2 d/2} exp(-c/2 delta |T^-1 r|^2).
double comparison_kernel(double c, double delta, const Vector& residual, int n, int d);

/// One sample for envelope fitting: log q, delta |T^-1 r|^2 and the prefactor exponent.
struct EnvelopeSample {
    double log_q = 0.0;
    double energy = 0.0;
    double log_delta = 0.0;
};

/// Smallest C >= 1 with C^-1 delta^{-n^2d/2} e^{-C energy} <= q (lower) and
/// q <= C delta^{-n^2d/2} e^{-energy/C} (upper), per sample.
double envelope_lower_constant(const EnvelopeSample& sample, int n, int d);
double envelope_upper_constant(const EnvelopeSample& sample, int n, int d);

struct EnvelopeFit {
    double c_lower = 1.0;
    double c_upper = 1.0;
    int samples = 0;
};

/// Constants at the given quantile (1.0 gives the worst case) of the per-sample requirements.
EnvelopeFit fit_envelope(const std::vector<EnvelopeSample>& samples, int n, int d, double quantile = 1.0);

/// q~(s, t, x, y) with the canonical freezing point (t, y), memoizing the moments
/// when they do not depend on y (affine drift). Thread-safe.
class KernelEvaluator {
public:
    explicit KernelEvaluator(const FlowSolver& solver, const Matrix* frozen_override = nullptr);

    const FlowSolver& solver() const { return *solver_; }
    FrozenGaussian at(double s, double t, const Vector& x, const Vector& y) const;
    /// Factor along the trajectory through (t, y).
    std::shared_ptr<const FrozenFactor> factor(double s, double t, const Vector& y) const;
    bool y_independent() const { return solver_->spec().affine.has_value(); }

private:
    const FlowSolver* solver_;
    std::optional<Matrix> override_;
    mutable std::mutex mutex_;
    mutable std::map<std::pair<double, double>, std::shared_ptr<const FrozenFactor>> cache_;
};

}  // namespace kolmo
