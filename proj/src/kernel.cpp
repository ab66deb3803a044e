#include "kolmo/kernel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <sstream>

namespace kolmo {

ScaleMatrix scale_matrix(double t, int n, int d) {
    if (!(t > 0.0)) throw DomainError("scale matrix needs t > 0");
    if (n < 1 || d < 1) throw ShapeError("scale matrix needs n, d >= 1");
    return {t, n, d, scale_diagonal(t, n, d)};
}

std::shared_ptr<const FrozenFactor> factor_moments(const FrozenMoments& mom, int n, int d) {
    const double delta = mom.t - mom.s;
    if (!(delta > 0.0)) throw DegenerateIntervalError("frozen kernel needs s < t");
    auto f = std::make_shared<FrozenFactor>();
    f->s = mom.s;
    f->t = mom.t;
    f->delta = delta;
    f->n = n;
    f->d = d;
    f->anchor = mom.y;
    f->anchor_start = mom.theta_start;
    f->resolvent = mom.resolvent;
    f->covariance = mom.covariance;
    f->scale = scale_diagonal(delta, n, d);
    const Vector inv = f->scale.cwiseInverse();
    f->scaled_covariance = delta * (inv.asDiagonal() * mom.covariance * inv.asDiagonal());
    f->scaled_covariance = 0.5 * (f->scaled_covariance + f->scaled_covariance.transpose()).eval();
    f->scaled_chol.compute(f->scaled_covariance);
    if (f->scaled_chol.info() != Eigen::Success) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(f->scaled_covariance, Eigen::EigenvaluesOnly);
        std::ostringstream os;
        os << "scaled covariance is not positive definite (smallest eigenvalue " << es.eigenvalues()(0) << ")";
        throw ConditioningError(os.str());
    }
    const Matrix& l = f->scaled_chol.matrixLLT();
    double ld = 0.0;
    for (int i = 0; i < l.rows(); ++i) ld += 2.0 * std::log(l(i, i));
    f->log_det_scaled = ld;
    // log det K~ = log det K^ + 2 sum_i d i log(delta) - nd log(delta)
    const double log_delta = std::log(delta);
    double power = 0.0;
    for (int i = 1; i <= n; ++i) power += 2.0 * d * i;
    f->log_det = ld + (power - n * d) * log_delta;
    return f;
}

FrozenGaussian::FrozenGaussian(std::shared_ptr<const FrozenFactor> factor, SpaceTimePoint freeze, Vector x)
    : f_(std::move(factor)), freeze_(std::move(freeze)), x_(std::move(x)) {
    if (x_.size() != f_->resolvent.cols()) throw ShapeError("start point has wrong dimension");
    // Pull-back form of the affine flow: the frozen trajectory is a fixed point of the linearization.
    mean_ = f_->anchor + f_->resolvent * (x_ - f_->anchor_start);
}

double FrozenGaussian::scaled_distance2(const Vector& y) const {
    return f_->delta * (mean_ - y).cwiseQuotient(f_->scale).squaredNorm();
}

double FrozenGaussian::mahalanobis2(const Vector& y) const {
    if (y.size() != mean_.size()) throw ShapeError("point has wrong dimension");
    const Vector w = f_->scaled_chol.matrixL().solve((mean_ - y).cwiseQuotient(f_->scale));
    return f_->delta * w.squaredNorm();
}

Vector FrozenGaussian::precision_apply(const Vector& v) const {
    return f_->delta * f_->scaled_chol.solve(v.cwiseQuotient(f_->scale)).cwiseQuotient(f_->scale);
}

Matrix FrozenGaussian::precision_apply(const Matrix& v) const {
    const Vector inv = f_->scale.cwiseInverse();
    return f_->delta * (inv.asDiagonal() * f_->scaled_chol.solve(inv.asDiagonal() * v));
}

double FrozenGaussian::log_density(const Vector& y) const {
    const int dim = static_cast<int>(mean_.size());
    return -0.5 * dim * kLog2Pi - 0.5 * f_->log_det - 0.5 * mahalanobis2(y);
}

double FrozenGaussian::density(const Vector& y) const { return std::exp(log_density(y)); }

Vector FrozenGaussian::grad_factor(const Vector& y) const {
    return -(f_->resolvent.transpose() * precision_apply(Vector(mean_ - y)));
}

Vector FrozenGaussian::density_grad(const Vector& y) const { return grad_factor(y) * density(y); }

Vector FrozenGaussian::density_grad(const Vector& y, int j) const {
    if (j < 0 || j >= f_->n) throw DomainError("block index out of range");
    return density_grad(y).segment(j * f_->d, f_->d);
}

Matrix FrozenGaussian::hess11_factor(const Vector& y) const {
    const int d = f_->d;
    const Matrix rb = f_->resolvent.leftCols(d);
    const Matrix krb = precision_apply(rb);
    const Vector v = rb.transpose() * precision_apply(Vector(mean_ - y));
    Matrix h = -(rb.transpose() * krb);
    h = 0.5 * (h + h.transpose()).eval();
    h.noalias() += v * v.transpose();
    return h;
}

Matrix FrozenGaussian::density_hess11(const Vector& y) const { return hess11_factor(y) * density(y); }

Vector FrozenGaussian::sample(const Vector& z) const {
    if (z.size() != mean_.size()) throw ShapeError("normal vector has wrong dimension");
    const Vector lz = f_->scaled_chol.matrixL() * z;
    return mean_ + f_->scale.cwiseProduct(lz) / std::sqrt(f_->delta);
}

Matrix covariance(const FlowSolver& solver, const SpaceTimePoint& freeze, double s, double t) {
    if (!(s < t)) throw DegenerateIntervalError("covariance needs s < t");
    const Vector anchor = solver.flow(t, freeze.s, freeze.x);
    const FrozenMoments mom = solver.frozen_moments(s, t, anchor);
    Eigen::LLT<Matrix> check(mom.covariance);
    if (check.info() != Eigen::Success) {
        // raw K~ may be too ill-conditioned for LLT at small spans; decide on the scaled matrix
        factor_moments(mom, solver.spec().n, solver.spec().d);
    }
    return mom.covariance;
}

FrozenGaussian frozen_gaussian(const FlowSolver& solver, double s, double t, const Vector& x,
                               const SpaceTimePoint& freeze, const Matrix* frozen_override) {
    const Vector anchor = solver.flow(t, freeze.s, freeze.x);
    const FrozenMoments mom = solver.frozen_moments(s, t, anchor, frozen_override);
    return FrozenGaussian(factor_moments(mom, solver.spec().n, solver.spec().d), freeze, x);
}

double frozen_density(const FrozenGaussian& g, const Vector& y) { return g.density(y); }

Vector frozen_density_grad(const FrozenGaussian& g, const Vector& y, int j) { return g.density_grad(y, j); }

Matrix frozen_density_hess11(const FrozenGaussian& g, const Vector& y) { return g.density_hess11(y); }

double gsp_ratio(const FrozenGaussian& g, const Vector& xi) {
    if (xi.size() != g.mean().size()) throw ShapeError("xi has wrong dimension");
    if (xi.squaredNorm() == 0.0) throw DomainError("gsp_ratio needs xi != 0");
    const Vector& sc = g.factor().scale;
    const double num = xi.dot(g.covariance() * xi);
    return num / (sc.cwiseProduct(xi).squaredNorm() / g.delta());
}

double gsp_constant(const FrozenGaussian& g) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(g.scaled_covariance(), Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    return std::max(ev(ev.size() - 1), 1.0 / ev(0));
}

std::pair<double, double> covariance_extremes(const FrozenGaussian& g) {
    const int dim = static_cast<int>(g.mean().size());
    Matrix prec = g.precision_apply(Matrix(Matrix::Identity(dim, dim)));
    prec = 0.5 * (prec + prec.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> ep(prec, Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Matrix> ec(g.covariance(), Eigen::EigenvaluesOnly);
    return {1.0 / ep.eigenvalues()(dim - 1), ec.eigenvalues()(dim - 1)};
}

Vector sample_frozen(const FrozenGaussian& g, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Vector z(g.mean().size());
    for (int i = 0; i < z.size(); ++i) z(i) = normal(rng);
    return g.sample(z);
}

double comparison_kernel(double c, double delta, const Vector& residual, int n, int d) {
    if (!(delta > 0.0)) throw DomainError("comparison kernel needs delta > 0");
    const int dim = n * d;
    const double energy = delta * residual.cwiseQuotient(scale_diagonal(delta, n, d)).squaredNorm();
    const double log_q = 0.5 * dim * std::log(c) - 0.5 * dim * kLog2Pi - 0.5 * n * n * d * std::log(delta) -
                         0.5 * c * energy;
    return std::exp(log_q);
}

namespace {

// Smallest C >= 1 with g(C) >= target for increasing g.
template <typename G>
double smallest_constant(G g, double target) {
    if (g(1.0) >= target) return 1.0;
    double lo = 1.0;
    double hi = 2.0;
    while (g(hi) < target) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e300) return std::numeric_limits<double>::infinity();
    }
    for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) >= target ? hi : lo) = mid;
    }
    return hi;
}

}  // namespace

double envelope_lower_constant(const EnvelopeSample& sm, int n, int d) {
    const double pre = -0.5 * n * n * d * sm.log_delta;
    // need log C + C e >= pre - log q
    return smallest_constant([&](double c) { return std::log(c) + c * sm.energy; }, pre - sm.log_q);
}

double envelope_upper_constant(const EnvelopeSample& sm, int n, int d) {
    const double pre = -0.5 * n * n * d * sm.log_delta;
    // need log C - e / C >= log q - pre
    return smallest_constant([&](double c) { return std::log(c) - sm.energy / c; }, sm.log_q - pre);
}

EnvelopeFit fit_envelope(const std::vector<EnvelopeSample>& samples, int n, int d, double quantile) {
    if (samples.empty()) throw InsufficientDataError("no samples for envelope fit");
    std::vector<double> lo;
    std::vector<double> up;
    lo.reserve(samples.size());
    up.reserve(samples.size());
    for (const auto& sm : samples) {
        lo.push_back(envelope_lower_constant(sm, n, d));
        up.push_back(envelope_upper_constant(sm, n, d));
    }
    auto pick = [&](std::vector<double>& v) {
        const auto k = static_cast<std::size_t>(
            std::clamp(std::ceil(quantile * static_cast<double>(v.size())) - 1.0, 0.0, double(v.size() - 1)));
        std::nth_element(v.begin(), v.begin() + static_cast<long>(k), v.end());
        return v[k];
    };
    return {pick(lo), pick(up), static_cast<int>(samples.size())};
}

KernelEvaluator::KernelEvaluator(const FlowSolver& solver, const Matrix* frozen_override) : solver_(&solver) {
    if (frozen_override) override_ = *frozen_override;
}

std::shared_ptr<const FrozenFactor> KernelEvaluator::factor(double s, double t, const Vector& y) const {
    const Matrix* ov = override_ ? &*override_ : nullptr;
    const auto& spec = solver_->spec();
    if (!y_independent()) return factor_moments(solver_->frozen_moments(s, t, y, ov), spec.n, spec.d);
    const auto key = std::make_pair(s, t);
    {
        std::lock_guard lock(mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    // Affine drift: moments are the same along every trajectory, anchor at the origin.
    auto f = factor_moments(solver_->frozen_moments(s, t, Vector::Zero(spec.dim()), ov), spec.n, spec.d);
    std::lock_guard lock(mutex_);
    if (cache_.size() > 4096) cache_.clear();
    return cache_.emplace(key, std::move(f)).first->second;
}

FrozenGaussian KernelEvaluator::at(double s, double t, const Vector& x, const Vector& y) const {
    return FrozenGaussian(factor(s, t, y), SpaceTimePoint{t, y}, x);
}

}  // namespace kolmo
