#include "kolmo/parametrix.hpp"

#include "proposal.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ostream>
#include <thread>

namespace kolmo {

void validate_green_config(const GreenConfig& cfg) {
    if (!(cfg.horizon > 0.0 && cfg.horizon <= 1.0)) throw ConfigError("horizon T must lie in (0, 1]");
    if (cfg.neumann_depth < 0) throw ConfigError("neumann_depth must be >= 0");
    if (!(cfg.p >= 1.0)) throw ConfigError("norm exponent p must be >= 1");
    if (cfg.gl_order < 1 || cfg.gh_order < 1 || cfg.time_levels < 1) throw ConfigError("quadrature orders must be positive");
    if (!(cfg.refine_tol > 0.0)) throw ConfigError("refine_tol must be positive");
}

namespace {

// Everything an integrand may need at one quadrature node.
struct Node {
    const FrozenGaussian& g;
    double t;
    const Vector& y;
    const Vector& theta;  // theta_{s,t}(y), the true flow pulled back to time s
};

using Integrand = std::function<void(const Node&, Vector& out)>;

struct Accum {
    Vector value;
    Vector mass;
    double weight_mass = 0.0;  // sum of |q~ f| weights, the round-off reference
};

using Panels = std::vector<std::pair<double, double>>;

Panels time_panels(double s, double lo, double hi, int levels, int split) {
    Panels out;
    for (const auto& [a, b] : dyadic_panels(s, hi, levels)) {
        const double l = std::max(a, lo);
        if (b <= l) continue;
        for (int k = 0; k < split; ++k) out.emplace_back(l + (b - l) * k / split, l + (b - l) * (k + 1) / split);
    }
    return out;
}

Accum integrate(const GreenConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f, double s, const Vector& x,
                const Panels& panels, int gh, int outputs, const Integrand& integrand) {
    const FlowSolver& solver = ev.solver();
    const auto& spec = solver.spec();
    const int n = spec.n;
    const int d = spec.d;
    const TensorRule& rule = gauss_hermite_tensor(gh, spec.dim());
    Accum acc{Vector::Zero(outputs), Vector::Zero(outputs)};
    Vector out(outputs);
    Vector slice(outputs), slice_mass(outputs);
    for (const auto& [a, b] : panels) {
        const auto gl = gauss_legendre(cfg.gl_order, a, b);
        for (int q = 0; q < gl.size(); ++q) {
            const double t = gl.nodes(q);
            const double u = t - s;
            const Vector scale = scale_diagonal(u, n, d) / std::sqrt(u);
            const Vector center = solver.flow(t, s, x);
            const auto f0 = ev.factor(s, t, center);
            const detail::Proposal prop = detail::make_proposal(center, scale, f0->scaled_covariance, &f);
            Matrix rinv;
            if (ev.y_independent()) rinv = f0->resolvent.inverse();
            slice.setZero();
            slice_mass.setZero();
            for (int k = 0; k < static_cast<int>(rule.weights.size()); ++k) {
                const Vector y = prop.point(rule.nodes.col(k));
                const double fv = f(t, y);
                if (fv == 0.0) continue;
                const auto fac = ev.y_independent() ? f0 : ev.factor(s, t, y);
                const FrozenGaussian g(fac, SpaceTimePoint{t, y}, x);
                const Vector theta =
                    ev.y_independent() ? Vector(fac->anchor_start + rinv * (y - fac->anchor)) : fac->anchor_start;
                integrand(Node{g, t, y, theta}, out);
                const double w = rule.weights(k) * fv *
                                 std::exp(g.log_density(y) + prop.log_inv_density(rule.log_normal(k)));
                slice += w * out;
                slice_mass += std::abs(w) * out.cwiseAbs();
                acc.weight_mass += gl.weights(q) * std::abs(w);
            }
            acc.value += gl.weights(q) * slice;
            acc.mass += gl.weights(q) * slice_mass;
        }
    }
    return acc;
}

Vector run(const GreenConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f, double s, const Vector& x,
           int outputs, const Integrand& integrand) {
    validate_green_config(cfg);
    const auto& spec = ev.solver().spec();
    if (x.size() != spec.dim()) throw ShapeError("point has wrong dimension");
    if (!(s < cfg.horizon)) return Vector::Zero(outputs);
    const double hi = std::min(cfg.horizon, f.t_hi);
    const double lo = std::max(s, f.t_lo);
    // slivers below round-off carry no mass and would collapse t onto s
    if (!(hi - lo > 1e-12 * std::max(1.0, std::abs(s)))) return Vector::Zero(outputs);
    const Accum coarse =
        integrate(cfg, ev, f, s, x, time_panels(s, lo, hi, cfg.time_levels, 1), cfg.gh_order, outputs, integrand);
    if (!cfg.check_refinement) return coarse.value;
    const Accum fine =
        integrate(cfg, ev, f, s, x, time_panels(s, lo, hi, cfg.time_levels, 2), cfg.gh_order + 4, outputs, integrand);
    for (int k = 0; k < outputs; ++k) {
        const double floor = cfg.refine_tol * fine.mass(k) + 1e-12 * fine.weight_mass;
        if (std::abs(fine.value(k) - coarse.value(k)) > std::max(floor, 1e-300))
            throw AccuracyError("quadrature refinement disagrees: " + std::to_string(coarse.value(k)) + " vs " +
                                std::to_string(fine.value(k)));
    }
    return fine.value;
}

// F^{t,y}_i(s, x): F_i with block i-1 taken from x and blocks i..n from theta.
Vector partially_frozen_block(const ChainSpec& spec, double s, const Vector& x, const Vector& theta, int i) {
    const int d = spec.d;
    Vector z = theta;
    if (i > 0) z.segment((i - 1) * d, d) = x.segment((i - 1) * d, d);
    return eval_drift(spec, s, z).segment(i * d, d);
}

}  // namespace

double green(const GreenConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f, double s, const Vector& x) {
    return run(cfg, ev, f, s, x, 1, [](const Node&, Vector& out) { out(0) = 1.0; })(0);
}

double perturbation_N(const GreenConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f, double s,
                      const Vector& x) {
    const auto& spec = ev.solver().spec();
    return run(cfg, ev, f, s, x, 1, [&](const Node& nd, Vector& out) {
        const Vector fx = eval_drift(spec, s, x);
        Vector mismatch(spec.dim());
        for (int i = 0; i < spec.n; ++i)
            mismatch.segment(i * spec.d, spec.d) =
                fx.segment(i * spec.d, spec.d) - partially_frozen_block(spec, s, x, nd.theta, i);
        out(0) = mismatch.dot(nd.g.grad_factor(nd.y));
    })(0);
}

namespace {

// F^{t,y}_i(s, x) - F_i(s, theta) - D_{x_{i-1}} F_i(s, theta) (x - theta)_{i-1}
Vector taylor_remainder(const ChainSpec& spec, double s, const Vector& x, const Vector& theta, int i) {
    const int d = spec.d;
    const Matrix dfi = eval_partial_gradient(spec, s, theta).block(i * d, (i - 1) * d, d, d);
    return partially_frozen_block(spec, s, x, theta, i) - eval_drift(spec, s, theta).segment(i * d, d) -
           dfi * (x - theta).segment((i - 1) * d, d);
}

void check_block(const ChainSpec& spec, int block) {
    if (block < 1 || block >= spec.n) throw DomainError("transmission block must lie in 1..n-1");
}

}  // namespace

Vector perturbation_Ri(const GreenConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f, double s,
                       const Vector& x, int block) {
    const auto& spec = ev.solver().spec();
    check_block(spec, block);
    return run(cfg, ev, f, s, x, spec.d,
               [&](const Node& nd, Vector& out) { out = taylor_remainder(spec, s, x, nd.theta, block); });
}

double perturbation_DRi(const GreenConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f, double s,
                        const Vector& x, int block) {
    const auto& spec = ev.solver().spec();
    check_block(spec, block);
    return run(cfg, ev, f, s, x, 1, [&](const Node& nd, Vector& out) {
        out(0) = taylor_remainder(spec, s, x, nd.theta, block)
                     .dot(nd.g.grad_factor(nd.y).segment(block * spec.d, spec.d));
    })(0);
}

double remainder_R(const GreenConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f, double s,
                   const Vector& x) {
    const auto& spec = ev.solver().spec();
    const Vector fx = eval_drift(spec, s, x);
    const Matrix da = eval_diffusion(spec, s, x) - eval_frozen_coeff(spec, s);
    return run(cfg, ev, f, s, x, 1, [&](const Node& nd, Vector& out) {
        const Vector lin = eval_drift(spec, s, nd.theta) + eval_partial_gradient(spec, s, nd.theta) * (x - nd.theta);
        double v = (fx - lin).dot(nd.g.grad_factor(nd.y));
        if (!da.isZero(0.0)) v += 0.5 * (da * nd.g.hess11_factor(nd.y)).trace();
        out(0) = v;
    })(0);
}

RemainderParts remainder_parts(const GreenConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f, double s,
                               const Vector& x) {
    const auto& spec = ev.solver().spec();
    const int n = spec.n;
    const int d = spec.d;
    const Vector fx = eval_drift(spec, s, x);
    const Matrix da = eval_diffusion(spec, s, x) - eval_frozen_coeff(spec, s);
    // outputs: total, N, diffusion, transmission blocks 1..n-1
    const Vector v = run(cfg, ev, f, s, x, 2 + n, [&](const Node& nd, Vector& out) {
        const Vector grad = nd.g.grad_factor(nd.y);
        const Vector lin = eval_drift(spec, s, nd.theta) + eval_partial_gradient(spec, s, nd.theta) * (x - nd.theta);
        const double diff = 0.5 * (da * nd.g.hess11_factor(nd.y)).trace();
        out(0) = (fx - lin).dot(grad) + diff;
        Vector mismatch(spec.dim());
        for (int i = 0; i < n; ++i)
            mismatch.segment(i * d, d) = fx.segment(i * d, d) - partially_frozen_block(spec, s, x, nd.theta, i);
        out(1) = mismatch.dot(grad);
        out(2) = diff;
        out(3) = 0.0;
        for (int i = 1; i < n; ++i)
            out(2 + i) = taylor_remainder(spec, s, x, nd.theta, i).dot(grad.segment(i * d, d));
    });
    RemainderParts parts;
    parts.total = v(0);
    parts.drift_mismatch = v(1);
    parts.diffusion = v(2);
    for (int i = 1; i < n; ++i) parts.transmission.push_back(v(2 + i));
    return parts;
}

// ---------------------------------------------------------------------------

namespace {

double axis_step(double lo, double hi, int m) { return m > 1 ? (hi - lo) / (m - 1) : 0.0; }

}  // namespace

double GridField::operator()(double t, const Vector& y) const {
    const int dim = static_cast<int>(grid.x_lo.size());
    if (y.size() != dim) throw ShapeError("point has wrong dimension");
    // axis 0 is time, axes 1..dim are coordinates; linear index has coordinate 0 fastest, time slowest
    std::vector<int> base(dim + 1);
    std::vector<double> frac(dim + 1);
    std::vector<int> count(dim + 1);
    std::vector<long> stride(dim + 1);
    long st = 1;
    for (int k = 0; k < dim; ++k) {
        stride[k + 1] = st;
        st *= grid.x_points[k];
    }
    stride[0] = st;
    auto locate = [&](int axis, double v, double lo, double hi, int m) {
        count[axis] = m;
        if (m == 1) {
            base[axis] = 0;
            frac[axis] = 0.0;
            return v >= lo && v <= hi;
        }
        if (v < lo || v > hi) return false;
        const double pos = (v - lo) / axis_step(lo, hi, m);
        base[axis] = std::min(static_cast<int>(pos), m - 2);
        frac[axis] = pos - base[axis];
        return true;
    };
    if (!locate(0, t, grid.t_lo, grid.t_hi, grid.t_points)) return 0.0;
    for (int k = 0; k < dim; ++k)
        if (!locate(k + 1, y(k), grid.x_lo(k), grid.x_hi(k), grid.x_points[k])) return 0.0;
    double acc = 0.0;
    for (long corner = 0; corner < (1L << (dim + 1)); ++corner) {
        double w = 1.0;
        long idx = 0;
        bool skip = false;
        for (int a = 0; a <= dim; ++a) {
            const int bit = (corner >> a) & 1;
            if (count[a] == 1 && bit) {
                skip = true;
                break;
            }
            w *= bit ? frac[a] : 1.0 - frac[a];
            idx += (base[a] + bit) * stride[a];
        }
        if (skip || w == 0.0) continue;
        acc += w * values[static_cast<std::size_t>(idx)];
    }
    return acc;
}

SpaceTimeField GridField::field() const {
    SpaceTimeField f;
    auto self = std::make_shared<GridField>(*this);
    f.value = [self](double t, const Vector& y) { return (*self)(t, y); };
    f.t_lo = grid.t_lo;
    f.t_hi = std::nextafter(grid.t_hi, std::numeric_limits<double>::infinity());
    f.center = 0.5 * (grid.x_lo + grid.x_hi);
    Vector spread = 0.25 * (grid.x_hi - grid.x_lo);
    for (int k = 0; k < spread.size(); ++k)
        if (!(spread(k) > 0.0)) spread(k) = 1.0;
    f.spread = spread;
    double sup = 0.0;
    for (double v : values) sup = std::max(sup, std::abs(v));
    f.sup_norm = sup;
    return f;
}

GridField sample_on_grid(const SpaceTimeField& f, const StripGrid& grid) {
    GridField g{grid, {}};
    for (const auto& p : grid.points()) g.values.push_back(f(p.s, p.x));
    return g;
}

double grid_norm(const GridField& g, double p) {
    if (!(p >= 1.0)) throw DomainError("norm exponent must be >= 1");
    double cell = axis_step(g.grid.t_lo, g.grid.t_hi, g.grid.t_points);
    if (cell == 0.0) cell = 1.0;
    for (int k = 0; k < g.grid.x_lo.size(); ++k) {
        const double h = axis_step(g.grid.x_lo(k), g.grid.x_hi(k), g.grid.x_points[k]);
        if (h > 0.0) cell *= h;
    }
    double acc = 0.0;
    for (double v : g.values) acc += std::pow(std::abs(v), p);
    return std::pow(acc * cell, 1.0 / p);
}

GridField apply_on_grid(const GreenConfig& cfg, const KernelEvaluator& ev, GreenOperator op, const SpaceTimeField& f,
                        const StripGrid& grid) {
    validate_green_config(cfg);
    const auto pts = grid.points();
    GridField out{grid, std::vector<double>(pts.size(), 0.0)};
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t k = next++; k < pts.size(); k = next++) {
            try {
                const auto& p = pts[k];
                switch (op) {
                    case GreenOperator::Green: out.values[k] = green(cfg, ev, f, p.s, p.x); break;
                    case GreenOperator::N: out.values[k] = perturbation_N(cfg, ev, f, p.s, p.x); break;
                    case GreenOperator::Remainder: out.values[k] = remainder_R(cfg, ev, f, p.s, p.x); break;
                }
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = pts.size();
            }
        }
    };
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(hw, pts.size()));
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
    return out;
}

NeumannResult neumann_apply(const GreenConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f,
                            const StripGrid& grid, int depth) {
    validate_green_config(cfg);
    if (depth < 0) throw DomainError("Neumann depth must be >= 0");
    NeumannResult res;
    res.depth = depth;
    std::vector<GridField> terms;
    SpaceTimeField current = f;
    res.term_norms.push_back(grid_norm(sample_on_grid(f, grid), cfg.p));
    for (int k = 0; k <= depth; ++k) {
        GridField next = apply_on_grid(cfg, ev, GreenOperator::Remainder, current, grid);
        const double nrm = grid_norm(next, cfg.p);
        const double prev = res.term_norms.back();
        res.term_norms.push_back(nrm);
        res.residuals.push_back(nrm);
        if (prev > 0.0) {
            const double ratio = nrm / prev;
            res.operator_norm = std::max(res.operator_norm, ratio);
            if (ratio >= 1.0)
                throw DivergentSeriesError("empirical norm of R is " + std::to_string(ratio) +
                                           " >= 1; refusing to iterate the Neumann series");
        }
        if (k < depth) terms.push_back(next);
        current = next.field();
        if (nrm == 0.0) {
            // R vanishes on this data: the remaining terms are zero as well
            for (int j = k + 1; j <= depth; ++j) {
                res.term_norms.push_back(0.0);
                res.residuals.push_back(0.0);
            }
            break;
        }
    }
    SpaceTimeField series = f;
    if (!terms.empty()) {
        auto parts = std::make_shared<std::vector<GridField>>(std::move(terms));
        series.value = [f, parts](double t, const Vector& y) {
            double v = f(t, y);
            for (const auto& g : *parts) v += g(t, y);
            return v;
        };
        series.t_lo = std::min(f.t_lo, grid.t_lo);
        series.t_hi = std::max(f.t_hi, std::nextafter(grid.t_hi, std::numeric_limits<double>::infinity()));
        series.sup_norm = std::numeric_limits<double>::quiet_NaN();
    }
    res.series = std::move(series);
    return res;
}

double green_full(const GreenConfig& cfg, const KernelEvaluator& ev, const NeumannResult& series, double s,
                  const Vector& x) {
    return green(cfg, ev, series.series, s, x);
}

void write_grid_csv(std::ostream& os, const GridField& g) {
    const long dim = g.grid.x_lo.size();
    os << "time";
    for (long k = 0; k < dim; ++k) os << ",x" << k + 1;
    os << ",value\n";
    os.precision(17);
    const auto pts = g.grid.points();
    for (std::size_t k = 0; k < pts.size(); ++k) {
        os << pts[k].s;
        for (long j = 0; j < dim; ++j) os << ',' << pts[k].x(j);
        os << ',' << g.values[k] << '\n';
    }
}

// ---------------------------------------------------------------------------

PdeResidual backward_pde_residual(const FlowSolver& solver, double s, double t, const Vector& x, const Vector& y,
                                  double h, bool analytic_time_derivative) {
    const auto& spec = solver.spec();
    if (!(s < t)) throw DegenerateIntervalError("backward residual needs s < t");
    if (!analytic_time_derivative && (!(h > 0.0) || !std::isfinite(h)))
        throw DomainError("finite-difference step must be positive");
    if (!analytic_time_derivative && !(s + h < t)) throw StepSizeError("step h reaches the terminal time");
    KernelEvaluator ev(solver);
    const double norm = std::pow(t - s, 0.5 * spec.n * spec.n * spec.d);

    const FrozenGaussian g = ev.at(s, t, x, y);
    const Vector& theta = g.factor().anchor_start;
    const Vector b = eval_drift(spec, s, theta) + eval_partial_gradient(spec, s, theta) * (x - theta);
    const double q = g.density(y);
    const double lq = (b.dot(g.grad_factor(y)) + 0.5 * (eval_frozen_coeff(spec, s) * g.hess11_factor(y)).trace()) * q;

    auto residual = [&](double step) {
        const double dq = (ev.at(s + step, t, x, y).density(y) - ev.at(s - step, t, x, y).density(y)) / (2 * step);
        return std::abs(dq + lq) * norm;
    };

    PdeResidual out;
    if (analytic_time_derivative) {
        // d/ds mean = -R b, d/ds K = -R B varsigma(s) B^T R^T
        const int d = spec.d;
        const Matrix& r = g.resolvent();
        const Vector dmean = -(r * b);
        const Matrix rb = r.leftCols(d);
        const Matrix dk = -(rb * eval_frozen_coeff(spec, s) * rb.transpose());
        const Vector kr = g.precision_apply(Vector(g.mean() - y));
        const Matrix kdk = g.precision_apply(dk);
        const double dlog = -kr.dot(dmean) + 0.5 * kr.dot(dk * kr) - 0.5 * kdk.trace();
        out.value = std::abs(dlog * q + lq) * norm;
        out.value_half = out.value;
        out.observed_order = 0.0;
        return out;
    }
    out.value = residual(h);
    out.value_half = residual(0.5 * h);
    out.observed_order = out.value_half > 0.0 ? std::log2(out.value / out.value_half) : 0.0;
    // Truncation must dominate round-off before the order is meaningful; then it has to look quadratic.
    const double scale = std::abs(lq) * norm;
    const double roundoff = 1e-13 * scale / h + 1e-300;
    if (out.value > 1e3 * roundoff && out.value > 1e-6 * scale && out.observed_order < 1.5)
        throw StepSizeError("residual is not O(h^2) under halving; decrease h");
    return out;
}

namespace {

double sin_power_mean(double p) { return std::tgamma(p + 0.5) / (std::sqrt(kPi) * std::tgamma(p + 1.0)); }

}  // namespace

PointwiseFit pointwise_bound_fit(const GreenConfig& cfg, const KernelEvaluator& ev, const std::vector<double>& horizons,
                                 double p) {
    if (horizons.size() < 2) throw InsufficientDataError("pointwise fit needs at least two horizons");
    if (!(p >= 1.0)) throw DomainError("norm exponent must be >= 1");
    const auto& spec = ev.solver().spec();
    const int n = spec.n;
    const int d = spec.d;
    PointwiseFit fit;
    for (double T : horizons) {
        GreenConfig local = cfg;
        local.horizon = T;
        Vector widths(spec.dim());
        for (int i = 0; i < n; ++i) widths.segment(i * d, d).setConstant(0.5 * std::pow(T, 0.5 * (2 * i + 1)));
        const SpaceTimeField f = smooth_bump(1.0, Vector::Zero(spec.dim()), widths, 0.0, T);
        double lp = T * sin_power_mean(p);
        for (int k = 0; k < widths.size(); ++k) lp *= widths(k) * std::sqrt(2.0 * kPi / p);
        lp = std::pow(lp, 1.0 / p);
        fit.horizons.push_back(T);
        fit.ratios.push_back(std::abs(green(local, ev, f, 0.0, Vector::Zero(spec.dim()))) / lp);
    }
    const int m = static_cast<int>(fit.horizons.size());
    double mx = 0, my = 0;
    for (int k = 0; k < m; ++k) {
        mx += std::log(fit.horizons[k]) / m;
        my += std::log(fit.ratios[k]) / m;
    }
    double sxy = 0, sxx = 0;
    for (int k = 0; k < m; ++k) {
        const double dx = std::log(fit.horizons[k]) - mx;
        sxy += dx * (std::log(fit.ratios[k]) - my);
        sxx += dx * dx;
    }
    fit.exponent = sxy / sxx;
    for (int k = 0; k < m; ++k)
        fit.constant = std::max(fit.constant, fit.ratios[k] / std::pow(fit.horizons[k], fit.exponent));
    return fit;
}

std::vector<SpaceTimeField> bump_family(int n, int d, double horizon, int count) {
    if (count < 1) throw DomainError("bump family needs at least one member");
    std::vector<SpaceTimeField> fam;
    for (int k = 0; k < count; ++k) {
        const double lam = std::pow(2.0, -0.5 * k);
        Vector widths(n * d);
        for (int i = 0; i < n; ++i) widths.segment(i * d, d).setConstant(0.6 * std::pow(lam, 2 * i + 1));
        fam.push_back(smooth_bump(1.0, Vector::Zero(n * d), widths, 0.0, horizon));
    }
    return fam;
}

double empirical_norm_ratio(const GreenConfig& cfg, const KernelEvaluator& ev, GreenOperator op,
                            const std::vector<SpaceTimeField>& family, const StripGrid& grid, double p) {
    double worst = 0.0;
    for (const auto& f : family) {
        const double base = grid_norm(sample_on_grid(f, grid), p);
        if (base == 0.0) continue;
        worst = std::max(worst, grid_norm(apply_on_grid(cfg, ev, op, f, grid), p) / base);
    }
    return worst;
}

}  // namespace kolmo
