#include "kolmo/calderon.hpp"

#include "proposal.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace kolmo {

double cutoff(double delta, double u, const Vector& z, int d) {
    if (!(delta > 0.0)) throw DomainError("cutoff radius must be positive");
    const double v = std::clamp((rho(u, z, d) - delta) / delta, 0.0, 1.0);
    return 1.0 - v * v * v * (10.0 + v * (-15.0 + 6.0 * v));
}

Matrix kernel_value(const KernelEvaluator& ev, double s, double t, const Vector& x, const Vector& y) {
    const int d = ev.solver().spec().d;
    if (!(t > s)) return Matrix::Zero(d, d);
    return ev.at(s, t, x, y).density_hess11(y);
}

KernelSplit split_kernel(const SingularKernelConfig& cfg, const KernelEvaluator& ev, double s, double t,
                         const Vector& x, const Vector& y) {
    const int d = ev.solver().spec().d;
    KernelSplit out;
    out.near = Matrix::Zero(d, d);
    out.far = out.near;
    if (!(t > s)) return out;
    const Matrix k = kernel_value(ev, s, t, x, y);
    out.weight = cutoff(cfg.delta, t - s, ev.solver().flow(t, s, x) - y, d);
    out.near = out.weight * k;
    out.far = k - out.near;
    return out;
}

namespace {

using Panels = std::vector<std::pair<double, double>>;

// Dyadic annuli [eps2 2^k, eps2 2^{k+1}] clipped to [lo, hi], each cut into `split` pieces.
Panels annuli(double eps2, double lo, double hi, int split) {
    Panels out;
    for (double a = eps2; a < hi; a *= 2.0) {
        const double b = std::min(2.0 * a, hi);
        const double l = std::max(a, lo);
        if (b > l) {
            for (int k = 0; k < split; ++k)
                out.emplace_back(l + (b - l) * k / split, l + (b - l) * (k + 1) / split);
        }
    }
    return out;
}

double part_weight(KernelPart part, double eta) {
    switch (part) {
        case KernelPart::Near: return eta;
        case KernelPart::Far: return 1.0 - eta;
        default: return 1.0;
    }
}

struct Sum {
    double value = 0.0;
    double mass = 0.0;
};

Sum integrate(const SingularKernelConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f, double s,
              const Vector& x, const Panels& panels, int gh, int i, int j, KernelPart part, bool adjoint) {
    const FlowSolver& solver = ev.solver();
    const auto& spec = solver.spec();
    const int n = spec.n;
    const int d = spec.d;
    const int dim = spec.dim();
    const TensorRule& rule = gauss_hermite_tensor(gh, dim);
    const bool exact_flow = spec.affine.has_value();
    Sum sum;
    for (const auto& [a, b] : panels) {
        const auto gl = gauss_legendre(cfg.gl_order, a, b);
        for (int q = 0; q < gl.size(); ++q) {
            const double u = gl.nodes(q);
            const double wt = gl.weights(q);
            const Vector scale = scale_diagonal(u, n, d) / std::sqrt(u);
            double slice = 0.0;
            double slice_mass = 0.0;
            if (!adjoint) {
                const double t = s + u;
                const Vector center = solver.flow(t, s, x);
                const auto f0 = ev.factor(s, t, center);
                const detail::Proposal prop = detail::make_proposal(center, scale, f0->scaled_covariance, &f);
                for (int k = 0; k < static_cast<int>(rule.weights.size()); ++k) {
                    const Vector y = prop.point(rule.nodes.col(k));
                    const double fv = f(t, y);
                    if (fv == 0.0) continue;
                    const double pw = part_weight(part, part == KernelPart::Full ? 1.0 : cutoff(cfg.delta, u, center - y, d));
                    if (pw == 0.0) continue;
                    const FrozenGaussian g(ev.y_independent() ? f0 : ev.factor(s, t, y), SpaceTimePoint{t, y}, x);
                    const double h = g.hess11_factor(y)(i, j);
                    const double dens = std::exp(g.log_density(y) + prop.log_inv_density(rule.log_normal(k)));
                    const double v = rule.weights(k) * h * dens * fv * pw;
                    slice += v;
                    slice_mass += std::abs(v);
                }
            } else {
                // k*(s, t, x, y) = k(t, s, y, x): the freezing point (s, x) is fixed for the whole slice.
                const double t = s - u;
                const auto f0 = ev.factor(t, s, x);
                const Matrix rbar = scale.asDiagonal().inverse() * f0->resolvent * scale.asDiagonal();
                const Matrix rinv = rbar.inverse();
                // start points whose frozen mean lands on x (the factor may be anchored elsewhere)
                const Vector centre =
                    f0->anchor_start + scale.cwiseProduct(rinv * (x - f0->anchor).cwiseQuotient(scale));
                Matrix cov = rinv * f0->scaled_covariance * rinv.transpose();
                cov = 0.5 * (cov + cov.transpose()).eval();
                const detail::Proposal prop = detail::make_proposal(centre, scale, cov, &f);
                for (int k = 0; k < static_cast<int>(rule.weights.size()); ++k) {
                    const Vector y = prop.point(rule.nodes.col(k));
                    const double fv = f(t, y);
                    if (fv == 0.0) continue;
                    const FrozenGaussian g(f0, SpaceTimePoint{s, x}, y);
                    double pw = 1.0;
                    if (part != KernelPart::Full) {
                        const Vector moved = exact_flow ? g.mean() : solver.flow(s, t, y);
                        pw = part_weight(part, cutoff(cfg.delta, u, moved - x, d));
                        if (pw == 0.0) continue;
                    }
                    const double h = g.hess11_factor(x)(i, j);
                    const double dens = std::exp(g.log_density(x) + prop.log_inv_density(rule.log_normal(k)));
                    const double v = rule.weights(k) * h * dens * fv * pw;
                    slice += v;
                    slice_mass += std::abs(v);
                }
            }
            sum.value += wt * slice;
            sum.mass += wt * slice_mass;
        }
    }
    return sum;
}

}  // namespace

double truncated_integral(const SingularKernelConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f,
                          double s, const Vector& x, double eps, int i, int j, KernelPart part, bool adjoint) {
    const auto& spec = ev.solver().spec();
    if (!(eps > 0.0)) throw DomainError("truncation level must be positive");
    if (i < 0 || j < 0 || i >= spec.d || j >= spec.d) throw DomainError("kernel entry out of range");
    if (x.size() != spec.dim()) throw ShapeError("point has wrong dimension");
    if (cfg.gh_order < 1 || cfg.gl_order < 1) throw DomainError("quadrature orders must be positive");

    // Admissible range of the time gap u = |t - s|.
    const double t_lo = std::max(cfg.t_lo, f.t_lo);
    const double t_hi = std::min(cfg.t_hi, f.t_hi);
    double lo = adjoint ? s - t_hi : t_lo - s;
    double hi = adjoint ? s - t_lo : t_hi - s;
    lo = std::max(lo, eps * eps);
    // the cutoff vanishes once sqrt(u) >= 2 delta
    if (part == KernelPart::Near) hi = std::min(hi, 4.0 * cfg.delta * cfg.delta);
    if (!(hi > lo)) return 0.0;

    const Sum coarse = integrate(cfg, ev, f, s, x, annuli(eps * eps, lo, hi, 1), cfg.gh_order, i, j, part, adjoint);
    if (!cfg.check_refinement) return coarse.value;
    const Sum fine = integrate(cfg, ev, f, s, x, annuli(eps * eps, lo, hi, 2), cfg.gh_order + 4, i, j, part, adjoint);
    const double floor = cfg.refine_tol * std::max(fine.mass, 1e-300);
    if (std::abs(fine.value - coarse.value) > floor)
        throw AccuracyError("truncated integral not converged under refinement: " + std::to_string(coarse.value) +
                            " vs " + std::to_string(fine.value));
    return fine.value;
}

namespace {

// k^d(p; q) entry (0, 0) with p = (s, x) before q = (t, y); zero otherwise.
double near_entry(const SingularKernelConfig& cfg, const KernelEvaluator& ev, const SpaceTimePoint& p,
                  const SpaceTimePoint& q) {
    if (!(q.s > p.s)) return 0.0;
    return split_kernel(cfg, ev, p.s, q.s, p.x, q.x).near(0, 0);
}

}  // namespace

StandardEstimateReport standard_estimate_checks(const SingularKernelConfig& cfg, const KernelEvaluator& ev,
                                                const QuasiMetricContext& ctx, long sample_budget,
                                                std::mt19937_64& rng, const QuasiSampling& region,
                                                bool with_cancellation) {
    if (sample_budget < 1) throw DomainError("sample_budget must be >= 1");
    const auto& spec = ev.solver().spec();
    const int dim = spec.dim();
    const double big_n = spec.n * spec.n * spec.d + 2.0;
    const double eta = spec.holder;
    const double r_max = 2.0 * cfg.delta;
    const double r_min = 1e-3 * r_max;
    const double lam = ctx.lambda_cut;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto base_point = [&] {
        SpaceTimePoint p{region.t_lo + (region.t_hi - region.t_lo) * unif(rng), Vector(dim)};
        for (int k = 0; k < dim; ++k) p.x(k) = region.half_width * (2.0 * unif(rng) - 1.0);
        return p;
    };
    auto log_uniform = [&](double a, double b) { return a * std::pow(b / a, unif(rng)); };

    StandardEstimateReport rep;
    rep.samples = sample_budget;
    for (long k = 0; k < sample_budget; ++k) {
        // size: d(p, q) = r exactly by construction
        const SpaceTimePoint p = base_point();
        const double r = log_uniform(r_min, r_max);
        const SpaceTimePoint q = point_at_distance(ctx, p, r, rng, +1);
        rep.size_bound = std::max(rep.size_bound, std::abs(near_entry(cfg, ev, p, q)) * std::pow(r, big_n));
        const SpaceTimePoint qa = point_at_distance(ctx, p, r, rng, -1);
        rep.size_bound_adjoint =
            std::max(rep.size_bound_adjoint, std::abs(near_entry(cfg, ev, qa, p)) * std::pow(r, big_n));

        // regularity in the first variable: c d(p, p') <= d(p, q) <= lambda_cut
        const double rq = log_uniform(r_min, std::min(lam, r_max));
        const double r1 = log_uniform(1e-3 * rq, rq / cfg.regularity_ratio);
        const SpaceTimePoint pp = point_at_distance(ctx, p, r1, rng, 0);
        const double majorant = std::pow(r1, eta) / std::pow(rq, big_n + eta) + 1.0 / std::pow(rq, big_n - eta);
        const SpaceTimePoint qf = point_at_distance(ctx, p, rq, rng, +1);
        rep.regularity_bound =
            std::max(rep.regularity_bound, std::abs(near_entry(cfg, ev, p, qf) - near_entry(cfg, ev, pp, qf)) / majorant);
        const SpaceTimePoint qb = point_at_distance(ctx, p, rq, rng, -1);
        rep.regularity_bound_adjoint = std::max(
            rep.regularity_bound_adjoint, std::abs(near_entry(cfg, ev, qb, p) - near_entry(cfg, ev, qb, pp)) / majorant);
        ++rep.regularity_samples;
    }

    if (with_cancellation) {
        const SpaceTimeField one = constant_field(1.0, cfg.t_lo, cfg.t_hi);
        const double s = 0.5 * (cfg.t_lo + cfg.t_hi);
        const Vector x = Vector::Zero(dim);
        for (double e : cfg.eps_list) {
            rep.eps.push_back(e);
            const double c = truncated_integral(cfg, ev, one, s, x, e, 0, 0, KernelPart::Full, false);
            const double ca = truncated_integral(cfg, ev, one, s, x, e, 0, 0, KernelPart::Full, true);
            rep.cancellation.push_back(c);
            rep.cancellation_adjoint.push_back(ca);
            rep.max_cancellation = std::max({rep.max_cancellation, std::abs(c), std::abs(ca)});
        }
    }
    return rep;
}

void write_standard_estimates_csv(std::ostream& os, const StandardEstimateReport& rep) {
    os.precision(17);
    os << "statistic,value,sample_size,ci_low,ci_high\n";
    os << "size_bound," << rep.size_bound << ',' << rep.samples << ",,\n";
    os << "size_bound_adjoint," << rep.size_bound_adjoint << ',' << rep.samples << ",,\n";
    os << "regularity_bound," << rep.regularity_bound << ',' << rep.regularity_samples << ",,\n";
    os << "regularity_bound_adjoint," << rep.regularity_bound_adjoint << ',' << rep.regularity_samples << ",,\n";
    for (std::size_t k = 0; k < rep.eps.size(); ++k) {
        os << "cancellation_eps_" << rep.eps[k] << ',' << rep.cancellation[k] << ",1,,\n";
        os << "cancellation_adjoint_eps_" << rep.eps[k] << ',' << rep.cancellation_adjoint[k] << ",1,,\n";
    }
}

double second_derivative_green(const SingularKernelConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f,
                               double s, const Vector& x, int i, int j) {
    return truncated_integral(cfg, ev, f, s, x, cfg.limit_eps, i, j, KernelPart::Full, false);
}

double cz_ratio(const SingularKernelConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f, double p,
                const StripGrid& grid) {
    if (!(p > 1.0)) throw DomainError("cz ratio needs p > 1");
    double num = 0.0;
    double den = 0.0;
    for (const auto& pt : grid.points()) {
        const double fv = std::abs(f(pt.s, pt.x));
        den += std::pow(fv, p);
        num += std::pow(std::abs(second_derivative_green(cfg, ev, f, pt.s, pt.x)), p);
    }
    if (den == 0.0) return 0.0;
    return std::pow(num / den, 1.0 / p);
}

}  // namespace kolmo
