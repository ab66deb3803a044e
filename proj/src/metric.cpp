#include "kolmo/metric.hpp"

#include "kolmo/kernel.hpp"

#include <algorithm>
#include <limits>
#include <ostream>

namespace kolmo {

QuasiMetricContext::QuasiMetricContext(const FlowSolver& s, double h, double lc)
    : solver(&s), horizon(h), lambda_cut(lc) {
    if (!(h > 0.0)) throw DomainError("horizon must be positive");
    if (!(lc > 0.0 && lc <= 1.0)) throw DomainError("lambda_cut must lie in (0, 1]");
}

double dist(const QuasiMetricContext& ctx, const SpaceTimePoint& p, const SpaceTimePoint& q) {
    const Vector moved = ctx.solver->flow(q.s, p.s, p.x);
    return rho(q.s - p.s, moved - q.x, ctx.d());
}

double dist_star(const QuasiMetricContext& ctx, const SpaceTimePoint& p, const SpaceTimePoint& q) {
    return dist(ctx, q, p);
}

bool QuasiBall::contains(const QuasiMetricContext& ctx, const SpaceTimePoint& q) const {
    return dist(ctx, center, q) <= radius;
}

namespace {

std::pair<double, double> wilson(long hits, long total, double z = 1.959963984540054) {
    const double nn = static_cast<double>(total);
    const double p = hits / nn;
    const double denom = 1.0 + z * z / nn;
    const double centre = (p + z * z / (2 * nn)) / denom;
    const double half = z * std::sqrt(p * (1 - p) / nn + z * z / (4 * nn * nn)) / denom;
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

}  // namespace

VolumeEstimate ball_volume(const QuasiMetricContext& ctx, const QuasiBall& ball, long mc_budget,
                           std::mt19937_64& rng) {
    const double delta = ball.radius;
    if (!(delta > 0.0)) throw DomainError("ball radius must be positive");
    if (mc_budget < 1) throw DomainError("mc_budget must be >= 1");
    const auto& spec = ctx.solver->spec();
    const int n = spec.n;
    const int d = spec.d;
    const int dim = spec.dim();
    const double s = ball.center.s;
    const double dt = delta * delta;

    // Range of the transported centre over the time window.
    Vector lo = Vector::Constant(dim, std::numeric_limits<double>::infinity());
    Vector hi = -lo;
    const int probes = 33;
    for (int k = 0; k < probes; ++k) {
        const double t = s - dt + 2.0 * dt * k / (probes - 1);
        const Vector c = ctx.solver->flow(t, s, ball.center.x);
        lo = lo.cwiseMin(c);
        hi = hi.cwiseMax(c);
    }
    const double inflate = std::exp(spec.lipschitz * dt);
    Vector half(dim);
    for (int i = 0; i < n; ++i) half.segment(i * d, d).setConstant(std::pow(delta, 2 * i + 1) * inflate);
    lo -= half;
    hi += half;
    if (!lo.allFinite() || !hi.allFinite()) throw DivergenceError("enclosing box is not finite");

    VolumeEstimate est;
    est.box_volume = 2.0 * dt * (hi - lo).prod();
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    SpaceTimePoint q{0.0, Vector(dim)};
    for (long k = 0; k < mc_budget; ++k) {
        q.s = s - dt + 2.0 * dt * unif(rng);
        for (int j = 0; j < dim; ++j) q.x(j) = lo(j) + (hi(j) - lo(j)) * unif(rng);
        if (ball.contains(ctx, q)) ++est.hits;
    }
    est.samples = mc_budget;
    const double p = static_cast<double>(est.hits) / mc_budget;
    est.value = p * est.box_volume;
    est.std_error = std::sqrt(p * (1 - p) / mc_budget) * est.box_volume;
    const auto [a, b] = wilson(est.hits, mc_budget);
    est.ci_low = a * est.box_volume;
    est.ci_high = b * est.box_volume;
    return est;
}

SpaceTimePoint point_at_distance(const QuasiMetricContext& ctx, const SpaceTimePoint& p, double r,
                                 std::mt19937_64& rng, int time_sign) {
    const int n = ctx.n();
    const int d = ctx.d();
    std::exponential_distribution<double> expo(1.0);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    // uniform split of r over the n+1 scales of rho
    std::vector<double> share(n + 1);
    double total = 0.0;
    for (auto& a : share) total += (a = expo(rng));
    for (auto& a : share) a /= total;
    // keep t - s well above round-off of the base time
    if (share[0] < 0.01) {
        const double rest = (1.0 - 0.01) / (1.0 - share[0]);
        for (int i = 1; i <= n; ++i) share[i] *= rest;
        share[0] = 0.01;
    }

    double tau = std::pow(r * share[0], 2);
    const bool flip = unif(rng) < 0.5;
    if (time_sign < 0 || (time_sign == 0 && flip)) tau = -tau;
    if (time_sign == 0 && std::abs(p.s + tau) > ctx.horizon) tau = -tau;
    Vector z(n * d);
    for (int i = 0; i < n; ++i) {
        Vector dir(d);
        for (int k = 0; k < d; ++k) dir(k) = normal(rng);
        const double nrm = dir.norm();
        if (nrm == 0.0) dir = Vector::Unit(d, 0); else dir /= nrm;
        z.segment(i * d, d) = std::pow(r * share[i + 1], 2 * i + 1) * dir;
    }
    const double t = p.s + tau;
    return {t, ctx.solver->flow(t, p.s, p.x) - z};
}

QuasiConstants quasi_constants(const QuasiMetricContext& ctx, long sample_budget, std::mt19937_64& rng,
                               const QuasiSampling& region) {
    if (sample_budget < 1) throw DomainError("sample_budget must be >= 1");
    const int dim = ctx.solver->spec().dim();
    const double lam = ctx.lambda_cut;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto base_point = [&] {
        SpaceTimePoint p{region.t_lo + (region.t_hi - region.t_lo) * unif(rng), Vector(dim)};
        for (int k = 0; k < dim; ++k) p.x(k) = region.half_width * (2.0 * unif(rng) - 1.0);
        return p;
    };
    // radius law r = lam u^{1/2}: mass towards the outer shell where asymmetry is largest
    auto radius = [&] { return lam * std::sqrt(unif(rng)); };

    QuasiConstants out;
    for (long k = 0; k < sample_budget; ++k) {
        const SpaceTimePoint p = base_point();
        const SpaceTimePoint q = point_at_distance(ctx, p, radius(), rng);
        const double dpq = dist(ctx, p, q);
        const double dqp = dist(ctx, q, p);
        if (dpq > 0.0 && dpq <= lam && dqp <= lam) {
            out.c_sym = std::max(out.c_sym, dqp / dpq);
            ++out.pairs;
        }

        const SpaceTimePoint a = base_point();
        const SpaceTimePoint mid = point_at_distance(ctx, a, radius(), rng);
        const SpaceTimePoint b = point_at_distance(ctx, mid, radius(), rng);
        const double dab = dist(ctx, a, b);
        const double dam = dist(ctx, a, mid);
        const double dmb = dist(ctx, mid, b);
        if (dab > 0.0 && dab <= lam && dam <= lam && dmb <= lam) {
            out.c_tri = std::max(out.c_tri, dab / (dam + dmb));
            ++out.triples;
        }
    }
    return out;
}

std::vector<SpaceTimePoint> StripGrid::points() const {
    const int dim = static_cast<int>(x_lo.size());
    if (x_hi.size() != dim || static_cast<int>(x_points.size()) != dim) throw ShapeError("grid bounds mismatch");
    if (t_points < 1 || std::any_of(x_points.begin(), x_points.end(), [](int m) { return m < 1; }))
        throw DomainError("grid needs at least one point per axis");
    auto axis = [](double lo, double hi, int m, int k) { return m == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * k / (m - 1); };
    long total = t_points;
    for (int m : x_points) total *= m;
    std::vector<SpaceTimePoint> pts;
    pts.reserve(static_cast<std::size_t>(total));
    std::vector<int> idx(dim, 0);
    for (int it = 0; it < t_points; ++it) {
        const double t = axis(t_lo, t_hi, t_points, it);
        std::fill(idx.begin(), idx.end(), 0);
        long inner = total / t_points;
        for (long c = 0; c < inner; ++c) {
            Vector x(dim);
            for (int k = 0; k < dim; ++k) x(k) = axis(x_lo(k), x_hi(k), x_points[k], idx[k]);
            pts.push_back({t, x});
            for (int k = 0; k < dim; ++k) {
                if (++idx[k] < x_points[k]) break;
                idx[k] = 0;
            }
        }
    }
    return pts;
}

double StripGrid::cell_diameter(int d) const {
    const int dim = static_cast<int>(x_lo.size());
    Vector h(dim);
    for (int k = 0; k < dim; ++k) h(k) = x_points[k] > 1 ? (x_hi(k) - x_lo(k)) / (x_points[k] - 1) : 0.0;
    const double ht = t_points > 1 ? (t_hi - t_lo) / (t_points - 1) : 0.0;
    return rho(ht, h, d);
}

Covering covering(const QuasiMetricContext& ctx, const StripGrid& region, double delta, double dilation) {
    if (!(delta > 0.0)) throw DomainError("covering radius must be positive");
    if (!(dilation > 1.0)) throw DomainError("dilation K must exceed 1");
    const double cell = region.cell_diameter(ctx.d());
    if (cell > delta / 4.0) throw ResolutionError("grid cell diameter exceeds delta/4; refine the grid");
    const auto pts = region.points();
    const std::size_t m = pts.size();

    Covering cov;
    cov.radius = delta;
    cov.grid_size = static_cast<long>(m);
    std::vector<double> nearest(m, std::numeric_limits<double>::infinity());
    std::vector<std::vector<double>> rows;
    std::size_t next = 0;
    while (true) {
        const SpaceTimePoint& c = pts[next];
        cov.centers.push_back(c);
        std::vector<double> row(m);
        for (std::size_t k = 0; k < m; ++k) {
            row[k] = dist(ctx, c, pts[k]);
            nearest[k] = std::min(nearest[k], row[k]);
        }
        rows.push_back(std::move(row));
        // farthest uncovered point; ties resolved by grid order for determinism
        std::size_t far = 0;
        for (std::size_t k = 1; k < m; ++k)
            if (nearest[k] > nearest[far]) far = k;
        if (nearest[far] <= delta) break;
        next = far;
    }
    cov.all_covered = std::all_of(nearest.begin(), nearest.end(), [&](double v) { return v <= delta; });
    for (std::size_t k = 0; k < m; ++k) {
        int count = 0;
        for (const auto& row : rows)
            if (row[k] <= dilation * delta) ++count;
        cov.max_overlap = std::max(cov.max_overlap, count);
    }
    return cov;
}

void write_covering_csv(std::ostream& os, const Covering& cov) {
    os << "time";
    const long dim = cov.centers.empty() ? 0 : cov.centers.front().x.size();
    for (long k = 0; k < dim; ++k) os << ",x" << k + 1;
    os << ",radius\n";
    os.precision(17);
    for (const auto& c : cov.centers) {
        os << c.s;
        for (long k = 0; k < dim; ++k) os << ',' << c.x(k);
        os << ',' << cov.radius << '\n';
    }
}

bool crown_membership(const QuasiMetricContext& ctx, const SpaceTimePoint& point, double s0, const Vector& x0,
                      double t_lo, double t_hi, double radius) {
    if (!(s0 <= t_lo && t_lo < t_hi)) throw DomainError("crown needs s0 <= t_lo < t_hi");
    if (point.s < t_lo || point.s > t_hi) return false;
    return (ctx.solver->flow(s0, point.s, point.x) - x0).norm() <= radius;
}

LinearizationSample linearization_error(const FlowSolver& solver, double s, double t, const Vector& x,
                                        const Vector& y, double eta) {
    if (!(t > s)) throw DomainError("linearization error needs s < t");
    const auto& spec = solver.spec();
    const Vector flow = solver.flow(t, s, x);
    const Vector gap = y - flow;
    LinearizationSample out;
    out.elapsed = t - s;
    out.rho = rho(t - s, gap, spec.d);
    if (gap.norm() == 0.0) throw DomainError("end point lies on the flow");
    const Vector inv = scale_diagonal(1.0 / (out.rho * out.rho), spec.n, spec.d);
    const Vector xt = out.rho * inv.cwiseProduct(gap);
    const Vector lin = solver.linearize({t, y}, s, t)(t, s, x);
    const Vector err = out.rho * inv.cwiseProduct(flow - lin);
    out.ratio = err.norm() / ((std::pow(out.rho, eta) + out.elapsed) * xt.norm());
    return out;
}

LinearizationFit linearization_constant(const QuasiMetricContext& ctx, long samples, std::mt19937_64& rng,
                                        double eta, const QuasiSampling& region) {
    if (samples < 1) throw DomainError("samples must be >= 1");
    const int dim = ctx.solver->spec().dim();
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    LinearizationFit fit;
    while (fit.samples < samples) {
        SpaceTimePoint p{region.t_lo + (region.t_hi - region.t_lo) * unif(rng), Vector(dim)};
        for (int k = 0; k < dim; ++k) p.x(k) = region.half_width * (2.0 * unif(rng) - 1.0);
        // Below 1e-2 lambda the rescaling by rho^{1-2n} amplifies rounding of the flows past the signal.
        const double r = ctx.lambda_cut * (0.01 + 0.99 * unif(rng));
        const SpaceTimePoint q = point_at_distance(ctx, p, r, rng, +1);
        if (!(q.s > p.s) || (q.x - ctx.solver->flow(q.s, p.s, p.x)).norm() == 0.0) continue;
        const auto sm = linearization_error(*ctx.solver, p.s, q.s, p.x, q.x, eta);
        fit.constant = std::max(fit.constant, sm.ratio);
        fit.max_rho = std::max(fit.max_rho, sm.rho);
        ++fit.samples;
    }
    return fit;
}

}  // namespace kolmo
