#include "doctest.h"
#include "kolmo/metric.hpp"
#include "kolmo/quadrature.hpp"

#include <random>
#include <sstream>

using namespace kolmo;

namespace {

Vector v2(double a, double b) {
    Vector v(2);
    v << a, b;
    return v;
}

ChainSpec zero_drift(int n) {
    ModelDescriptor desc;
    desc.n = n;
    desc.diffusion.base = Matrix::Identity(1, 1);
    return build_model(desc);
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("rho examples and properties") {
    CHECK(rho(0.0, v2(0, 0), 1) == 0.0);
    CHECK(rho(1.0, v2(0, 0), 1) == 1.0);
    CHECK(rho(0.25, v2(0.04, 0.008), 1) == doctest::Approx(0.74));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int k = 0; k < 50; ++k) {
        const double t = 0.5 * (u(rng) + 1) + 1e-3;
        Vector x(3);
        x << u(rng), u(rng), u(rng);
        Vector scaled(3);
        scaled << std::pow(t, 0.5) * x(0), std::pow(t, 1.5) * x(1), std::pow(t, 2.5) * x(2);
        CHECK(rho(t, scaled, 1) == doctest::Approx(std::sqrt(t) * rho(1.0, x, 1)).epsilon(1e-12));
    }
    CHECK(rho(1e-300, v2(0, 0), 1) > 0);
    CHECK(rho(0.0, v2(0, 1e-300), 1) > 0);
}

TEST_CASE("dist examples") {
    FlowSolver kol(make_model("kolmogorov"));
    QuasiMetricContext ctx(kol);
    const SpaceTimePoint p{0.0, v2(0, 0)};
    CHECK(dist(ctx, p, p) == 0.0);
    CHECK(dist(ctx, p, {0.01, v2(0, 0)}) == doctest::Approx(0.1));

    FlowSolver zero(zero_drift(2));
    QuasiMetricContext zc(zero);
    const SpaceTimePoint a{0.1, v2(0.2, -0.3)};
    const SpaceTimePoint b{0.3, v2(-0.1, 0.4)};
    CHECK(dist(zc, a, b) == doctest::Approx(rho(0.2, Vector(a.x - b.x), 1)));
    CHECK(dist(zc, a, b) == dist_star(zc, a, b));
    CHECK_THROWS_AS(QuasiMetricContext(kol, 1.0, 1.5), DomainError);
}

TEST_CASE("ball volume: zero drift against a quadrature oracle") {
    FlowSolver zero(zero_drift(1));
    QuasiMetricContext ctx(zero);
    std::mt19937_64 rng(3);
    const double delta = 0.3;
    const auto est = ball_volume(ctx, {{0.0, Vector::Zero(1)}, delta}, 200000, rng);
    // oracle: integrate the slice length 2 (delta - sqrt|t|) over |t| <= delta^2 by Gauss–Legendre in sqrt|t|
    const auto rule = gauss_legendre(20, 0.0, delta);
    double oracle = 0.0;
    for (int k = 0; k < rule.size(); ++k) {
        const double r = rule.nodes(k);  // t = r^2
        oracle += 2.0 * rule.weights(k) * 2.0 * (delta - r) * 2.0 * r;
    }
    CHECK(oracle == doctest::Approx(4.0 * std::pow(delta, 3) / 3.0).epsilon(1e-12));
    CHECK(std::abs(est.value - oracle) < 4 * est.std_error);
    CHECK(est.ci_low <= oracle);
    CHECK(oracle <= est.ci_high);
}

TEST_CASE("ball volume: doubling and scaling slope") {
    FlowSolver kol(make_model("kolmogorov"));
    QuasiMetricContext ctx(kol);
    std::mt19937_64 rng(5);
    std::vector<double> lx, ly;
    std::vector<VolumeEstimate> ests;
    for (double delta : {0.4, 0.2, 0.1, 0.05}) {
        ests.push_back(ball_volume(ctx, {{0.2, v2(0.5, -0.3)}, delta}, 200000, rng));
        lx.push_back(std::log(delta));
        ly.push_back(std::log(ests.back().value));
    }
    CHECK(slope(lx, ly) == doctest::Approx(6.0).epsilon(0.03));
    const double ratio = ests[2].value / ests[3].value;
    const double rel = std::hypot(ests[2].std_error / ests[2].value, ests[3].std_error / ests[3].value);
    CHECK(std::abs(std::log(ratio / 64.0)) < 4 * rel);
}

TEST_CASE("quasi constants") {
    FlowSolver zero(zero_drift(2));
    QuasiMetricContext zc(zero);
    std::mt19937_64 rng(7);
    const auto z = quasi_constants(zc, 2000, rng);
    CHECK(z.c_sym == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(z.c_tri <= 1.0 + 1e-12);

    FlowSolver kol(make_model("kolmogorov"));
    QuasiMetricContext ctx(kol, 1.0, 0.5);
    const SpaceTimePoint p{0.1, v2(0.3, 0.2)};
    std::mt19937_64 r2(2);
    const SpaceTimePoint q = point_at_distance(ctx, p, 0.3, r2);
    CHECK(dist(ctx, p, q) == doctest::Approx(0.3).epsilon(1e-12));
    // degenerate midpoint
    const double sym = dist(ctx, q, p) / dist(ctx, p, q);
    CHECK(dist(ctx, p, q) / (dist(ctx, p, p) + dist(ctx, p, q)) <= std::max(1.0, sym) + 1e-12);
    CHECK(dist(ctx, p, q) / (dist(ctx, p, q) + dist(ctx, q, q)) <= std::max(1.0, sym) + 1e-12);

    std::mt19937_64 ra(11), rb(12);
    const auto a = quasi_constants(ctx, 10000, ra);
    const auto b = quasi_constants(ctx, 40000, rb);
    CHECK(a.c_sym == doctest::Approx(b.c_sym).epsilon(0.1));
    CHECK(a.c_tri == doctest::Approx(b.c_tri).epsilon(0.1));
}

TEST_CASE("symmetry constant does not grow with the locality radius") {
    FlowSolver kol(make_model("kolmogorov"));
    std::vector<double> cs;
    for (double lam : {0.25, 0.5, 1.0}) {
        QuasiMetricContext ctx(kol, 1.0, lam);
        std::mt19937_64 rng(31);
        cs.push_back(quasi_constants(ctx, 20000, rng).c_sym);
    }
    CHECK(cs[2] <= 1.1 * cs[0]);
    CHECK(cs[1] <= 1.1 * cs[0]);
}

TEST_CASE("covering") {
    FlowSolver zero(zero_drift(1));
    QuasiMetricContext ctx(zero);
    StripGrid g{0.0, 0.04, 5, Vector::Constant(1, -0.1), Vector::Constant(1, 0.1), {9}};
    auto single = covering(ctx, g, 5.0, 2.0);
    CHECK(single.centers.size() == 1);
    CHECK(single.max_overlap == 1);
    CHECK(single.all_covered);

    StripGrid coarse{0.0, 1.0, 3, Vector::Constant(1, -1), Vector::Constant(1, 1), {3}};
    CHECK_THROWS_AS(covering(ctx, coarse, 0.1, 2.0), ResolutionError);

    // count ~ |region| / delta^3
    std::vector<double> normalized;
    for (double delta : {0.4, 0.2}) {
        const double hx = delta / 16;
        const double ht = std::pow(delta / 8, 2);
        StripGrid grid{0.0, 0.25, static_cast<int>(std::ceil(0.25 / ht)) + 1, Vector::Constant(1, -0.5),
                       Vector::Constant(1, 0.5), {static_cast<int>(std::ceil(1.0 / hx)) + 1}};
        const auto cov = covering(ctx, grid, delta, 2.0);
        CHECK(cov.all_covered);
        normalized.push_back(cov.centers.size() * std::pow(delta, 3) / 0.25);
    }
    CHECK(normalized[0] / normalized[1] < 4.0);
    CHECK(normalized[1] / normalized[0] < 4.0);

    std::ostringstream os;
    write_covering_csv(os, single);
    CHECK(os.str().rfind("time,x1,radius\n", 0) == 0);
}

TEST_CASE("covering postcondition on the kolmogorov strip") {
    FlowSolver kol(make_model("kolmogorov"));
    QuasiMetricContext ctx(kol);
    StripGrid g{0.0, 0.25, 41, v2(-0.5, -0.05), v2(0.5, 0.05), {21, 61}};
    const auto cov = covering(ctx, g, 1.0, 2.0);
    CHECK(cov.all_covered);
    const auto pts = g.points();
    for (const auto& p : pts) {
        bool in = false;
        for (const auto& c : cov.centers) in = in || QuasiBall{c, 1.0}.contains(ctx, p);
        CHECK(in);
    }
    CHECK(cov.max_overlap >= 1);
}

TEST_CASE("crown membership") {
    FlowSolver kol(make_model("kolmogorov"));
    QuasiMetricContext ctx(kol);
    const Vector x0 = v2(1.0, 0.5);
    const SpaceTimePoint on{0.3, kol.flow(0.3, 0.1, x0)};
    CHECK(crown_membership(ctx, on, 0.1, x0, 0.3, 0.6, 1e-12));
    CHECK_FALSE(crown_membership(ctx, {0.7, on.x}, 0.1, x0, 0.3, 0.6, 10.0));

    FlowSolver zero(zero_drift(2));
    QuasiMetricContext zc(zero);
    CHECK(crown_membership(zc, {0.4, v2(1.1, 0.5)}, 0.1, x0, 0.3, 0.6, 0.11));
    CHECK_FALSE(crown_membership(zc, {0.4, v2(1.2, 0.5)}, 0.1, x0, 0.3, 0.6, 0.11));
}

TEST_CASE("linearization error") {
    // Affine drift: the linearized flow is the flow.
    FlowSolver kol(make_model("kolmogorov"));
    CHECK(linearization_error(kol, 0.1, 0.3, v2(0.2, 0.1), v2(0.5, -0.2), 1.0).ratio <= 1e-12);
    CHECK_THROWS_AS(linearization_error(kol, 0.3, 0.3, v2(0, 0), v2(1, 0), 1.0), DomainError);
    CHECK_THROWS_AS(linearization_error(kol, 0.0, 0.5, v2(0, 0), kol.flow(0.5, 0.0, v2(0, 0)), 1.0), DomainError);

    // Nonlinear drift: the scaled error is bounded, and the bound is stable across sample sizes.
    FlowSolver nl(make_model("nonlinear-kolmogorov"));
    const auto sm = linearization_error(nl, 0.0, 0.04, v2(0.3, 0.0), v2(0.5, 0.1), 1.0);
    CHECK(sm.elapsed == doctest::Approx(0.04));
    CHECK(sm.ratio > 0.0);
    QuasiMetricContext ctx(nl, 1.0, 0.5);
    std::mt19937_64 ra(3), rb(4);
    const auto a = linearization_constant(ctx, 1000, ra, 1.0);
    const auto b = linearization_constant(ctx, 10000, rb, 1.0);
    CHECK(a.samples == 1000);
    CHECK(b.max_rho <= 0.5 + 1e-12);
    CHECK(b.constant == doctest::Approx(a.constant).epsilon(0.2));
    CHECK(std::isfinite(b.constant));
}
