#include "doctest.h"
#include "kolmo/calderon.hpp"
#include "kolmo/quadrature.hpp"

#include <cmath>
#include <sstream>

using namespace kolmo;

namespace {

Vector v1(double a) { return Vector::Constant(1, a); }

Vector v2(double a, double b) {
    Vector v(2);
    v << a, b;
    return v;
}

double heat(double u, double z) { return std::exp(-z * z / (2 * u)) / std::sqrt(2 * kPi * u); }

// d^2/dx^2 of the heat kernel p_u(x - y)
double heat_hess(double u, double z) { return (z * z / (u * u) - 1.0 / u) * heat(u, z); }

// d^2/dx^2 of (p_u * exp(-y^2 / (2 w^2)))(x), integrated over u in [a, b] by composite Gauss–Legendre.
double smoothed_bump_oracle(double x, double w, double a, double b) {
    double acc = 0.0;
    for (const auto& [lo, hi] : dyadic_panels(a, b, 30)) {
        const auto gl = gauss_legendre(20, lo, hi);
        for (int k = 0; k < gl.size(); ++k) {
            const double v = w * w + gl.nodes(k);
            acc += gl.weights(k) * w / std::sqrt(v) * std::exp(-x * x / (2 * v)) * (x * x / (v * v) - 1.0 / v);
        }
    }
    return acc;
}

}  // namespace

TEST_CASE("cutoff plateaus and range") {
    const double delta = 0.25;
    CHECK(cutoff(delta, 0.0, v2(0.0, 0.0), 1) == 1.0);
    CHECK(cutoff(delta, 0.01, v2(0.1, 0.0), 1) == 1.0);      // rho = 0.2
    CHECK(cutoff(delta, 0.0, v2(0.5, 0.0), 1) == 0.0);       // rho = 2 delta
    CHECK(cutoff(delta, 0.0, v2(0.375, 0.0), 1) == doctest::Approx(0.5));
    // monotone and C^1 across the transition band
    double prev = 1.0;
    for (int k = 0; k <= 200; ++k) {
        const double r = 0.2 + 0.4 * k / 200.0;
        const double c = cutoff(delta, 0.0, v2(r, 0.0), 1);
        CHECK(c <= prev + 1e-15);
        CHECK(c >= 0.0);
        prev = c;
    }
    const double h = 1e-6;
    CHECK(std::abs(cutoff(delta, 0.0, v2(delta + h, 0.0), 1) - 1.0) < 1e-12);
    CHECK(cutoff(delta, 0.0, v2(2 * delta - h, 0.0), 1) < 1e-12);
    CHECK_THROWS_AS(cutoff(0.0, 0.1, v2(0.0, 0.0), 1), DomainError);
}

TEST_CASE("kernel value: heat kernel oracle and causality") {
    FlowSolver heat_solver(make_model("brownian"));
    KernelEvaluator ev(heat_solver);
    CHECK(kernel_value(ev, 0.0, 1.0, v1(0.0), v1(0.0))(0, 0) == doctest::Approx(-1.0 / std::sqrt(2 * kPi)));
    for (double u : {1e-3, 0.1, 0.7})
        for (double z : {-0.3, 0.0, 0.05, 1.2})
            CHECK(kernel_value(ev, 0.2, 0.2 + u, v1(z), v1(0.0))(0, 0) ==
                  doctest::Approx(heat_hess(u, z)).epsilon(1e-10));
    CHECK(kernel_value(ev, 0.5, 0.5, v1(0.0), v1(0.0)).isZero());
    CHECK(kernel_value(ev, 0.5, 0.3, v1(0.0), v1(0.0)).isZero());
}

TEST_CASE("kernel value matches finite differences of the frozen density") {
    FlowSolver solver(make_model("nonlinear-kolmogorov"));
    KernelEvaluator ev(solver);
    const double s = 0.1, t = 0.4;
    const Vector x = v2(0.3, -0.2);
    const Vector y = v2(0.2, 0.05);
    const double h = 1e-3;
    auto q = [&](double dx) { return ev.at(s, t, x + v2(dx, 0.0), y).density(y); };
    const double fd = (q(h) - 2 * q(0.0) + q(-h)) / (h * h);
    CHECK(kernel_value(ev, s, t, x, y)(0, 0) == doctest::Approx(fd).epsilon(1e-5));
}

TEST_CASE("split kernel reconstructs the kernel") {
    FlowSolver solver(make_model("kolmogorov"));
    KernelEvaluator ev(solver);
    SingularKernelConfig cfg;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.6, 0.6);
    for (int rep = 0; rep < 50; ++rep) {
        const double s = 0.1, t = 0.1 + 0.3 * (u(rng) + 0.6) + 1e-3;
        const Vector x = v2(u(rng), u(rng));
        const Vector y = v2(u(rng), u(rng));
        const auto sp = split_kernel(cfg, ev, s, t, x, y);
        const Matrix k = kernel_value(ev, s, t, x, y);
        CHECK((sp.near + sp.far - k).cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + k.cwiseAbs().maxCoeff()));
        CHECK(sp.weight >= 0.0);
        CHECK(sp.weight <= 1.0);
    }
    // plateaus: rho = sqrt(u) + |x1 + u x0 ... | computed along the flow
    const Vector x = v2(0.0, 0.0);
    const auto inner = split_kernel(cfg, ev, 0.0, 0.01, x, v2(0.05, 0.0));  // rho = 0.15
    CHECK(inner.far.isZero());
    const auto outer = split_kernel(cfg, ev, 0.0, 0.01, x, v2(0.5, 0.0));  // rho = 0.6
    CHECK(outer.near.isZero());
    CHECK(split_kernel(cfg, ev, 0.3, 0.3, x, x).near.isZero());
}

TEST_CASE("truncated integral: heat kernel against a Gaussian bump") {
    FlowSolver solver(make_model("brownian"));
    KernelEvaluator ev(solver);
    SingularKernelConfig cfg;
    const double w = 0.3;
    const SpaceTimeField f = gaussian_bump(1.0, v1(0.0), v1(w), 0.0, 1.0);
    for (double x : {0.0, 0.2, -0.5}) {
        for (double eps : {0.2, 0.05}) {
            const double s = 0.25;
            const double got = truncated_integral(cfg, ev, f, s, v1(x), eps, 0, 0);
            CHECK(got == doctest::Approx(smoothed_bump_oracle(x, w, eps * eps, 1.0 - s)).epsilon(1e-6));
            // adjoint: k*(s, t, x, y) = d^2_y p_{s-t}(x - y), times t in [0, s - eps^2]
            const double s2 = 0.75;
            const double adj = truncated_integral(cfg, ev, f, s2, v1(x), eps, 0, 0, KernelPart::Full, true);
            CHECK(adj == doctest::Approx(smoothed_bump_oracle(x, w, eps * eps, s2)).epsilon(1e-6));
        }
    }
}

TEST_CASE("truncated integral: zero field, linearity, argument checks") {
    FlowSolver solver(make_model("kolmogorov"));
    KernelEvaluator ev(solver);
    SingularKernelConfig cfg;
    cfg.gh_order = 12;
    const SpaceTimeField zero = constant_field(0.0, 0.0, 1.0);
    CHECK(truncated_integral(cfg, ev, zero, 0.2, v2(0.1, 0.1), 0.1, 0, 0) == 0.0);

    const SpaceTimeField f = gaussian_bump(1.0, v2(0.1, 0.0), v2(0.4, 0.3), 0.0, 1.0);
    const SpaceTimeField f3 = gaussian_bump(3.0, v2(0.1, 0.0), v2(0.4, 0.3), 0.0, 1.0);
    const double a = truncated_integral(cfg, ev, f, 0.2, v2(0.0, 0.05), 0.1, 0, 0);
    const double b = truncated_integral(cfg, ev, f3, 0.2, v2(0.0, 0.05), 0.1, 0, 0);
    CHECK(b == doctest::Approx(3.0 * a).epsilon(1e-12));
    // nothing left past the strip
    CHECK(truncated_integral(cfg, ev, f, 0.995, v2(0.0, 0.0), 0.1, 0, 0) == 0.0);
    CHECK_THROWS_AS(truncated_integral(cfg, ev, f, 0.2, v2(0.0, 0.0), 0.0, 0, 0), DomainError);
    CHECK_THROWS_AS(truncated_integral(cfg, ev, f, 0.2, v2(0.0, 0.0), 0.1, 1, 0), DomainError);
    CHECK_THROWS_AS(truncated_integral(cfg, ev, f, 0.2, v1(0.0), 0.1, 0, 0), ShapeError);
}

TEST_CASE("truncated integral: near and far parts add up") {
    FlowSolver solver(make_model("kolmogorov"));
    KernelEvaluator ev(solver);
    SingularKernelConfig cfg;
    cfg.gh_order = 16;
    cfg.check_refinement = false;
    const SpaceTimeField f = gaussian_bump(1.0, v2(0.0, 0.0), v2(0.3, 0.3), 0.0, 1.0);
    const Vector x = v2(0.1, -0.05);
    const double full = truncated_integral(cfg, ev, f, 0.3, x, 0.1, 0, 0);
    const double near = truncated_integral(cfg, ev, f, 0.3, x, 0.1, 0, 0, KernelPart::Near);
    const double far = truncated_integral(cfg, ev, f, 0.3, x, 0.1, 0, 0, KernelPart::Far);
    CHECK(near + far == doctest::Approx(full).epsilon(1e-3));
}

TEST_CASE("cancellation of the truncated kernel against the constant") {
    SingularKernelConfig cfg;
    for (const char* name : {"brownian", "kolmogorov"}) {
        CAPTURE(name);
        FlowSolver solver(make_model(name));
        KernelEvaluator ev(solver);
        QuasiMetricContext ctx(solver);
        std::mt19937_64 rng(3);
        const auto rep = standard_estimate_checks(cfg, ev, ctx, 1, rng);
        REQUIRE(rep.eps.size() == cfg.eps_list.size());
        CHECK(rep.max_cancellation <= 1e-3);
        for (std::size_t k = 2; k < rep.eps.size(); ++k) {
            CHECK(std::abs(rep.cancellation[k] - rep.cancellation[k - 1]) <=
                  std::abs(rep.cancellation[k - 1] - rep.cancellation[k - 2]) + 1e-12);
        }
    }
}

TEST_CASE("size estimate is stable under more samples") {
    FlowSolver solver(make_model("kolmogorov"));
    KernelEvaluator ev(solver);
    QuasiMetricContext ctx(solver);
    SingularKernelConfig cfg;
    std::mt19937_64 rng_a(11), rng_b(12);
    const auto small = standard_estimate_checks(cfg, ev, ctx, 1000, rng_a, {}, false);
    const auto large = standard_estimate_checks(cfg, ev, ctx, 10000, rng_b, {}, false);
    CHECK(small.size_bound > 0.0);
    CHECK(large.size_bound < 2.0 * small.size_bound);
    CHECK(small.size_bound < 2.0 * large.size_bound);
    CHECK(std::isfinite(large.regularity_bound));
    CHECK(std::isfinite(large.regularity_bound_adjoint));
    CHECK(large.size_bound_adjoint > 0.0);

    std::ostringstream os;
    write_standard_estimates_csv(os, large);
    CHECK(os.str().rfind("statistic,value,sample_size,ci_low,ci_high\n", 0) == 0);
    CHECK(os.str().find("size_bound,") != std::string::npos);
}

TEST_CASE("cz ratio is scale stable on the heat kernel") {
    FlowSolver solver(make_model("brownian"));
    KernelEvaluator ev(solver);
    SingularKernelConfig cfg;
    cfg.gh_order = 16;
    cfg.check_refinement = false;
    std::vector<double> ratios;
    for (double lam : {1.0, 0.5, 0.25}) {
        const double t_lo = 0.5 - 0.25 * lam * lam, t_hi = 0.5 + 0.25 * lam * lam;
        const SpaceTimeField f = smooth_bump(1.0, v1(0.0), v1(0.2 * lam), t_lo, t_hi);
        StripGrid grid{t_lo, t_hi, 9, v1(-0.8 * lam), v1(0.8 * lam), {17}};
        ratios.push_back(cz_ratio(cfg, ev, f, 2.0, grid));
    }
    const double hi = *std::max_element(ratios.begin(), ratios.end());
    const double lo = *std::min_element(ratios.begin(), ratios.end());
    CHECK(lo > 0.0);
    CHECK(hi < 2.0 * lo);
    StripGrid grid{0.0, 0.5, 3, v1(-1.0), v1(1.0), {3}};
    CHECK(cz_ratio(cfg, ev, constant_field(0.0, 0.0, 1.0), 2.0, grid) == 0.0);
    CHECK_THROWS_AS(cz_ratio(cfg, ev, constant_field(0.0, 0.0, 1.0), 1.0, grid), DomainError);
}
