#include "doctest.h"
#include "kolmo/parametrix.hpp"
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

// Cheap settings for models whose kernel needs one moment sweep per node.
GreenConfig coarse_config() {
    GreenConfig cfg;
    cfg.time_levels = 8;
    cfg.gl_order = 4;
    cfg.gh_order = 6;
    cfg.check_refinement = false;
    return cfg;
}

FlowOptions cheap_flow() {
    FlowOptions o;
    o.steps_per_unit = 32;
    o.gl_order = 4;
    return o;
}

}  // namespace

TEST_CASE("config validation") {
    GreenConfig cfg;
    CHECK_NOTHROW(validate_green_config(cfg));
    cfg.horizon = 1.5;
    CHECK_THROWS_AS(validate_green_config(cfg), ConfigError);
    cfg.horizon = 0.0;
    CHECK_THROWS_AS(validate_green_config(cfg), ConfigError);
    cfg = GreenConfig{};
    cfg.neumann_depth = -1;
    CHECK_THROWS_AS(validate_green_config(cfg), ConfigError);
}

TEST_CASE("green: zero field and constant field") {
    FlowSolver solver(make_model("kolmogorov"));
    KernelEvaluator ev(solver);
    GreenConfig cfg;
    CHECK(green(cfg, ev, constant_field(0.0, 0.0, 1.0), 0.2, v2(0.1, 0.3)) == 0.0);
    for (double s : {0.0, 0.3, 0.9}) {
        CHECK(green(cfg, ev, constant_field(1.0, 0.0, 1.0), s, v2(0.4, -0.2)) == doctest::Approx(1.0 - s).epsilon(1e-6));
    }
    cfg.horizon = 0.5;
    CHECK(green(cfg, ev, constant_field(1.0, 0.0, 1.0), 0.1, v2(0.0, 0.0)) == doctest::Approx(0.4).epsilon(1e-6));
    CHECK(green(cfg, ev, constant_field(1.0, 0.0, 1.0), 0.6, v2(0.0, 0.0)) == 0.0);
}

TEST_CASE("green: heat kernel against a Gaussian bump") {
    FlowSolver solver(make_model("brownian"));
    KernelEvaluator ev(solver);
    GreenConfig cfg;
    const double w = 0.4;
    const SpaceTimeField f = gaussian_bump(1.0, v1(0.2), v1(w), 0.0, 1.0);
    for (double x : {0.0, 0.7}) {
        // (p_u * f)(x) = w / sqrt(w^2 + u) exp(-(x - c)^2 / (2 (w^2 + u)))
        double oracle = 0.0;
        const auto gl = gauss_legendre(40, 0.0, 0.75);
        for (int k = 0; k < gl.size(); ++k) {
            const double v = w * w + gl.nodes(k);
            oracle += gl.weights(k) * w / std::sqrt(v) * std::exp(-(x - 0.2) * (x - 0.2) / (2 * v));
        }
        CHECK(green(cfg, ev, f, 0.25, v1(x)) == doctest::Approx(oracle).epsilon(1e-8));
    }
}

TEST_CASE("perturbations vanish for linear transmission and a = varsigma") {
    for (const char* name : {"kolmogorov", "chain3"}) {
        CAPTURE(name);
        FlowSolver solver(make_model(name));
        KernelEvaluator ev(solver);
        GreenConfig cfg;
        if (name == std::string("chain3")) {
            cfg.gh_order = 8;
            cfg.time_levels = 16;
        }
        const int dim = solver.spec().dim();
        const SpaceTimeField f = smooth_bump(1.0, Vector::Zero(dim), Vector::Constant(dim, 0.5), 0.0, 1.0);
        const Vector x = Vector::Constant(dim, 0.2);
        CHECK(std::abs(perturbation_N(cfg, ev, f, 0.1, x)) <= 1e-8);
        CHECK(std::abs(remainder_R(cfg, ev, f, 0.1, x)) <= 1e-8);
        for (int i = 1; i < solver.spec().n; ++i) {
            CHECK(perturbation_Ri(cfg, ev, f, 0.1, x, i).cwiseAbs().maxCoeff() <= 1e-8);
            CHECK(std::abs(perturbation_DRi(cfg, ev, f, 0.1, x, i)) <= 1e-8);
        }
        CHECK_THROWS_AS(perturbation_Ri(cfg, ev, f, 0.1, x, 0), DomainError);
    }
}

TEST_CASE("remainder decomposes into drift mismatch, transmission and diffusion") {
    FlowSolver solver(make_model("nonlinear-kolmogorov", 0.2), cheap_flow());
    KernelEvaluator ev(solver);
    GreenConfig cfg = coarse_config();
    const SpaceTimeField f = smooth_bump(1.0, v2(0.0, 0.0), v2(0.5, 0.5), 0.0, 1.0);
    const Vector x = v2(0.6, -0.1);
    const auto parts = remainder_parts(cfg, ev, f, 0.2, x);
    REQUIRE(parts.transmission.size() == 1);
    const double sum = parts.drift_mismatch + parts.transmission[0] + parts.diffusion;
    CHECK(parts.total == doctest::Approx(sum).epsilon(1e-10));
    CHECK(parts.total == doctest::Approx(remainder_R(cfg, ev, f, 0.2, x)).epsilon(1e-12));
    CHECK(parts.transmission[0] == doctest::Approx(perturbation_DRi(cfg, ev, f, 0.2, x, 1)).epsilon(1e-12));
    CHECK(parts.drift_mismatch == doctest::Approx(perturbation_N(cfg, ev, f, 0.2, x)).epsilon(1e-12));
    // F_1 = 0 and F_2 depends on x_1 only: the mismatch term vanishes, the Taylor remainder does not
    CHECK(std::abs(parts.drift_mismatch) < 1e-12);
    CHECK(std::abs(parts.transmission[0]) > 1e-6);
    CHECK(perturbation_Ri(cfg, ev, f, 0.2, x, 1).norm() > 1e-6);
    // linearity
    const SpaceTimeField f2 = smooth_bump(-2.0, v2(0.0, 0.0), v2(0.5, 0.5), 0.0, 1.0);
    CHECK(remainder_R(cfg, ev, f2, 0.2, x) == doctest::Approx(-2.0 * parts.total).epsilon(1e-12));
}

TEST_CASE("diffusion mismatch: R f = (a - varsigma)/2 D^2 G f on the modulated kolmogorov model") {
    const double eps_a = 0.3;
    FlowSolver solver(make_model("kolmogorov", eps_a));
    KernelEvaluator ev(solver);
    FlowSolver plain_solver(make_model("kolmogorov"));
    KernelEvaluator plain(plain_solver);
    GreenConfig cfg;
    cfg.check_refinement = false;
    const SpaceTimeField f = smooth_bump(1.0, v2(0.0, 0.0), v2(0.4, 0.4), 0.0, 1.0);
    const Vector x = v2(0.5, 0.1);
    const double s = 0.3;
    const double h = 1e-3;
    auto g = [&](double dx) { return green(cfg, plain, f, s, x + v2(dx, 0.0)); };
    const double d2 = (g(h) - 2 * g(0.0) + g(-h)) / (h * h);
    const double expected = 0.5 * eps_a * std::sin(x(0)) * d2;
    CHECK(remainder_R(cfg, ev, f, s, x) == doctest::Approx(expected).epsilon(1e-4));
}

TEST_CASE("green defining property on kolmogorov") {
    FlowSolver solver(make_model("kolmogorov"));
    KernelEvaluator ev(solver);
    GreenConfig cfg;
    cfg.check_refinement = false;
    const SpaceTimeField f = gaussian_bump(1.0, v2(0.1, 0.0), v2(0.5, 0.5), 0.0, 1.0);
    const double s = 0.4;
    const Vector x = v2(0.2, 0.1);
    const double ht = 1e-3, hx = 1e-2;
    auto g = [&](double ds, double d1, double d2) { return green(cfg, ev, f, s + ds, x + v2(d1, d2)); };
    const double dt = (g(ht, 0, 0) - g(-ht, 0, 0)) / (2 * ht);
    const double dx2 = (g(0, 0, hx) - g(0, 0, -hx)) / (2 * hx);
    const double dx11 = (g(0, hx, 0) - 2 * g(0, 0, 0) + g(0, -hx, 0)) / (hx * hx);
    const double lhs = -(dt + x(0) * dx2 + 0.5 * dx11);
    CHECK(lhs == doctest::Approx(f(s, x)).epsilon(1e-3));
}

TEST_CASE("backward equation residual") {
    FlowSolver kol(make_model("kolmogorov"));
    const Vector x = v2(0.3, -0.2);
    const Vector y = v2(0.1, 0.05);
    const auto r = backward_pde_residual(kol, 0.2, 0.7, x, y, 1e-5);
    CHECK(r.value <= 1e-4);
    const auto coarse = backward_pde_residual(kol, 0.2, 0.7, x, y, 2e-2);
    CHECK(coarse.observed_order == doctest::Approx(2.0).epsilon(0.05));
    CHECK(backward_pde_residual(kol, 0.2, 0.7, x, y, 0.0, true).value <= 1e-10);
    CHECK_THROWS_AS(backward_pde_residual(kol, 0.2, 0.7, x, y, 0.6), StepSizeError);
    CHECK_THROWS_AS(backward_pde_residual(kol, 0.7, 0.7, x, y, 1e-5), DegenerateIntervalError);

    FlowSolver heat(make_model("brownian"));
    CHECK(backward_pde_residual(heat, 0.0, 0.5, v1(0.3), v1(-0.1), 0.0, true).value <= 1e-8);

    FlowSolver nl(make_model("nonlinear-kolmogorov"));
    CHECK(backward_pde_residual(nl, 0.1, 0.6, x, y, 0.0, true).value <= 1e-6);
    CHECK(backward_pde_residual(nl, 0.1, 0.6, x, y, 1e-4).value <= 1e-4);
}

TEST_CASE("grid fields: interpolation, norms and csv") {
    StripGrid grid{0.0, 1.0, 3, v2(-1.0, -1.0), v2(1.0, 1.0), {5, 3}};
    auto affine = [](double t, const Vector& y) { return 1.0 + 2.0 * t - y(0) + 0.5 * y(1); };
    SpaceTimeField f;
    f.value = affine;
    const GridField g = sample_on_grid(f, grid);
    CHECK(g.values.size() == 45);
    for (double t : {0.0, 0.33, 0.9})
        for (double a : {-0.9, 0.1, 0.77})
            CHECK(g(t, v2(a, -0.4)) == doctest::Approx(affine(t, v2(a, -0.4))).epsilon(1e-12));
    CHECK(g(0.5, v2(1.5, 0.0)) == 0.0);
    CHECK(g(1.2, v2(0.0, 0.0)) == 0.0);
    // one-point axes read as constant
    StripGrid flat{0.0, 1.0, 2, v1(0.0), v1(0.0), {1}};
    SpaceTimeField lin;
    lin.value = [](double t, const Vector&) { return t; };
    CHECK(sample_on_grid(lin, flat)(0.25, v1(0.0)) == doctest::Approx(0.25));

    SpaceTimeField one;
    one.value = [](double, const Vector&) { return 1.0; };
    CHECK(grid_norm(sample_on_grid(one, grid), 2.0) == doctest::Approx(std::sqrt(45 * 0.5 * 0.5 * 1.0)));

    std::ostringstream os;
    write_grid_csv(os, g);
    CHECK(os.str().rfind("time,x1,x2,value\n", 0) == 0);
}

TEST_CASE("neumann series") {
    StripGrid grid{0.0, 0.8, 3, v2(-1.0, -1.0), v2(1.0, 1.0), {5, 5}};
    SUBCASE("depth 0 and vanishing remainder reproduce green") {
        FlowSolver solver(make_model("kolmogorov"));
        KernelEvaluator ev(solver);
        GreenConfig cfg;
        cfg.gh_order = 12;
        cfg.check_refinement = false;
        const SpaceTimeField f = smooth_bump(1.0, v2(0.0, 0.0), v2(0.4, 0.4), 0.0, 1.0);
        const double plain = green(cfg, ev, f, 0.1, v2(0.1, 0.0));
        const auto r0 = neumann_apply(cfg, ev, f, grid, 0);
        CHECK(green_full(cfg, ev, r0, 0.1, v2(0.1, 0.0)) == doctest::Approx(plain).epsilon(1e-14));
        const auto r2 = neumann_apply(cfg, ev, f, grid, 2);
        CHECK(green_full(cfg, ev, r2, 0.1, v2(0.1, 0.0)) == doctest::Approx(plain).epsilon(1e-8));
        CHECK(r2.operator_norm <= 1e-8);
    }
    SUBCASE("geometric decay on the nonlinear model") {
        FlowSolver solver(make_model("nonlinear-kolmogorov", 0.1), cheap_flow());
        KernelEvaluator ev(solver);
        GreenConfig cfg = coarse_config();
        const SpaceTimeField f = smooth_bump(1.0, v2(0.0, 0.0), v2(0.4, 0.4), 0.0, 0.8);
        const auto res = neumann_apply(cfg, ev, f, grid, 2);
        REQUIRE(res.residuals.size() == 3);
        CHECK(res.operator_norm < 1.0);
        CHECK(res.residuals[1] < res.residuals[0]);
        CHECK(res.residuals[2] < res.residuals[1]);
        for (int k = 0; k < 3; ++k)
            CHECK(res.residuals[k] <= std::pow(res.operator_norm, k + 1) * res.term_norms[0] * (1 + 1e-12));
        CHECK(std::isfinite(green_full(cfg, ev, res, 0.1, v2(0.0, 0.0))));
    }
    SUBCASE("divergence is refused") {
        FlowSolver solver(make_model("kolmogorov", 0.9));
        KernelEvaluator ev(solver);
        GreenConfig cfg;
        cfg.gh_order = 12;
        cfg.check_refinement = false;
        // a narrow bump between grid nodes: nearly invisible on the grid, while R f spreads over it
        const SpaceTimeField f = smooth_bump(1.0, v2(0.25, 0.25), v2(0.05, 0.05), 0.0, 0.8);
        CHECK_THROWS_AS(neumann_apply(cfg, ev, f, grid, 3), DivergentSeriesError);
    }
}

TEST_CASE("pointwise bound exponent on kolmogorov") {
    FlowSolver solver(make_model("kolmogorov"));
    KernelEvaluator ev(solver);
    GreenConfig cfg;
    cfg.check_refinement = false;
    const double p = 6.0;
    const auto fit = pointwise_bound_fit(cfg, ev, {0.2, 0.4, 0.8}, p);
    const double expected = 1.0 - (2.0 + 4.0) / (2.0 * p);
    CHECK(fit.exponent == doctest::Approx(expected).epsilon(0.1));
    CHECK(fit.constant > 0.0);
}

TEST_CASE("empirical operator norms") {
    FlowSolver solver(make_model("kolmogorov", 0.2));
    KernelEvaluator ev(solver);
    GreenConfig cfg;
    cfg.gh_order = 10;
    cfg.time_levels = 12;
    cfg.check_refinement = false;
    StripGrid grid{0.0, 0.8, 3, v2(-1.0, -1.0), v2(1.0, 1.0), {5, 5}};
    const auto fam = bump_family(2, 1, 1.0, 2);
    const double green_ratio = empirical_norm_ratio(cfg, ev, GreenOperator::Green, fam, grid, 2.0);
    const double n_ratio = empirical_norm_ratio(cfg, ev, GreenOperator::N, fam, grid, 2.0);
    const double r_ratio = empirical_norm_ratio(cfg, ev, GreenOperator::Remainder, fam, grid, 2.0);
    CHECK(green_ratio > 0.0);
    CHECK(green_ratio <= 1.5);
    CHECK(n_ratio <= 1e-8);
    CHECK(r_ratio > 0.0);
}
