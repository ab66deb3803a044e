#pragma once

#include "kolmo/field.hpp"
#include "kolmo/kernel.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace kolmo {

enum class Scheme { Euler, PiecewiseFrozen };

/// Seed of the generator driving path `path`: a splitmix64 hash of (seed, path), so every path
/// owns its stream and results do not depend on scheduling.
std::uint64_t path_seed(std::uint64_t seed, std::uint64_t path);

struct SimulationRequest {
    double s = 0.0;
    Vector x;
    double horizon = 1.0;
    int steps = 100;
    long paths = 1000;
    std::uint64_t seed = 1;
    Scheme scheme = Scheme::Euler;
};

/// Runs the scheme path by path; `visit` receives each trajectory (nd x (steps + 1)) in path order.
using PathVisitor = std::function<void(long path, const Matrix& trajectory)>;
void simulate(const FlowSolver& solver, const SimulationRequest& req, const PathVisitor& visit);

struct PathEnsemble {
    std::string model;
    SimulationRequest request;
    std::vector<Matrix> paths;  // nd x (steps + 1) each

    double step() const { return (request.horizon - request.s) / request.steps; }
    double time(int k) const { return request.s + k * step(); }
    /// Grid index of time t; throws DomainError when t is not on the grid.
    int index_of(double t) const;
    long size() const { return static_cast<long>(paths.size()); }
};

/// Euler–Maruyama: drift on every block, the symmetric square root of a on block 1.
/// Throws DivergenceError (with the step index) on a non-finite state.
PathEnsemble euler_simulate(const FlowSolver& solver, double s, const Vector& x, double T, int N, long n_paths,
                            std::uint64_t seed);

/// Exact frozen-Gaussian sub-steps with the diffusion frozen at the start of each interval.
PathEnsemble piecewise_frozen_simulate(const FlowSolver& solver, double s, const Vector& x, double T, int N,
                                       long n_paths, std::uint64_t seed);

PathEnsemble collect(const FlowSolver& solver, const SimulationRequest& req);

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    long samples = 0;
};

/// Time-dependent test function with analytic derivatives written into caller buffers.
struct TestFunction {
    std::string name;
    /// (t, x) -> value, d/dt, gradient (nd), Hessian in block 1 (d x d)
    std::function<void(double t, const Vector& x, double& value, double& dt, Vector& grad, Matrix& hess11)> eval;
};

TestFunction constant_test_function(double c);
/// exp(-1 / (1 - |(x - c)/w|^2)) inside the unit ellipsoid, 0 outside: smooth with compact support.
TestFunction bump_test_function(const Vector& center, const Vector& widths);
/// x_1^2 - (t - s0): a martingale of Brownian motion.
TestFunction heat_quadratic_test_function(double s0);

/// (d_t + L_t) phi(t, x) with L_t = <F, grad> + 1/2 tr(a D^2_{x_1}).
double generator_of(const ChainSpec& spec, const TestFunction& phi, double t, const Vector& x);

struct MartingaleCheck {
    std::string function;
    double time = 0.0;
    McEstimate statistic;
};

/// E[phi(t, X_t) - phi(s, x) - int_s^t (d_u + L_u) phi(u, X_u) du] (trapezoid on the path grid).
std::vector<MartingaleCheck> martingale_residual(const FlowSolver& solver, const std::vector<TestFunction>& phis,
                                                 const PathEnsemble& ensemble, const std::vector<double>& times);
/// Streaming variant: paths are simulated and discarded one at a time.
std::vector<MartingaleCheck> martingale_residual(const FlowSolver& solver, const std::vector<TestFunction>& phis,
                                                 const SimulationRequest& req, const std::vector<double>& times);

/// E int_s^T f(t, X_t) dt by the trapezoid rule on the path grid.
McEstimate occupation_estimate(const SpaceTimeField& f, const PathEnsemble& ensemble);
McEstimate occupation_estimate(const FlowSolver& solver, const SpaceTimeField& f, const SimulationRequest& req);

/// Affine majorant a + b |x| of occupation values (upper CI / ||f||_p) over the start points.
struct KrylovFit {
    std::vector<double> radii;
    std::vector<double> scaled;  // upper CI / ||f||_p
    double intercept = 0.0;
    double slope = 0.0;
    double r_squared = 0.0;
    /// min over points of (majorant - value); nonnegative after the intercept lift.
    double min_margin = 0.0;
    /// C with value <= C (1 + |x|) ||f||_p at every point.
    double constant = 0.0;
    /// Log-log slope of the scaled values against 1 + |x|; at most 1 when growth is at most linear.
    double growth_exponent = 0.0;
};

KrylovFit krylov_fit(const std::vector<double>& radii, const std::vector<McEstimate>& estimates, double f_norm);

struct DeviationTail {
    double delta = 0.0;
    double probability = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    long hits = 0;
    long samples = 0;
};

/// P[sup_t |X_t - theta_{t,s}(x)| >= delta] over the grid times of the ensemble.
DeviationTail deviation_tail(const FlowSolver& solver, const PathEnsemble& ensemble, double delta);

struct BernsteinFit {
    /// smallest C >= 1 with p <= C exp(-delta^2 / (C T Lambda)) at every sampled delta
    double constant = 1.0;
    /// regression slope of log p against delta^2 (points with p > 0)
    double slope = 0.0;
    double intercept = 0.0;
    /// largest |log p - fit| / |fit| over the points used
    double max_relative_deviation = 0.0;
    int points = 0;
};

BernsteinFit fit_bernstein(const std::vector<DeviationTail>& tails, double horizon, double ellipticity);

/// Expected number of up-crossings tau_{2k} <= T of |X_t - theta_{t,s0}(x0)| through R2,
/// each counted after a return to R1 (the first from the start). Grid detection.
McEstimate tube_excursions(const FlowSolver& solver, double s0, const Vector& x0, double r1, double r2,
                           const PathEnsemble& ensemble);

struct Binning {
    /// Block-i bin width = scale (t - s)^{(2i-1)/2}.
    double scale = 0.5;
};

struct DensityHistogram {
    double time = 0.0;
    double elapsed = 0.0;  // t - s
    Vector center;         // theta_{t,s}(x): bins are aligned on it
    Vector widths;
    std::map<std::vector<long>, long> counts;
    long total = 0;

    double bin_volume() const { return widths.prod(); }
    Vector bin_center(const std::vector<long>& key) const;
    double density(const std::vector<long>& key) const;
};

DensityHistogram density_estimate(const FlowSolver& solver, const PathEnsemble& ensemble, double t,
                                  const Binning& binning = {});

/// L1 distance between the histogram and a reference density; reference bin masses by tensor
/// Gauss–Legendre over each bin, mass outside the populated bins counted in full.
double l1_distance(const DensityHistogram& hist, const std::function<double(const Vector&)>& density,
                   int gl_order = 6);

struct AronsonReport {
    double c_lower = 1.0;
    double c_upper = 1.0;
    int qualified_bins = 0;
    double fraction_inside = 0.0;
};

/// Fits the two-sided multi-scale Gaussian envelope on bins with at least `min_count` samples;
/// constants at the `quantile` of the per-bin requirements. Throws InsufficientDataError when no
/// bin qualifies.
AronsonReport aronson_check(const DensityHistogram& hist, const ChainSpec& spec, long min_count = 50,
                            double quantile = 0.99);

void write_ensemble_csv(std::ostream& os, const PathEnsemble& ensemble);
void write_histogram_csv(std::ostream& os, const DensityHistogram& hist);

}  // namespace kolmo
