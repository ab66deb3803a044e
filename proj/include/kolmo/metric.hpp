#pragma once

#include "kolmo/flow.hpp"

#include <iosfwd>
#include <random>
#include <vector>

namespace kolmo {

/// Homogeneous norm |t|^{1/2} + sum_i |x_i|^{1/(2i-1)} with Euclidean block norms.
template <typename Derived>
typename Derived::Scalar rho(typename Derived::Scalar t, const Eigen::MatrixBase<Derived>& x, int d) {
    using std::abs;
    using std::pow;
    using std::sqrt;
    using Scalar = typename Derived::Scalar;
    const int n = static_cast<int>(x.size()) / d;
    Scalar r = sqrt(abs(t));
    for (int i = 0; i < n; ++i) {
        const Scalar b = x.segment(i * d, d).stableNorm();
        r += i == 0 ? b : pow(b, Scalar(1) / Scalar(2 * i + 1));
    }
    return r;
}

struct QuasiMetricContext {
    QuasiMetricContext(const FlowSolver& solver, double horizon = 1.0, double lambda_cut = 0.5);

    const FlowSolver* solver;
    double horizon;
    double lambda_cut;

    int n() const { return solver->spec().n; }
    int d() const { return solver->spec().d; }
};

/// d(p, q) = rho(t - s, theta_{t,s}(x) - y) for p = (s, x), q = (t, y).
double dist(const QuasiMetricContext& ctx, const SpaceTimePoint& p, const SpaceTimePoint& q);
/// d*(p, q) = d(q, p).
double dist_star(const QuasiMetricContext& ctx, const SpaceTimePoint& p, const SpaceTimePoint& q);

struct QuasiBall {
    SpaceTimePoint center;
    double radius = 0.0;

    bool contains(const QuasiMetricContext& ctx, const SpaceTimePoint& q) const;
};

struct VolumeEstimate {
    double value = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double std_error = 0.0;
    double box_volume = 0.0;
    long hits = 0;
    long samples = 0;
};

/// Monte Carlo volume of the ball inside an enclosing space-time box: time extent radius^2,
/// block-i extent radius^{2i-1} around the range of the flow, inflated by e^{kappa radius^2}.
/// The interval is the Wilson score interval at 95%.
VolumeEstimate ball_volume(const QuasiMetricContext& ctx, const QuasiBall& ball, long mc_budget,
                           std::mt19937_64& rng);

struct QuasiConstants {
    double c_sym = 1.0;
    double c_tri = 1.0;
    long pairs = 0;
    long triples = 0;
};

/// Sampling region for quasi-metric diagnostics: base times in [t_lo, t_hi], base points
/// uniform in [-half_width, half_width]^{nd}.
struct QuasiSampling {
    double t_lo = 0.0;
    double t_hi = 0.5;
    double half_width = 1.0;
};

/// Random point q with d(p, q) = r exactly, the displacement spread over the scales of rho.
/// time_sign > 0 forces q after p, < 0 before p, 0 picks at random (staying inside the horizon).
SpaceTimePoint point_at_distance(const QuasiMetricContext& ctx, const SpaceTimePoint& p, double r,
                                 std::mt19937_64& rng, int time_sign = 0);

/// Empirical maxima of d(q,p)/d(p,q) and d(p,q)/(d(p,r)+d(r,q)) over pairs and triples
/// with all sampled distances <= lambda_cut.
QuasiConstants quasi_constants(const QuasiMetricContext& ctx, long sample_budget, std::mt19937_64& rng,
                               const QuasiSampling& region = {});

/// Linearization error of the flow in the rescaled frame of (s, x) -> (t, y):
/// |rho T_{rho^-2}(theta_{t,s}(x) - theta~^{t,y}_{t,s}(x))| / ((rho^eta + (t - s)) |x~|) with
/// rho = rho(t - s, y - theta_{t,s}(x)) and x~ = rho T_{rho^-2}(y - theta_{t,s}(x)).
struct LinearizationSample {
    double rho = 0.0;
    double elapsed = 0.0;
    double ratio = 0.0;
};

/// Throws DomainError unless s < t and y differs from theta_{t,s}(x).
LinearizationSample linearization_error(const FlowSolver& solver, double s, double t, const Vector& x,
                                        const Vector& y, double eta);

struct LinearizationFit {
    /// Largest sampled ratio: the fitted constant of the linearization bound.
    double constant = 0.0;
    long samples = 0;
    double max_rho = 0.0;
};

/// Samples (t, y) at quasi-distance rho in [1e-2 lambda_cut, lambda_cut] after (s, x) drawn from the region.
LinearizationFit linearization_constant(const QuasiMetricContext& ctx, long samples, std::mt19937_64& rng,
                                        double eta, const QuasiSampling& region = {});

/// Uniform grid of a compact space-time region.
struct StripGrid {
    double t_lo = 0.0;
    double t_hi = 1.0;
    int t_points = 2;
    Vector x_lo;
    Vector x_hi;
    std::vector<int> x_points;

    std::vector<SpaceTimePoint> points() const;
    /// rho of the grid spacing.
    double cell_diameter(int d) const;
};

struct Covering {
    std::vector<SpaceTimePoint> centers;
    double radius = 0.0;
    int max_overlap = 0;
    bool all_covered = false;
    long grid_size = 0;
};

/// Greedy farthest-point covering of the grid by balls B(center, delta); reports the largest
/// number of K-dilated balls containing one grid point. Throws ResolutionError when a grid
/// cell is wider than delta/4 in rho.
Covering covering(const QuasiMetricContext& ctx, const StripGrid& region, double delta, double dilation);

/// CSV rows: time, coordinates, radius.
void write_covering_csv(std::ostream& os, const Covering& cov);

/// t in [t_lo, t_hi] and |theta_{s0,t}(y) - x0| <= radius.
bool crown_membership(const QuasiMetricContext& ctx, const SpaceTimePoint& point, double s0, const Vector& x0,
                      double t_lo, double t_hi, double radius);

}  // namespace kolmo
