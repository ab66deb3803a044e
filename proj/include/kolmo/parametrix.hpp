#pragma once

#include "kolmo/field.hpp"
#include "kolmo/kernel.hpp"
#include "kolmo/metric.hpp"

#include <iosfwd>
#include <vector>

namespace kolmo {

struct GreenConfig {
    /// Terminal time T, in (0, 1].
    double horizon = 1.0;
    /// Dyadic panels in t - s accumulating at s; the innermost panel has width (T - s) 2^-time_levels.
    int time_levels = 24;
    int gl_order = 8;
    int gh_order = 20;
    int neumann_depth = 2;
    /// Exponent of the empirical L^p norms.
    double p = 2.0;
    bool check_refinement = true;
    /// Two refinement levels must agree to this fraction of the absolute integrand mass.
    double refine_tol = 1e-3;
};

/// Throws ConfigError for T outside (0, 1], negative depth, p < 1 or empty quadratures.
void validate_green_config(const GreenConfig& cfg);

/// G~f(s, x) = int_s^T int q~(s, t, x, y) f(t, y) dy dt.
double green(const GreenConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f, double s, const Vector& x);

/// Drift mismatch against the partially frozen drift, paired with the x-gradient of q~.
double perturbation_N(const GreenConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f, double s,
                      const Vector& x);

/// Second-order Taylor remainder of F_i in the transmitting block i-1, weighted by q~ f.
/// `block` is the zero-based block index in 1..n-1. Returns a d-vector.
Vector perturbation_Ri(const GreenConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f, double s,
                       const Vector& x, int block);

/// The same Taylor remainder paired with D_{x_i} q~: the term of R carried by block i.
double perturbation_DRi(const GreenConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f, double s,
                        const Vector& x, int block);

/// Rf = int int (L_s - L~_s^{t,y}) q~ f, straight from the difference of generators.
double remainder_R(const GreenConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f, double s,
                   const Vector& x);

/// All pieces of Rf from one quadrature pass: total = drift_mismatch + sum(transmission) + diffusion.
struct RemainderParts {
    double total = 0.0;
    double drift_mismatch = 0.0;          // N f
    std::vector<double> transmission;     // D_{x_i} R_i f for blocks 1..n-1 (zero-based)
    double diffusion = 0.0;               // 1/2 tr((a - varsigma) D^2_{x_1} q~) against f
};

RemainderParts remainder_parts(const GreenConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f, double s,
                               const Vector& x);

// ---------------------------------------------------------------------------
// Grid fields and the Neumann series

/// Values on a StripGrid, read back by multilinear interpolation (zero outside the grid).
struct GridField {
    StripGrid grid;
    std::vector<double> values;

    double operator()(double t, const Vector& y) const;
    /// As a SpaceTimeField, with a spatial profile hint covering the grid box.
    SpaceTimeField field() const;
};

GridField sample_on_grid(const SpaceTimeField& f, const StripGrid& grid);

/// (sum_k |v_k|^p cell)^{1/p} with the grid cell volume as weight.
double grid_norm(const GridField& g, double p);

enum class GreenOperator { Green, N, Remainder };

/// Applies an operator at every grid node; nodes are evaluated concurrently.
GridField apply_on_grid(const GreenConfig& cfg, const KernelEvaluator& ev, GreenOperator op, const SpaceTimeField& f,
                        const StripGrid& grid);

struct NeumannResult {
    int depth = 0;
    /// f + R f + ... + R^m f, the R^k f (k >= 1) interpolated from the grid.
    SpaceTimeField series;
    /// ||R^k f||_p on the grid, k = 0..m+1.
    std::vector<double> term_norms;
    /// ||(I - R) sum_{k<=j} R^k f - f||_p = ||R^{j+1} f||_p, j = 0..m.
    std::vector<double> residuals;
    /// Largest observed ||R^{k+1} f|| / ||R^k f||.
    double operator_norm = 0.0;
};

/// Truncated Neumann series on the grid. Throws DivergentSeriesError as soon as an observed
/// contraction ratio reaches 1.
NeumannResult neumann_apply(const GreenConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f,
                            const StripGrid& grid, int depth);

/// G~ applied to the truncated Neumann series.
double green_full(const GreenConfig& cfg, const KernelEvaluator& ev, const NeumannResult& series, double s,
                  const Vector& x);

/// CSV rows: time, coordinates, value.
void write_grid_csv(std::ostream& os, const GridField& g);

// ---------------------------------------------------------------------------
// Diagnostics

struct PdeResidual {
    /// |(d_s + L~_s^{t,y}) q~| (t - s)^{n^2 d / 2} at step h (or analytic d_s).
    double value = 0.0;
    /// The same at h / 2 (equal to value with the analytic time derivative).
    double value_half = 0.0;
    /// log2(value / value_half).
    double observed_order = 0.0;
};

/// Backward equation residual of the frozen kernel with the freezing point (t, y) fixed.
/// Throws StepSizeError when s + h >= t or when the residual is not O(h^2) under halving.
PdeResidual backward_pde_residual(const FlowSolver& solver, double s, double t, const Vector& x, const Vector& y,
                                  double h, bool analytic_time_derivative = false);

struct PointwiseFit {
    std::vector<double> horizons;
    std::vector<double> ratios;  // |G~f(0, x0)| / ||f||_p
    double exponent = 0.0;       // fitted log-log slope
    double constant = 0.0;       // max ratio / T^exponent
};

/// Fits |G~f(0, 0)| <= C T^e ||f||_p over smooth bumps with time extent T and block-i width
/// proportional to T^{(2i-1)/2}.
PointwiseFit pointwise_bound_fit(const GreenConfig& cfg, const KernelEvaluator& ev, const std::vector<double>& horizons,
                                 double p);

/// Gaussian bumps of decreasing spatial scale on [0, T): the family for empirical operator norms.
std::vector<SpaceTimeField> bump_family(int n, int d, double horizon, int count);

/// max over the family of ||op f||_p / ||f||_p on the grid.
double empirical_norm_ratio(const GreenConfig& cfg, const KernelEvaluator& ev, GreenOperator op,
                            const std::vector<SpaceTimeField>& family, const StripGrid& grid, double p);

}  // namespace kolmo
