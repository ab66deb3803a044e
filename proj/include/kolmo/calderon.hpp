#pragma once

#include "kolmo/field.hpp"
#include "kolmo/kernel.hpp"
#include "kolmo/metric.hpp"

#include <iosfwd>
#include <random>
#include <vector>

namespace kolmo {

struct SingularKernelConfig {
    /// Split radius: the cutoff falls from 1 to 0 while rho runs over [delta, 2 delta].
    double delta = 0.25;
    std::vector<double> eps_list{0.4, 0.2, 0.1, 0.05};
    int gh_order = 20;
    int gl_order = 8;
    /// The strip [t_lo, t_hi) carrying the test functions.
    double t_lo = 0.0;
    double t_hi = 1.0;
    bool check_refinement = true;
    double refine_tol = 1e-2;
    /// Truncation level standing in for eps -> 0 when the kernel is applied to smooth f.
    double limit_eps = 1e-2;
    /// The constant c of the regularity estimate: triples with c d(p, p') <= d(p, q).
    double regularity_ratio = 2.0;
};

enum class KernelPart { Full, Near, Far };

/// Quintic smoothstep cutoff: 1 for rho(u, z) <= delta, 0 for rho >= 2 delta, C^2 in between.
double cutoff(double delta, double u, const Vector& z, int d);

/// k(s, t, x, y) = 1_{t>s} D^2_{x_1} q~(s, t, x, y) with freezing point (t, y).
Matrix kernel_value(const KernelEvaluator& ev, double s, double t, const Vector& x, const Vector& y);

struct KernelSplit {
    Matrix near;
    Matrix far;
    double weight = 0.0;  // cutoff value
};

KernelSplit split_kernel(const SingularKernelConfig& cfg, const KernelEvaluator& ev, double s, double t,
                         const Vector& x, const Vector& y);

/// Integral of k_ij(s, t, x, y) f(t, y) over {t - s > eps^2} (dyadic annuli in t - s, Gauss–Hermite
/// in y around the kernel). With `adjoint` the kernel is k*(s, t, x, y) = k(t, s, y, x), integrated
/// over {s - t > eps^2}. Throws AccuracyError when two refinement levels disagree.
double truncated_integral(const SingularKernelConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f,
                          double s, const Vector& x, double eps, int i, int j, KernelPart part = KernelPart::Full,
                          bool adjoint = false);

struct StandardEstimateReport {
    long samples = 0;
    /// i) sup |k^d| d^{n^2 d + 2}
    double size_bound = 0.0;
    double size_bound_adjoint = 0.0;
    /// ii) sup of the regularity ratio against the two-term majorant
    double regularity_bound = 0.0;
    double regularity_bound_adjoint = 0.0;
    long regularity_samples = 0;
    /// iv) truncated integrals of the kernel and its adjoint against f = 1 over the eps list
    std::vector<double> eps;
    std::vector<double> cancellation;
    std::vector<double> cancellation_adjoint;
    double max_cancellation = 0.0;
};

/// Sampled checks of the size and regularity of the near kernel, and cancellation of the truncations.
StandardEstimateReport standard_estimate_checks(const SingularKernelConfig& cfg, const KernelEvaluator& ev,
                                                const QuasiMetricContext& ctx, long sample_budget,
                                                std::mt19937_64& rng, const QuasiSampling& region = {},
                                                bool with_cancellation = true);

/// CSV rows: statistic, value, sample size, CI (empty where not applicable).
void write_standard_estimates_csv(std::ostream& os, const StandardEstimateReport& rep);

/// D^2_{x_1} G~ f at (s, x): the truncated integral of the full kernel at limit_eps (entry (i, j)).
double second_derivative_green(const SingularKernelConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f,
                               double s, const Vector& x, int i = 0, int j = 0);

/// ||D^2_{x_1} G~ f||_p / ||f||_p by midpoint sums over the grid; 0 when f vanishes on the grid.
double cz_ratio(const SingularKernelConfig& cfg, const KernelEvaluator& ev, const SpaceTimeField& f, double p,
                const StripGrid& grid);

}  // namespace kolmo
