#pragma once

#include "kolmo/core.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace kolmo {

using DriftFn = std::function<Vector(double, const Vector&)>;
using JacobianFn = std::function<Matrix(double, const Vector&)>;
using DiffusionFn = std::function<Matrix(double, const Vector&)>;
using FrozenCoeffFn = std::function<Matrix(double)>;

/// Time-homogeneous affine drift F(x) = A x + b.
struct AffineDrift {
    Matrix A;
    Vector b;
};

/// A degenerate chain SDE
///   dX_1 = F_1(t, X) dt + sigma(t, X) dW,  dX_i = F_i(t, X_{i-1}, ..., X_n) dt  (i >= 2)
/// together with the constants of its standing assumptions.
struct ChainSpec {
    std::string name;
    int n = 1;
    int d = 1;
    DriftFn drift;
    /// Subdiagonal part of the Jacobian: only blocks (i, i-1) are nonzero.
    JacobianFn partial_gradient;
    /// a = sigma sigma^*, d x d.
    DiffusionFn diffusion;
    /// The frozen coefficient varsigma(t) used by the proxy kernel.
    FrozenCoeffFn frozen_coeff;
    double lipschitz = 1.0;
    double holder = 1.0;
    double ellipticity = 1.0;
    double nondegeneracy = 1.0;
    /// Set when F is affine and time-homogeneous; enables closed-form flows.
    std::optional<AffineDrift> affine;
    /// varsigma does not depend on t.
    bool constant_frozen_coeff = true;
    /// a does not depend on (t, x) and equals varsigma.
    bool diffusion_equals_frozen = false;

    int dim() const { return n * d; }
    /// Affine drift with a state-independent a == varsigma: the proxy kernel is the exact density.
    bool globally_frozen() const {
        return affine.has_value() && constant_frozen_coeff && diffusion_equals_frozen;
    }
};

/// Scalar test field with optional analytic derivatives; missing derivatives fall
/// back to central differences with step h = 1e-5 (1 + |x|).
struct ScalarField {
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&)> gradient;
    std::function<Matrix(const Vector&)> hessian11;
};

struct ValidationReport {
    int samples = 0;
    double min_eigen_a = 0.0;
    double max_eigen_a = 0.0;
    double min_singular_df = 0.0;
    double lipschitz_ratio = 0.0;
    double holder_ratio = 0.0;
    double max_offdiag_df = 0.0;
    bool block_structure = true;
    bool uniform_ellipticity = true;
    bool nondegeneracy = true;
    bool smoothness = true;
    bool all_pass() const { return block_structure && uniform_ellipticity && nondegeneracy && smoothness; }
};

struct ValidationBox {
    double t_lo = 0.0;
    double t_hi = 1.0;
    double half_width = 2.0;
};

/// Sampled check of the standing assumptions over a Halton point set in the box.
ValidationReport validate_model(const ChainSpec& spec, int sample_budget, unsigned long long rng_seed,
                                const ValidationBox& box = {});

/// L phi = <F, grad phi> + 1/2 tr(a D^2_{x_1} phi).
double apply_generator(const ChainSpec& spec, const ScalarField& phi, double t, const Vector& x);

/// Checked evaluators: throw ModelEvaluationError / ShapeError on bad output.
Vector eval_drift(const ChainSpec& spec, double t, const Vector& x);
Matrix eval_partial_gradient(const ChainSpec& spec, double t, const Vector& x);
Matrix eval_diffusion(const ChainSpec& spec, double t, const Vector& x);
Matrix eval_frozen_coeff(const ChainSpec& spec, double t);

Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x);
Matrix fd_hessian_block(const std::function<double(const Vector&)>& f, const Vector& x, int d);

// ---------------------------------------------------------------------------
// Catalog and user descriptors

/// One term of a drift component: coef * x_var^power, coef * sin(freq x_var) or
/// coef * cos(freq x_var). var < 0 gives the constant coef.
struct DriftTerm {
    enum class Kind { Power, Sin, Cos };
    int component = 0;
    double coef = 0.0;
    int var = -1;
    Kind kind = Kind::Power;
    double power = 1.0;
    double freq = 1.0;
};

/// a(t, x) = base * (1 + amplitude * sin(freq * x_var)).
struct DiffusionDescriptor {
    Matrix base;
    double amplitude = 0.0;
    int var = 0;
    double freq = 1.0;
};

struct ModelDescriptor {
    std::string name = "custom";
    int n = 1;
    int d = 1;
    std::vector<DriftTerm> drift;
    DiffusionDescriptor diffusion;
    std::optional<Matrix> frozen_coeff;
    std::optional<double> lipschitz;
    std::optional<double> holder;
    std::optional<double> ellipticity;
    std::optional<double> nondegeneracy;
};

/// Builds a ChainSpec from a descriptor; rejects drifts violating the chain dependence.
ChainSpec build_model(const ModelDescriptor& desc);

/// Catalog entries: "kolmogorov", "chain3", "nonlinear-kolmogorov", "brownian".
/// `diffusion_modulation` perturbs a = 1 + eps sin(x_1) while keeping varsigma = 1.
ChainSpec make_model(const std::string& name, double diffusion_modulation = 0.0);

std::vector<std::string> model_catalog();

}  // namespace kolmo
