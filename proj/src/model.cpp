#include "kolmo/model.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>
#include <random>
#include <sstream>

namespace kolmo {

namespace {

double radical_inverse(unsigned long long index, unsigned base) {
    double inv = 1.0 / base;
    double f = inv;
    double r = 0.0;
    while (index > 0) {
        r += f * static_cast<double>(index % base);
        index /= base;
        f *= inv;
    }
    return r;
}

constexpr unsigned kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37,
                                41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89};

double gradient_step(const Vector& x) { return 1e-5 * (1.0 + x.norm()); }
double hessian_step(const Vector& x) { return 1e-4 * (1.0 + x.norm()); }

}  // namespace

Vector eval_drift(const ChainSpec& spec, double t, const Vector& x) {
    Vector f = spec.drift(t, x);
    if (f.size() != spec.dim()) throw ShapeError("drift returned wrong dimension");
    if (!f.allFinite()) throw ModelEvaluationError("drift returned non-finite value");
    return f;
}

Matrix eval_partial_gradient(const ChainSpec& spec, double t, const Vector& x) {
    Matrix m = spec.partial_gradient(t, x);
    if (m.rows() != spec.dim() || m.cols() != spec.dim()) throw ShapeError("partial gradient has wrong shape");
    if (!m.allFinite()) throw ModelEvaluationError("partial gradient returned non-finite value");
    return m;
}

Matrix eval_diffusion(const ChainSpec& spec, double t, const Vector& x) {
    Matrix a = spec.diffusion(t, x);
    if (a.rows() != spec.d || a.cols() != spec.d) throw ShapeError("diffusion has wrong shape");
    if (!a.allFinite()) throw ModelEvaluationError("diffusion returned non-finite value");
    return a;
}

Matrix eval_frozen_coeff(const ChainSpec& spec, double t) {
    Matrix c = spec.frozen_coeff(t);
    if (c.rows() != spec.d || c.cols() != spec.d) throw ShapeError("frozen coefficient has wrong shape");
    if (!c.allFinite()) throw ModelEvaluationError("frozen coefficient returned non-finite value");
    return c;
}

Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x) {
    const double h = gradient_step(x);
    Vector g(x.size());
    Vector xp = x;
    for (int k = 0; k < x.size(); ++k) {
        xp(k) = x(k) + h;
        const double fp = f(xp);
        xp(k) = x(k) - h;
        const double fm = f(xp);
        xp(k) = x(k);
        g(k) = (fp - fm) / (2.0 * h);
    }
    return g;
}

Matrix fd_hessian_block(const std::function<double(const Vector&)>& f, const Vector& x, int d) {
    const double h = hessian_step(x);
    Matrix hess(d, d);
    Vector xp = x;
    const double f0 = f(x);
    for (int i = 0; i < d; ++i) {
        xp(i) = x(i) + h;
        const double fp = f(xp);
        xp(i) = x(i) - h;
        const double fm = f(xp);
        xp(i) = x(i);
        hess(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
        for (int j = 0; j < i; ++j) {
            double acc = 0.0;
            for (int si = -1; si <= 1; si += 2) {
                for (int sj = -1; sj <= 1; sj += 2) {
                    xp(i) = x(i) + si * h;
                    xp(j) = x(j) + sj * h;
                    acc += si * sj * f(xp);
                }
            }
            xp(i) = x(i);
            xp(j) = x(j);
            hess(i, j) = hess(j, i) = acc / (4.0 * h * h);
        }
    }
    return hess;
}

double apply_generator(const ChainSpec& spec, const ScalarField& phi, double t, const Vector& x) {
    if (x.size() != spec.dim()) throw ShapeError("point has wrong dimension");
    const Vector grad = phi.gradient ? phi.gradient(x) : fd_gradient(phi.value, x);
    const Matrix hess = phi.hessian11 ? phi.hessian11(x) : fd_hessian_block(phi.value, x, spec.d);
    if (grad.size() != spec.dim() || hess.rows() != spec.d || hess.cols() != spec.d)
        throw ShapeError("test field derivatives have wrong shape");
    if (!grad.allFinite() || !hess.allFinite()) throw ModelEvaluationError("non-finite test field derivative");
    const Vector f = eval_drift(spec, t, x);
    const Matrix a = eval_diffusion(spec, t, x);
    return f.dot(grad) + 0.5 * (a.cwiseProduct(hess)).sum();
}

ValidationReport validate_model(const ChainSpec& spec, int sample_budget, unsigned long long rng_seed,
                                const ValidationBox& box) {
    if (sample_budget < 1) throw DomainError("sample_budget must be >= 1");
    const int n = spec.n;
    const int d = spec.d;
    const int dim = spec.dim();
    if (dim + 1 > static_cast<int>(std::size(kPrimes)))
        throw DomainError("validation supports at most 23 state dimensions");

    std::mt19937_64 rng(rng_seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    // Cranley–Patterson rotation of the Halton set.
    Vector shift(dim + 1);
    for (int k = 0; k <= dim; ++k) shift(k) = unif(rng);

    auto halton_point = [&](unsigned long long i, double& t, Vector& x) {
        auto coord = [&](int k) {
            double u = radical_inverse(i + 1, kPrimes[k]) + shift(k);
            return u - std::floor(u);
        };
        t = box.t_lo + (box.t_hi - box.t_lo) * coord(0);
        x.resize(dim);
        for (int k = 0; k < dim; ++k) x(k) = box.half_width * (2.0 * coord(k + 1) - 1.0);
    };

    ValidationReport rep;
    rep.samples = sample_budget;
    rep.min_eigen_a = std::numeric_limits<double>::infinity();
    rep.max_eigen_a = -std::numeric_limits<double>::infinity();
    rep.min_singular_df = std::numeric_limits<double>::infinity();

    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < sample_budget; ++i) {
        double t;
        Vector x;
        halton_point(static_cast<unsigned long long>(i), t, x);

        Matrix a = eval_diffusion(spec, t, x);
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
        rep.min_eigen_a = std::min(rep.min_eigen_a, es.eigenvalues().minCoeff());
        rep.max_eigen_a = std::max(rep.max_eigen_a, es.eigenvalues().maxCoeff());

        const Matrix df = eval_partial_gradient(spec, t, x);
        for (int bi = 0; bi < n; ++bi) {
            for (int bj = 0; bj < n; ++bj) {
                auto blk = df.block(bi * d, bj * d, d, d);
                if (bi == bj + 1) {
                    Eigen::JacobiSVD<Matrix> svd(blk);
                    rep.min_singular_df = std::min(rep.min_singular_df, svd.singularValues().minCoeff());
                } else {
                    rep.max_offdiag_df = std::max(rep.max_offdiag_df, blk.cwiseAbs().maxCoeff());
                }
            }
        }

        // Chain dependence: F_i must ignore blocks j < i-1.
        const Vector f = eval_drift(spec, t, x);
        for (int bj = 0; bj + 2 < n; ++bj) {
            Vector xp = x;
            for (int k = 0; k < d; ++k) xp(bj * d + k) += 1.0 + normal(rng);
            const Vector fp = eval_drift(spec, t, xp);
            for (int bi = bj + 2; bi < n; ++bi) {
                if ((block(fp, bi, d) - block(f, bi, d)).cwiseAbs().maxCoeff() != 0.0) rep.block_structure = false;
            }
        }

        // Lipschitz and Hölder ratios on a nearby pair and a distant pair.
        double t2;
        Vector x2;
        halton_point(static_cast<unsigned long long>(i + sample_budget), t2, x2);
        Vector near = x;
        for (int k = 0; k < dim; ++k) near(k) += 0.05 * box.half_width * normal(rng);
        for (const Vector* other : {&x2, &near}) {
            const double dx = (x - *other).norm();
            if (dx == 0.0) continue;
            const Vector fo = eval_drift(spec, t, *other);
            rep.lipschitz_ratio = std::max(rep.lipschitz_ratio, (f - fo).norm() / dx);
            const Matrix dfo = eval_partial_gradient(spec, t, *other);
            rep.holder_ratio = std::max(rep.holder_ratio, (df - dfo).norm() / std::pow(dx, spec.holder));
        }
    }
    if (n == 1) rep.min_singular_df = std::numeric_limits<double>::infinity();

    const double lam = spec.ellipticity;
    rep.uniform_ellipticity = rep.min_eigen_a >= (1.0 / lam) * (1.0 - 1e-12) && rep.max_eigen_a <= lam * (1.0 + 1e-12);
    rep.nondegeneracy = n == 1 || rep.min_singular_df >= spec.nondegeneracy * (1.0 - 1e-9);
    rep.smoothness = rep.lipschitz_ratio <= spec.lipschitz * (1.0 + 1e-9) + 1e-12;
    if (rep.max_offdiag_df != 0.0) rep.block_structure = false;
    return rep;
}

// ---------------------------------------------------------------------------

namespace {

double term_value(const DriftTerm& term, const Vector& x) {
    if (term.var < 0) return term.coef;
    const double v = x(term.var);
    switch (term.kind) {
        case DriftTerm::Kind::Power: return term.coef * std::pow(v, term.power);
        case DriftTerm::Kind::Sin: return term.coef * std::sin(term.freq * v);
        case DriftTerm::Kind::Cos: return term.coef * std::cos(term.freq * v);
    }
    return 0.0;
}

double term_derivative(const DriftTerm& term, const Vector& x) {
    if (term.var < 0) return 0.0;
    const double v = x(term.var);
    switch (term.kind) {
        case DriftTerm::Kind::Power:
            if (term.power == 0.0) return 0.0;
            if (term.power == 1.0) return term.coef;
            return term.coef * term.power * std::pow(v, term.power - 1.0);
        case DriftTerm::Kind::Sin: return term.coef * term.freq * std::cos(term.freq * v);
        case DriftTerm::Kind::Cos: return -term.coef * term.freq * std::sin(term.freq * v);
    }
    return 0.0;
}

bool term_is_affine(const DriftTerm& term) {
    return term.var < 0 || (term.kind == DriftTerm::Kind::Power && (term.power == 0.0 || term.power == 1.0));
}

}  // namespace

ChainSpec build_model(const ModelDescriptor& desc) {
    if (desc.n < 1 || desc.d < 1) throw DomainError("model dimensions must be positive");
    const int n = desc.n;
    const int d = desc.d;
    const int dim = n * d;
    for (const auto& term : desc.drift) {
        if (term.component < 0 || term.component >= dim) throw ShapeError("drift term component out of range");
        if (term.var >= dim) throw ShapeError("drift term variable out of range");
        if (term.var >= 0) {
            const int bi = term.component / d;
            const int bv = term.var / d;
            if (bv < bi - 1) {
                std::ostringstream os;
                os << "drift component " << term.component << " depends on variable " << term.var
                   << ", violating the chain structure";
                throw DomainError(os.str());
            }
        }
    }
    if (desc.diffusion.base.rows() != d || desc.diffusion.base.cols() != d)
        throw ShapeError("diffusion base matrix must be d x d");

    ChainSpec spec;
    spec.name = desc.name;
    spec.n = n;
    spec.d = d;
    const auto terms = desc.drift;
    spec.drift = [terms, dim](double, const Vector& x) {
        Vector f = Vector::Zero(dim);
        for (const auto& term : terms) f(term.component) += term_value(term, x);
        return f;
    };
    spec.partial_gradient = [terms, dim, d](double, const Vector& x) {
        Matrix m = Matrix::Zero(dim, dim);
        for (const auto& term : terms) {
            if (term.var < 0) continue;
            if (term.var / d == term.component / d - 1) m(term.component, term.var) += term_derivative(term, x);
        }
        return m;
    };
    const DiffusionDescriptor dd = desc.diffusion;
    spec.diffusion = [dd](double, const Vector& x) -> Matrix {
        if (dd.amplitude == 0.0) return dd.base;
        return dd.base * (1.0 + dd.amplitude * std::sin(dd.freq * x(dd.var)));
    };
    const Matrix frozen = desc.frozen_coeff.value_or(dd.base);
    if (frozen.rows() != d || frozen.cols() != d) throw ShapeError("frozen coefficient must be d x d");
    spec.frozen_coeff = [frozen](double) { return frozen; };
    spec.constant_frozen_coeff = true;
    spec.diffusion_equals_frozen = dd.amplitude == 0.0 && (frozen - dd.base).norm() == 0.0;

    if (std::all_of(terms.begin(), terms.end(), term_is_affine)) {
        AffineDrift aff{Matrix::Zero(dim, dim), Vector::Zero(dim)};
        for (const auto& term : terms) {
            if (term.var < 0 || term.power == 0.0)
                aff.b(term.component) += term.coef;
            else
                aff.A(term.component, term.var) += term.coef;
        }
        spec.affine = aff;
    }

    // Default constants from the descriptor data.
    double max_deriv = 0.0;
    for (const auto& term : terms) {
        if (term.var < 0) continue;
        double bound = std::abs(term.coef);
        if (term.kind != DriftTerm::Kind::Power) bound *= std::abs(term.freq);
        max_deriv += bound;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(dd.base);
    const double lo = es.eigenvalues().minCoeff() * (1.0 - std::abs(dd.amplitude));
    const double hi = es.eigenvalues().maxCoeff() * (1.0 + std::abs(dd.amplitude));
    if (!(lo > 0.0)) throw DomainError("diffusion is not uniformly elliptic");
    spec.lipschitz = desc.lipschitz.value_or(max_deriv);
    spec.holder = desc.holder.value_or(1.0);
    spec.ellipticity = desc.ellipticity.value_or(std::max({1.0, 1.0 / lo, hi}));
    spec.nondegeneracy = desc.nondegeneracy.value_or(1.0);
    return spec;
}

ChainSpec make_model(const std::string& name, double diffusion_modulation) {
    ModelDescriptor desc;
    desc.name = name;
    desc.diffusion.base = Matrix::Identity(1, 1);
    desc.diffusion.amplitude = diffusion_modulation;
    desc.diffusion.var = 0;
    desc.frozen_coeff = Matrix::Identity(1, 1);
    using K = DriftTerm::Kind;
    if (name == "kolmogorov") {
        desc.n = 2;
        desc.drift = {{1, 1.0, 0, K::Power, 1.0}};
        desc.lipschitz = 1.0;
        desc.nondegeneracy = 1.0;
    } else if (name == "chain3") {
        desc.n = 3;
        desc.drift = {{1, 1.0, 0, K::Power, 1.0}, {2, 1.0, 1, K::Power, 1.0}};
        desc.lipschitz = 1.0;
        desc.nondegeneracy = 1.0;
    } else if (name == "nonlinear-kolmogorov") {
        desc.n = 2;
        desc.drift = {{1, 1.0, 0, K::Power, 1.0}, {1, 0.25, 0, K::Sin, 1.0, 1.0}};
        desc.lipschitz = 1.25;
        desc.nondegeneracy = 0.75;
    } else if (name == "brownian") {
        desc.n = 1;
        desc.lipschitz = 0.0;
        desc.nondegeneracy = 1.0;
    } else {
        std::ostringstream os;
        os << "unknown model '" << name << "'; catalog:";
        for (const auto& m : model_catalog()) os << ' ' << m;
        throw ConfigError(os.str());
    }
    desc.holder = 1.0;
    return build_model(desc);
}

std::vector<std::string> model_catalog() {
    return {"kolmogorov", "chain3", "nonlinear-kolmogorov", "brownian"};
}

}  // namespace kolmo
