#include "kolmo/cli.hpp"

#include "kolmo/calderon.hpp"
#include "kolmo/montecarlo.hpp"
#include "kolmo/parametrix.hpp"
#include "kolmo/quadrature.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

namespace kolmo {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) {
            std::string list;
            for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
            throw ConfigError(where + ": unknown key '" + key + "' (allowed: " + list + ")");
        }
    }
}

double get_number(const json& obj, const char* key, const std::string& where, double def) {
    if (!obj.contains(key)) return def;
    const auto& v = obj.at(key);
    if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
    return v.get<double>();
}

long get_integer(const json& obj, const char* key, const std::string& where, long def) {
    if (!obj.contains(key)) return def;
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
    return v.get<long>();
}

std::string get_string(const json& obj, const char* key, const std::string& where, const std::string& def) {
    if (!obj.contains(key)) return def;
    const auto& v = obj.at(key);
    if (!v.is_string()) throw ConfigError(where + "." + key + ": expected a string");
    return v.get<std::string>();
}

Matrix get_matrix(const json& v, const std::string& where) {
    if (v.is_number()) return Matrix::Constant(1, 1, v.get<double>());
    if (!v.is_array() || v.empty()) throw ConfigError(where + ": expected a square matrix (array of rows)");
    const auto rows = static_cast<Eigen::Index>(v.size());
    Matrix m(rows, rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = v[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != rows)
            throw ConfigError(where + ": expected a square matrix (array of rows)");
        for (Eigen::Index j = 0; j < rows; ++j) {
            if (!row[static_cast<std::size_t>(j)].is_number()) throw ConfigError(where + ": non-numeric entry");
            m(i, j) = row[static_cast<std::size_t>(j)].get<double>();
        }
    }
    return m;
}

ModelDescriptor parse_descriptor(const json& obj) {
    const std::string where = "model";
    check_keys(obj, where,
               {"name", "n", "d", "drift", "diffusion", "frozen_coeff", "lipschitz", "holder", "ellipticity",
                "nondegeneracy"});
    ModelDescriptor desc;
    desc.name = get_string(obj, "name", where, "custom");
    desc.n = static_cast<int>(get_integer(obj, "n", where, 1));
    desc.d = static_cast<int>(get_integer(obj, "d", where, 1));
    if (desc.n < 1 || desc.d < 1) throw ConfigError("model.n and model.d must be positive");
    if (obj.contains("drift")) {
        if (!obj["drift"].is_array()) throw ConfigError("model.drift: expected an array of terms");
        for (std::size_t k = 0; k < obj["drift"].size(); ++k) {
            const auto& t = obj["drift"][k];
            const std::string tw = "model.drift[" + std::to_string(k) + "]";
            check_keys(t, tw, {"component", "coef", "var", "kind", "power", "freq"});
            DriftTerm term;
            term.component = static_cast<int>(get_integer(t, "component", tw, 0));
            term.coef = get_number(t, "coef", tw, 0.0);
            term.var = static_cast<int>(get_integer(t, "var", tw, -1));
            const std::string kind = get_string(t, "kind", tw, "power");
            if (kind == "power")
                term.kind = DriftTerm::Kind::Power;
            else if (kind == "sin")
                term.kind = DriftTerm::Kind::Sin;
            else if (kind == "cos")
                term.kind = DriftTerm::Kind::Cos;
            else
                throw ConfigError(tw + ".kind: expected power, sin or cos");
            term.power = get_number(t, "power", tw, 1.0);
            term.freq = get_number(t, "freq", tw, 1.0);
            desc.drift.push_back(term);
        }
    }
    desc.diffusion.base = Matrix::Identity(desc.d, desc.d);
    if (obj.contains("diffusion")) {
        const auto& dj = obj["diffusion"];
        check_keys(dj, "model.diffusion", {"base", "amplitude", "var", "freq"});
        if (dj.contains("base")) desc.diffusion.base = get_matrix(dj["base"], "model.diffusion.base");
        desc.diffusion.amplitude = get_number(dj, "amplitude", "model.diffusion", 0.0);
        desc.diffusion.var = static_cast<int>(get_integer(dj, "var", "model.diffusion", 0));
        desc.diffusion.freq = get_number(dj, "freq", "model.diffusion", 1.0);
    }
    if (obj.contains("frozen_coeff")) desc.frozen_coeff = get_matrix(obj["frozen_coeff"], "model.frozen_coeff");
    auto opt = [&](const char* key, std::optional<double>& slot) {
        if (obj.contains(key)) slot = get_number(obj, key, where, 0.0);
    };
    opt("lipschitz", desc.lipschitz);
    opt("holder", desc.holder);
    opt("ellipticity", desc.ellipticity);
    opt("nondegeneracy", desc.nondegeneracy);
    return desc;
}

std::string position_of(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

ChainSpec ExperimentConfig::build_spec() const {
    if (descriptor) return build_model(*descriptor);
    return make_model(model, diffusion_modulation);
}

std::vector<std::string> suite_names() { return {"flows", "kernel", "metric", "calderon", "parametrix", "montecarlo"}; }

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": parse error at " + position_of(text, e.byte) + ": " + e.what());
    }
    check_keys(j, "config", {"model", "diffusion_modulation", "T", "seed", "checks", "output", "budgets", "timing"});
    ExperimentConfig cfg;
    if (!j.contains("model")) throw ConfigError("config.model: required");
    if (j["model"].is_string()) {
        cfg.model = j["model"].get<std::string>();
        const auto cat = model_catalog();
        if (std::find(cat.begin(), cat.end(), cfg.model) == cat.end()) {
            std::string list;
            for (const auto& m : cat) list += " " + m;
            throw ConfigError("config.model: unknown model '" + cfg.model + "'; catalog:" + list);
        }
    } else if (j["model"].is_object()) {
        cfg.descriptor = parse_descriptor(j["model"]);
        cfg.model = cfg.descriptor->name;
    } else {
        throw ConfigError("config.model: expected a catalog name or a descriptor object");
    }
    cfg.diffusion_modulation = get_number(j, "diffusion_modulation", "config", 0.0);
    if (cfg.descriptor && j.contains("diffusion_modulation"))
        throw ConfigError("config.diffusion_modulation: only applies to catalog models");
    if (std::abs(cfg.diffusion_modulation) >= 1.0)
        throw ConfigError("config.diffusion_modulation: must lie in (-1, 1)");
    cfg.horizon = get_number(j, "T", "config", 1.0);
    if (!(cfg.horizon > 0.0 && cfg.horizon <= 1.0)) throw ConfigError("config.T: must lie in (0, 1]");
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw ConfigError("config.seed: expected a nonnegative integer");
        cfg.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("checks")) {
        if (!j["checks"].is_array()) throw ConfigError("config.checks: expected an array of suite names");
        const auto names = suite_names();
        for (const auto& c : j["checks"]) {
            if (!c.is_string()) throw ConfigError("config.checks: expected suite names");
            const auto name = c.get<std::string>();
            if (std::find(names.begin(), names.end(), name) == names.end())
                throw ConfigError("config.checks: unknown suite '" + name + "'");
            cfg.checks.push_back(name);
        }
    }
    cfg.output = get_string(j, "output", "config", ".");
    if (j.contains("timing")) {
        if (!j["timing"].is_boolean()) throw ConfigError("config.timing: expected a boolean");
        cfg.timing = j["timing"].get<bool>();
    }
    if (j.contains("budgets")) {
        const auto& b = j["budgets"];
        const std::string w = "config.budgets";
        check_keys(b, w,
                   {"paths", "steps", "samples", "grid_points", "gl_order", "gh_order", "time_levels",
                    "neumann_depth"});
        auto& bd = cfg.budgets;
        bd.paths = get_integer(b, "paths", w, bd.paths);
        bd.steps = static_cast<int>(get_integer(b, "steps", w, bd.steps));
        bd.samples = get_integer(b, "samples", w, bd.samples);
        bd.grid_points = static_cast<int>(get_integer(b, "grid_points", w, bd.grid_points));
        bd.gl_order = static_cast<int>(get_integer(b, "gl_order", w, bd.gl_order));
        bd.gh_order = static_cast<int>(get_integer(b, "gh_order", w, bd.gh_order));
        bd.time_levels = static_cast<int>(get_integer(b, "time_levels", w, bd.time_levels));
        bd.neumann_depth = static_cast<int>(get_integer(b, "neumann_depth", w, bd.neumann_depth));
        const std::map<std::string, long> all{{"paths", bd.paths},         {"steps", bd.steps},
                                              {"samples", bd.samples},     {"grid_points", bd.grid_points},
                                              {"gl_order", bd.gl_order},   {"gh_order", bd.gh_order},
                                              {"time_levels", bd.time_levels}};
        for (const auto& [k, v] : all)
            if (v <= 0) throw ConfigError(w + "." + k + ": must be positive");
        if (bd.neumann_depth < 0) throw ConfigError(w + ".neumann_depth: must be nonnegative");
    }
    // Fail early on descriptors that do not define a valid chain.
    try {
        (void)cfg.build_spec();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("config.model: ") + e.what());
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

// ---------------------------------------------------------------------------
// Suites

namespace {

struct SuiteContext {
    const ExperimentConfig& cfg;
    std::string suite;
    std::uint64_t seed;
    std::vector<ReportRow> rows;

    void add(const std::string& check, const std::string& statistic, double value, double bound, long n) {
        rows.push_back(make_row(suite, check, statistic, value, bound, n, seed));
    }
};

Vector random_point(int dim, std::mt19937_64& rng, double half = 1.0) {
    std::uniform_real_distribution<double> u(-half, half);
    Vector v(dim);
    for (int i = 0; i < dim; ++i) v(i) = u(rng);
    return v;
}

void suite_flows(SuiteContext& sc) {
    const auto spec = sc.cfg.build_spec();
    FlowSolver solver(spec, FlowOptions{.horizon = sc.cfg.horizon});
    std::mt19937_64 rng(sc.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const long m = std::min<long>(sc.cfg.budgets.samples, 50);
    const double T = sc.cfg.horizon;
    double det_err = 0.0, round_trip = 0.0, semigroup = 0.0;
    for (long k = 0; k < m; ++k) {
        const double s = 0.5 * T * u(rng);
        const double t = s + (T - s) * (0.05 + 0.95 * u(rng));
        const double mid = 0.5 * (s + t);
        const Vector x = random_point(spec.dim(), rng);
        const Vector y = random_point(spec.dim(), rng);
        det_err = std::max(det_err, std::abs(solver.resolvent({t, y}, t, s).determinant() - 1.0));
        const Vector fwd = solver.flow(t, s, x);
        round_trip = std::max(round_trip, (solver.flow(s, t, fwd) - x).norm() / (1.0 + x.norm()));
        semigroup = std::max(semigroup,
                             (solver.flow(t, mid, solver.flow(mid, s, x)) - fwd).norm() / (1.0 + x.norm()));
    }
    sc.add("resolvent_determinant", "max |det R - 1|", det_err, 1e-8, m);
    sc.add("flow_round_trip", "max |theta_{s,t} theta_{t,s} x - x| / (1 + |x|)", round_trip, 1e-6, m);
    sc.add("flow_semigroup", "max |theta_{t,u} theta_{u,s} x - theta_{t,s} x| / (1 + |x|)", semigroup, 1e-6, m);
}

/// Mass of q~ by a widened, shifted Gauss–Hermite rule (the density is not the rule's weight).
double gh_mass(const FrozenGaussian& g, int order) {
    const int dim = static_cast<int>(g.mean().size());
    const auto& rule = gauss_hermite_tensor(order, dim);
    const double widen = 1.2;
    const Vector offset = Vector::Constant(dim, 0.3);
    const Matrix l = g.factor().scaled_chol.matrixL();
    const Vector& scale = g.factor().scale;
    const double root = std::sqrt(g.delta());
    const double log_jac = 0.5 * g.factor().log_det + dim * std::log(widen);
    double acc = 0.0;
    for (long c = 0; c < rule.weights.size(); ++c) {
        const Vector y = g.mean() + scale.cwiseProduct(l * (widen * rule.nodes.col(c) + offset)) / root;
        acc += rule.weights(c) * std::exp(g.log_density(y) + log_jac - rule.log_normal(c));
    }
    return acc;
}

int tensor_order(int requested, int dim) {
    int order = requested;
    while (order > 4 && std::pow(double(order), dim) > 2e5) --order;
    return order;
}

void suite_kernel(SuiteContext& sc) {
    const auto spec = sc.cfg.build_spec();
    FlowSolver solver(spec, FlowOptions{.horizon = sc.cfg.horizon});
    KernelEvaluator ev(solver);
    std::mt19937_64 rng(sc.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double T = sc.cfg.horizon;
    const int order = tensor_order(sc.cfg.budgets.gh_order, spec.dim());
    const long m = std::min<long>(sc.cfg.budgets.samples, 20);
    double mass_err = 0.0, min_eig = std::numeric_limits<double>::infinity();
    for (long k = 0; k < m; ++k) {
        const double s = 0.5 * T * u(rng);
        const double t = s + (T - s) * (0.02 + 0.98 * u(rng));
        const Vector x = random_point(spec.dim(), rng);
        const Vector y = random_point(spec.dim(), rng);
        const auto g = frozen_gaussian(solver, s, t, x, {t, y});
        mass_err = std::max(mass_err, std::abs(gh_mass(g, order) - 1.0));
        min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Matrix>(g.scaled_covariance()).eigenvalues().minCoeff());
    }
    sc.add("normalization", "max |int q~ dy - 1|", mass_err, 1e-8, m);
    sc.add("scaled_covariance_positive", "-min eigenvalue of the scaled covariance", -min_eig, 0.0, m);

    if (spec.globally_frozen()) {
        // q~(s,t,x,y) = int q~(s,u,x,z) q~(u,t,z,y) dz, integrated against the Gaussian
        // product of both factors in z.
        double ck = 0.0;
        const double s = 0.0, mid = 0.4 * T, t = T;
        const int dim = spec.dim();
        const auto& rule = gauss_hermite_tensor(order, dim);
        const Matrix eye = Matrix::Identity(dim, dim);
        for (int k = 0; k < 5; ++k) {
            const Vector x = random_point(dim, rng);
            const Vector y = ev.at(s, t, x, x).mean() + random_point(dim, rng);
            const auto first = ev.at(s, mid, x, x);
            const auto second = ev.at(mid, t, Vector::Zero(dim), y);
            const Matrix r = second.resolvent();
            const Matrix prec = first.precision_apply(eye) + r.transpose() * second.precision_apply(r);
            const Vector rhs = first.precision_apply(first.mean()) +
                               r.transpose() * second.precision_apply(Vector(y - second.mean()));
            Eigen::LLT<Matrix> llt(prec);
            const Vector centre = llt.solve(rhs);
            const Matrix root = llt.matrixU().solve(eye);
            const double log_jac = root.diagonal().array().abs().log().sum();
            double acc = 0.0;
            for (long c = 0; c < rule.weights.size(); ++c) {
                const Vector z = centre + root * rule.nodes.col(c);
                acc += rule.weights(c) * std::exp(first.log_density(z) + ev.at(mid, t, z, y).log_density(y) +
                                                  log_jac - rule.log_normal(c));
            }
            const auto whole = ev.at(s, t, x, y);
            const double peak = std::exp(whole.log_density(whole.mean()));
            ck = std::max(ck, std::abs(acc - whole.density(y)) / peak);
        }
        sc.add("chapman_kolmogorov", "max composition error / peak density", ck, 1e-6, 5);
    }
}

double log_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i] / n;
        my += ys[i] / n;
    }
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    return sxy / sxx;
}

void suite_metric(SuiteContext& sc) {
    const auto spec = sc.cfg.build_spec();
    FlowSolver solver(spec, FlowOptions{.horizon = sc.cfg.horizon});
    QuasiMetricContext ctx(solver, sc.cfg.horizon, 0.5);
    std::mt19937_64 rng(sc.seed);
    const long budget = sc.cfg.budgets.samples;
    const auto qc = quasi_constants(ctx, budget, rng, {0.0, 0.5 * sc.cfg.horizon, 1.0});
    // The constants exist by the structure of the flow; the caps flag runaway values.
    sc.add("quasi_symmetry", "C_sym", qc.c_sym, 10.0, qc.pairs);
    sc.add("quasi_triangle", "C_tri", qc.c_tri, 10.0, qc.triples);

    std::vector<double> lx, ly;
    const long points = budget * 50;
    for (double r : {0.4, 0.2, 0.1}) {
        const auto v = ball_volume(ctx, {{0.25 * sc.cfg.horizon, Vector::Zero(spec.dim())}, r}, points, rng);
        lx.push_back(std::log(r));
        ly.push_back(std::log(v.value));
    }
    const double homogeneous = spec.n * spec.n * spec.d + 2.0;
    sc.add("ball_volume_slope", "|slope / (n^2 d + 2) - 1|", std::abs(log_slope(lx, ly) / homogeneous - 1.0), 0.05,
           points * 3);
}

void suite_calderon(SuiteContext& sc) {
    const auto spec = sc.cfg.build_spec();
    const bool affine = spec.affine.has_value();
    FlowSolver solver(spec, affine ? FlowOptions{.horizon = sc.cfg.horizon}
                                   : FlowOptions{.steps_per_unit = 32, .gl_order = 4, .horizon = sc.cfg.horizon});
    KernelEvaluator ev(solver);
    QuasiMetricContext ctx(solver, sc.cfg.horizon, 0.5);
    SingularKernelConfig kc;
    kc.t_hi = sc.cfg.horizon;
    kc.gh_order = std::min(sc.cfg.budgets.gh_order, 12);
    kc.gl_order = sc.cfg.budgets.gl_order;
    const long budget = sc.cfg.budgets.samples;
    std::mt19937_64 r1(sc.seed), r2(sc.seed + 1);
    const auto small = standard_estimate_checks(kc, ev, ctx, std::max(1L, budget / 10), r1, {}, false);
    const auto large = standard_estimate_checks(kc, ev, ctx, budget, r2, {}, affine);
    sc.add("size_estimate_stability", "size bound ratio (10x samples)",
           std::max(large.size_bound / small.size_bound, small.size_bound / large.size_bound), 2.0, large.samples);
    sc.add("size_estimate_adjoint_stability", "adjoint size bound ratio (10x samples)",
           std::max(large.size_bound_adjoint / small.size_bound_adjoint,
                    small.size_bound_adjoint / large.size_bound_adjoint),
           2.0, large.samples);
    // The truncations cancel exactly only when the kernel's moments do not depend on y.
    if (affine) sc.add("cancellation", "max |truncated integral of 1|", large.max_cancellation, 1e-3,
                       static_cast<long>(large.eps.size()));
}

void suite_parametrix(SuiteContext& sc) {
    const auto spec = sc.cfg.build_spec();
    const bool affine = spec.affine.has_value();
    FlowSolver solver(spec, affine ? FlowOptions{.horizon = sc.cfg.horizon}
                                   : FlowOptions{.steps_per_unit = 32, .gl_order = 4, .horizon = sc.cfg.horizon});
    KernelEvaluator ev(solver);
    GreenConfig gc;
    gc.horizon = sc.cfg.horizon;
    gc.gl_order = sc.cfg.budgets.gl_order;
    gc.gh_order = affine ? std::min(sc.cfg.budgets.gh_order, 12) : 6;
    gc.time_levels = affine ? sc.cfg.budgets.time_levels : 8;
    gc.neumann_depth = sc.cfg.budgets.neumann_depth;
    gc.check_refinement = false;
    if (!affine) gc.gl_order = std::min(gc.gl_order, 4);
    const double T = sc.cfg.horizon;
    const Vector x0 = Vector::Zero(spec.dim());

    const double g1 = green(gc, ev, constant_field(1.0), 0.25 * T, x0);
    sc.add("green_of_one", "|G~1(s, x) - (T - s)|", std::abs(g1 - 0.75 * T), 1e-6, 1);

    std::mt19937_64 rng(sc.seed);
    double pde = 0.0;
    for (int k = 0; k < 3; ++k) {
        const Vector x = random_point(spec.dim(), rng);
        const Vector y = random_point(spec.dim(), rng);
        pde = std::max(pde, backward_pde_residual(solver, 0.2 * T, 0.7 * T, x, y, 0.0, true).value);
    }
    sc.add("backward_pde_residual", "max normalized residual (analytic d/ds)", pde, 1e-6, 3);

    const int gp = std::max(2, sc.cfg.budgets.grid_points);
    StripGrid grid{0.0, 0.8 * T, gp, Vector::Constant(spec.dim(), -1.0), Vector::Constant(spec.dim(), 1.0),
                   std::vector<int>(static_cast<std::size_t>(spec.dim()), gp)};
    const SpaceTimeField f = smooth_bump(1.0, x0, Vector::Constant(spec.dim(), 0.4), 0.0, T);
    if (spec.globally_frozen()) {
        const auto r = apply_on_grid(gc, ev, GreenOperator::Remainder, f, grid);
        double worst = 0.0;
        for (double v : r.values) worst = std::max(worst, std::abs(v));
        sc.add("remainder_vanishes", "max |R f| / sup |f|", worst / f.sup_norm, 1e-8,
               static_cast<long>(r.values.size()));
    } else {
        const auto res = neumann_apply(gc, ev, f, grid, std::max(1, gc.neumann_depth));
        sc.add("neumann_contraction", "max ||R^{k+1} f|| / ||R^k f||", res.operator_norm, 1.0,
               static_cast<long>(grid.points().size()));
        double growth = 0.0;
        for (std::size_t k = 1; k < res.residuals.size(); ++k)
            growth = std::max(growth, res.residuals[k] / res.residuals[k - 1]);
        sc.add("neumann_residual_decay", "max residual ratio between depths", growth, 1.0,
               static_cast<long>(res.residuals.size()));
    }
}

void suite_montecarlo(SuiteContext& sc) {
    const auto spec = sc.cfg.build_spec();
    FlowSolver solver(spec, FlowOptions{.horizon = sc.cfg.horizon});
    const double T = sc.cfg.horizon;
    const auto& bd = sc.cfg.budgets;
    const Vector x0 = Vector::Zero(spec.dim());
    const SimulationRequest req{0.0, x0, T, bd.steps, bd.paths, sc.seed, Scheme::Euler};

    const auto e = collect(solver, req);
    std::vector<TestFunction> phis{constant_test_function(1.0),
                                   bump_test_function(x0, Vector::Constant(spec.dim(), 1.5)),
                                   bump_test_function(Vector::Constant(spec.dim(), 0.3), Vector::Constant(spec.dim(), 1.8))};
    for (std::size_t k = 1; k < phis.size(); ++k) phis[k].name += std::to_string(k);
    for (const auto& r : martingale_residual(solver, phis, e, {0.5 * T, T})) {
        std::ostringstream name;
        name << "martingale_" << r.function << "_t" << r.time;
        sc.add(name.str(), "|mean residual| vs 3 SE", std::abs(r.statistic.value), 3.0 * r.statistic.std_error,
               r.statistic.samples);
    }
    const auto occ = occupation_estimate(constant_field(1.0), e);
    sc.add("occupation_of_one", "|E int 1 dt - (T - s)|", std::abs(occ.value - T), 1e-12, occ.samples);
    const auto dev = deviation_tail(solver, e, 0.0);
    sc.add("deviation_at_zero", "|P[sup |X - theta| >= 0] - 1|", std::abs(dev.probability - 1.0), 0.0, dev.samples);
    const auto narrow = tube_excursions(solver, 0.0, x0, 0.1, 0.4, e);
    const auto wide = tube_excursions(solver, 0.0, x0, 0.1, 0.8, e);
    sc.add("tube_monotone", "count(gap 0.7) - count(gap 0.3)", wide.value - narrow.value, 0.0, wide.samples);
    const auto rep = aronson_check(density_estimate(solver, e, T), spec);
    sc.add("aronson_envelope", "1 - fraction of qualified bins inside", 1.0 - rep.fraction_inside, 0.01,
           rep.qualified_bins);
}

}  // namespace

std::vector<ReportRow> run_suite(const ExperimentConfig& cfg, const std::string& suite) {
    static const std::map<std::string, std::function<void(SuiteContext&)>> suites{
        {"flows", suite_flows},       {"kernel", suite_kernel},         {"metric", suite_metric},
        {"calderon", suite_calderon}, {"parametrix", suite_parametrix}, {"montecarlo", suite_montecarlo}};
    const auto names = suite_names();
    const auto it = suites.find(suite);
    if (it == suites.end()) throw ConfigError("unknown suite '" + suite + "'");
    // Each suite owns a seed derived from the run seed, so suites do not share random streams.
    const auto index = static_cast<std::uint64_t>(std::find(names.begin(), names.end(), suite) - names.begin());
    SuiteContext sc{cfg, suite, path_seed(cfg.seed, 1000 + index), {}};
    const auto t0 = std::chrono::steady_clock::now();
    try {
        it->second(sc);
    } catch (const std::exception& e) {
        auto row = make_row(suite, "suite_error", e.what(), std::numeric_limits<double>::quiet_NaN(), 0.0, 0, sc.seed);
        sc.rows.push_back(row);
    }
    if (cfg.timing) {
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (auto& r : sc.rows) r.wall_time = wall;
    }
    return sc.rows;
}

int run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
    std::vector<ReportRow> rows;
    for (const auto& suite : cfg.checks) {
        log << "running " << suite << " on " << cfg.model << '\n';
        auto part = run_suite(cfg, suite);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    std::filesystem::create_directories(cfg.output);
    const auto dir = std::filesystem::path(cfg.output);
    {
        std::ofstream csv(dir / "report.csv");
        if (!csv) throw ConfigError("cannot write report into '" + cfg.output + "'");
        write_report_csv(csv, rows);
    }
    {
        std::ofstream summary(dir / "summary.txt");
        write_summary(summary, rows);
    }
    write_summary(log, rows);
    return std::all_of(rows.begin(), rows.end(), [](const ReportRow& r) { return r.pass; }) ? 0 : 1;
}

int cli_main(int argc, char** argv) {
    CLI::App app{"Checks for degenerate Kolmogorov chain diffusions"};
    app.require_subcommand(1);
    auto* run = app.add_subcommand("run", "Run the suites of an experiment config");
    std::string config_path;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> suites;
    bool timing = false;
    run->add_option("config", config_path, "JSON experiment config")->required();
    run->add_option("--out", out, "Output directory (overrides the config)");
    run->add_option("--seed", seed, "Run seed (overrides the config)");
    run->add_option("--suite", suites, "Suite to run; repeatable (overrides the config checks)");
    run->add_flag("--timing", timing, "Record wall times in the report");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        auto cfg = load_config(config_path);
        if (out) cfg.output = *out;
        if (seed) cfg.seed = *seed;
        if (timing) cfg.timing = true;
        if (!suites.empty()) {
            const auto names = suite_names();
            for (const auto& s : suites)
                if (std::find(names.begin(), names.end(), s) == names.end())
                    throw ConfigError("unknown suite '" + s + "'");
            cfg.checks = suites;
        }
        return run_experiment(cfg, std::cout);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace kolmo
