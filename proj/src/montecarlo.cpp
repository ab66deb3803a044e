#include "kolmo/montecarlo.hpp"

#include "kolmo/quadrature.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <thread>

namespace kolmo {

std::uint64_t path_seed(std::uint64_t seed, std::uint64_t path) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(seed) ^ (path * 0xd1b54a32d192ed03ULL + 1));
}

namespace {

void check_request(const FlowSolver& solver, const SimulationRequest& req) {
    if (req.steps < 1) throw DomainError("step count must be at least 1");
    if (req.paths < 1) throw DomainError("path count must be at least 1");
    if (!(req.horizon > req.s)) throw DomainError("horizon must exceed the start time");
    if (req.x.size() != solver.spec().dim()) throw ShapeError("start point has wrong dimension");
}

Matrix symmetric_sqrt(const Matrix& a) {
    if (a.rows() == 1) return Matrix::Constant(1, 1, std::sqrt(std::max(a(0, 0), 0.0)));
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
           es.eigenvectors().transpose();
}

/// One simulator per worker: owns the scratch buffers and the per-path generator.
class PathSimulator {
public:
    PathSimulator(const FlowSolver& solver, const SimulationRequest& req)
        : solver_(solver), spec_(solver.spec()), req_(req), h_((req.horizon - req.s) / req.steps),
          traj_(spec_.dim(), req.steps + 1), z_(spec_.d), zfull_(spec_.dim()) {
        if (spec_.diffusion_equals_frozen && spec_.constant_frozen_coeff)
            fixed_root_ = symmetric_sqrt(eval_diffusion(spec_, req.s, req.x));
        if (req.scheme == Scheme::PiecewiseFrozen && spec_.globally_frozen())
            evaluator_.emplace(solver_);
    }

    const Matrix& run(long path) {
        std::mt19937_64 rng(path_seed(req_.seed, static_cast<std::uint64_t>(path)));
        traj_.col(0) = req_.x;
        for (int k = 0; k < req_.steps; ++k) {
            const double t = req_.s + k * h_;
            if (req_.scheme == Scheme::Euler)
                euler_step(t, k, rng);
            else
                frozen_step(t, k, rng);
            if (!all_finite(traj_.col(k + 1)))
                throw DivergenceError("non-finite state at step " + std::to_string(k + 1) + " of path " +
                                      std::to_string(path));
        }
        return traj_;
    }

private:
    void euler_step(double t, int k, std::mt19937_64& rng) {
        const Vector x = traj_.col(k);
        auto next = traj_.col(k + 1);
        next = x + h_ * spec_.drift(t, x);
        for (int j = 0; j < spec_.d; ++j) z_(j) = normal_(rng);
        const double sq = std::sqrt(h_);
        if (fixed_root_)
            next.head(spec_.d) += sq * (*fixed_root_ * z_);
        else
            next.head(spec_.d) += sq * (symmetric_sqrt(spec_.diffusion(t, x)) * z_);
    }

    void frozen_step(double t, int k, std::mt19937_64& rng) {
        const Vector x = traj_.col(k);
        const double t1 = (k + 1 == req_.steps) ? req_.horizon : t + h_;
        for (int j = 0; j < zfull_.size(); ++j) zfull_(j) = normal_(rng);
        if (evaluator_) {
            const FrozenGaussian g(evaluator_->factor(t, t1, x), SpaceTimePoint{t1, x}, x);
            traj_.col(k + 1) = g.sample(zfull_);
            return;
        }
        // Freeze at the trajectory through (t, x): its end point carries the linearization.
        const Vector y = solver_.flow(t1, t, x);
        const Matrix sigma = eval_diffusion(spec_, t, x);
        auto f = factor_moments(solver_.frozen_moments(t, t1, y, &sigma), spec_.n, spec_.d);
        const FrozenGaussian g(std::move(f), SpaceTimePoint{t1, y}, x);
        traj_.col(k + 1) = g.sample(zfull_);
    }

    const FlowSolver& solver_;
    const ChainSpec& spec_;
    const SimulationRequest& req_;
    double h_;
    Matrix traj_;
    Vector z_;
    Vector zfull_;
    std::optional<Matrix> fixed_root_;
    std::optional<KernelEvaluator> evaluator_;
    std::normal_distribution<double> normal_;
};

/// Runs fn(path, trajectory) for every path, concurrently; results are indexed by path.
template <typename Result, typename Fn>
std::vector<Result> map_paths(const FlowSolver& solver, const SimulationRequest& req, Fn fn) {
    check_request(solver, req);
    std::vector<Result> out(static_cast<std::size_t>(req.paths));
    const long workers = std::clamp<long>(std::thread::hardware_concurrency(), 1, std::max(1L, req.paths / 64));
    std::atomic<long> next{0};
    std::mutex err_mutex;
    long err_path = -1;
    std::exception_ptr err;
    auto work = [&] {
        PathSimulator sim(solver, req);
        for (long p; (p = next.fetch_add(1)) < req.paths;) {
            try {
                out[static_cast<std::size_t>(p)] = fn(p, sim.run(p));
            } catch (...) {
                std::lock_guard lock(err_mutex);
                if (err_path < 0 || p < err_path) {
                    err_path = p;
                    err = std::current_exception();
                }
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (long w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (err) std::rethrow_exception(err);
    return out;
}

McEstimate summarize(const std::vector<double>& v) {
    McEstimate e;
    e.samples = static_cast<long>(v.size());
    if (v.empty()) return e;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double var = v.size() > 1 ? ss / static_cast<double>(v.size() - 1) : 0.0;
    e.value = mean;
    e.std_error = std::sqrt(var / static_cast<double>(v.size()));
    e.ci_low = mean - 1.96 * e.std_error;
    e.ci_high = mean + 1.96 * e.std_error;
    return e;
}

/// Wilson score interval for a binomial proportion at 95%.
std::pair<double, double> wilson(long hits, long n) {
    if (n == 0) return {0.0, 1.0};
    const double z = 1.96;
    const double p = static_cast<double>(hits) / static_cast<double>(n);
    const double nn = static_cast<double>(n);
    const double den = 1.0 + z * z / nn;
    const double mid = (p + z * z / (2 * nn)) / den;
    const double half = z * std::sqrt(p * (1 - p) / nn + z * z / (4 * nn * nn)) / den;
    return {std::max(0.0, mid - half), std::min(1.0, mid + half)};
}

/// theta_{t_k, s}(x) on the path grid, stepping the flow interval by interval.
std::vector<Vector> flow_on_grid(const FlowSolver& solver, double s0, const Vector& x0, double s, double h,
                                 int steps) {
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(steps) + 1);
    Vector cur = solver.flow(s, s0, x0);
    out.push_back(cur);
    for (int k = 0; k < steps; ++k) {
        cur = solver.flow(s + (k + 1) * h, s + k * h, cur);
        out.push_back(cur);
    }
    return out;
}

struct PhiScratch {
    double value = 0.0;
    double dt = 0.0;
    Vector grad;
    Matrix hess;
};

/// phi and (d_t + L) phi at every grid point of a trajectory, for several phi at once.
void evaluate_along(const ChainSpec& spec, const std::vector<TestFunction>& phis, const Matrix& traj, double s,
                    double h, std::vector<std::vector<double>>& values, std::vector<std::vector<double>>& gen) {
    const int cols = static_cast<int>(traj.cols());
    PhiScratch sc;
    sc.grad.resize(spec.dim());
    sc.hess.resize(spec.d, spec.d);
    const bool const_a = spec.diffusion_equals_frozen && spec.constant_frozen_coeff;
    Matrix a = const_a ? eval_diffusion(spec, s, traj.col(0)) : Matrix();
    for (int k = 0; k < cols; ++k) {
        const double t = s + k * h;
        const Vector x = traj.col(k);
        const Vector F = spec.drift(t, x);
        if (!const_a) a = spec.diffusion(t, x);
        for (std::size_t i = 0; i < phis.size(); ++i) {
            phis[i].eval(t, x, sc.value, sc.dt, sc.grad, sc.hess);
            values[i][static_cast<std::size_t>(k)] = sc.value;
            gen[i][static_cast<std::size_t>(k)] = sc.dt + F.dot(sc.grad) + 0.5 * (a.cwiseProduct(sc.hess)).sum();
        }
    }
}

std::vector<int> checkpoint_indices(double s, double horizon, int steps, const std::vector<double>& times) {
    PathEnsemble probe;
    probe.request.s = s;
    probe.request.horizon = horizon;
    probe.request.steps = steps;
    std::vector<int> idx;
    for (double t : times) idx.push_back(probe.index_of(t));
    return idx;
}

/// Martingale statistics of one path: entry i * times + j for function i at checkpoint j.
std::vector<double> path_martingale(const ChainSpec& spec, const std::vector<TestFunction>& phis,
                                    const Matrix& traj, double s, double h, const std::vector<int>& idx) {
    const auto cols = static_cast<std::size_t>(traj.cols());
    std::vector<std::vector<double>> values(phis.size(), std::vector<double>(cols));
    std::vector<std::vector<double>> gen(phis.size(), std::vector<double>(cols));
    evaluate_along(spec, phis, traj, s, h, values, gen);
    std::vector<double> out;
    out.reserve(phis.size() * idx.size());
    for (std::size_t i = 0; i < phis.size(); ++i) {
        std::vector<double> cum(cols, 0.0);
        for (std::size_t k = 1; k < cols; ++k) cum[k] = cum[k - 1] + 0.5 * h * (gen[i][k - 1] + gen[i][k]);
        for (int j : idx) {
            const auto jj = static_cast<std::size_t>(j);
            out.push_back(values[i][jj] - values[i][0] - cum[jj]);
        }
    }
    return out;
}

std::vector<MartingaleCheck> assemble_martingale(const std::vector<TestFunction>& phis,
                                                 const std::vector<double>& times,
                                                 const std::vector<std::vector<double>>& per_path) {
    std::vector<MartingaleCheck> out;
    std::vector<double> col(per_path.size());
    for (std::size_t i = 0; i < phis.size(); ++i) {
        for (std::size_t j = 0; j < times.size(); ++j) {
            for (std::size_t p = 0; p < per_path.size(); ++p) col[p] = per_path[p][i * times.size() + j];
            out.push_back({phis[i].name, times[j], summarize(col)});
        }
    }
    return out;
}

double path_occupation(const SpaceTimeField& f, const Matrix& traj, double s, double h) {
    const int cols = static_cast<int>(traj.cols());
    double acc = 0.0;
    for (int k = 0; k < cols; ++k) {
        const double w = (k == 0 || k == cols - 1) ? 0.5 : 1.0;
        acc += w * f(s + k * h, traj.col(k));
    }
    return acc * h;
}

}  // namespace

int PathEnsemble::index_of(double t) const {
    const double h = step();
    const double k = std::round((t - request.s) / h);
    if (k < 0 || k > request.steps || std::abs(request.s + k * h - t) > 1e-9 * std::max(1.0, std::abs(t)))
        throw DomainError("time " + std::to_string(t) + " is not on the path grid");
    return static_cast<int>(k);
}

void simulate(const FlowSolver& solver, const SimulationRequest& req, const PathVisitor& visit) {
    check_request(solver, req);
    PathSimulator sim(solver, req);
    for (long p = 0; p < req.paths; ++p) visit(p, sim.run(p));
}

PathEnsemble collect(const FlowSolver& solver, const SimulationRequest& req) {
    PathEnsemble ens;
    ens.model = solver.spec().name;
    ens.request = req;
    ens.paths = map_paths<Matrix>(solver, req, [](long, const Matrix& traj) { return traj; });
    return ens;
}

PathEnsemble euler_simulate(const FlowSolver& solver, double s, const Vector& x, double T, int N, long n_paths,
                            std::uint64_t seed) {
    return collect(solver, SimulationRequest{s, x, T, N, n_paths, seed, Scheme::Euler});
}

PathEnsemble piecewise_frozen_simulate(const FlowSolver& solver, double s, const Vector& x, double T, int N,
                                       long n_paths, std::uint64_t seed) {
    return collect(solver, SimulationRequest{s, x, T, N, n_paths, seed, Scheme::PiecewiseFrozen});
}

TestFunction constant_test_function(double c) {
    return {"constant", [c](double, const Vector&, double& v, double& dt, Vector& g, Matrix& hs) {
                v = c;
                dt = 0.0;
                g.setZero();
                hs.setZero();
            }};
}

TestFunction bump_test_function(const Vector& center, const Vector& widths) {
    if (center.size() != widths.size()) throw ShapeError("bump centre and widths differ in size");
    if ((widths.array() <= 0.0).any()) throw DomainError("bump widths must be positive");
    return {"bump", [center, widths](double, const Vector& x, double& v, double& dt, Vector& g, Matrix& hs) {
                dt = 0.0;
                const Vector u = (x - center).cwiseQuotient(widths);
                const double r2 = u.squaredNorm();
                if (r2 >= 1.0) {
                    v = 0.0;
                    g.setZero();
                    hs.setZero();
                    return;
                }
                // phi = exp(-1/(1 - r2)); d phi / d r2 = -phi / (1 - r2)^2.
                const double m = 1.0 - r2;
                v = std::exp(-1.0 / m);
                const double p1 = -v / (m * m);
                const double p2 = v / (m * m * m * m) - 2.0 * v / (m * m * m);
                const Vector dr = 2.0 * u.cwiseQuotient(widths);  // d r2 / dx
                g = p1 * dr;
                const int d = static_cast<int>(hs.rows());
                const Vector dr1 = dr.head(d);
                hs = p2 * dr1 * dr1.transpose();
                hs.diagonal() += p1 * 2.0 * widths.head(d).cwiseProduct(widths.head(d)).cwiseInverse();
            }};
}

TestFunction heat_quadratic_test_function(double s0) {
    return {"heat_quadratic", [s0](double t, const Vector& x, double& v, double& dt, Vector& g, Matrix& hs) {
                v = x(0) * x(0) - (t - s0);
                dt = -1.0;
                g.setZero();
                g(0) = 2.0 * x(0);
                hs.setZero();
                hs(0, 0) = 2.0;
            }};
}

double generator_of(const ChainSpec& spec, const TestFunction& phi, double t, const Vector& x) {
    PhiScratch sc;
    sc.grad.resize(spec.dim());
    sc.hess.resize(spec.d, spec.d);
    phi.eval(t, x, sc.value, sc.dt, sc.grad, sc.hess);
    const Matrix a = eval_diffusion(spec, t, x);
    return sc.dt + eval_drift(spec, t, x).dot(sc.grad) + 0.5 * (a.cwiseProduct(sc.hess)).sum();
}

std::vector<MartingaleCheck> martingale_residual(const FlowSolver& solver, const std::vector<TestFunction>& phis,
                                                 const PathEnsemble& ensemble, const std::vector<double>& times) {
    const auto& req = ensemble.request;
    const auto idx = checkpoint_indices(req.s, req.horizon, req.steps, times);
    std::vector<std::vector<double>> per_path;
    per_path.reserve(ensemble.paths.size());
    for (const auto& traj : ensemble.paths)
        per_path.push_back(path_martingale(solver.spec(), phis, traj, req.s, ensemble.step(), idx));
    return assemble_martingale(phis, times, per_path);
}

std::vector<MartingaleCheck> martingale_residual(const FlowSolver& solver, const std::vector<TestFunction>& phis,
                                                 const SimulationRequest& req, const std::vector<double>& times) {
    check_request(solver, req);
    const auto idx = checkpoint_indices(req.s, req.horizon, req.steps, times);
    const double h = (req.horizon - req.s) / req.steps;
    auto per_path = map_paths<std::vector<double>>(solver, req, [&](long, const Matrix& traj) {
        return path_martingale(solver.spec(), phis, traj, req.s, h, idx);
    });
    return assemble_martingale(phis, times, per_path);
}

McEstimate occupation_estimate(const SpaceTimeField& f, const PathEnsemble& ensemble) {
    std::vector<double> v;
    v.reserve(ensemble.paths.size());
    for (const auto& traj : ensemble.paths) v.push_back(path_occupation(f, traj, ensemble.request.s, ensemble.step()));
    return summarize(v);
}

McEstimate occupation_estimate(const FlowSolver& solver, const SpaceTimeField& f, const SimulationRequest& req) {
    const double h = (req.horizon - req.s) / req.steps;
    auto v = map_paths<double>(solver, req,
                               [&](long, const Matrix& traj) { return path_occupation(f, traj, req.s, h); });
    return summarize(v);
}

KrylovFit krylov_fit(const std::vector<double>& radii, const std::vector<McEstimate>& estimates, double f_norm) {
    if (radii.size() != estimates.size()) throw ShapeError("one estimate per radius expected");
    if (radii.size() < 2) throw InsufficientDataError("at least two start points are needed");
    if (!(f_norm > 0.0)) throw DomainError("norm of f must be positive");
    KrylovFit fit;
    fit.radii = radii;
    for (const auto& e : estimates) fit.scaled.push_back(std::max(e.ci_high, 0.0) / f_norm);
    const auto m = static_cast<double>(radii.size());
    const double rx = std::accumulate(radii.begin(), radii.end(), 0.0) / m;
    const double vy = std::accumulate(fit.scaled.begin(), fit.scaled.end(), 0.0) / m;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < radii.size(); ++i) {
        sxx += (radii[i] - rx) * (radii[i] - rx);
        sxy += (radii[i] - rx) * (fit.scaled[i] - vy);
        syy += (fit.scaled[i] - vy) * (fit.scaled[i] - vy);
    }
    fit.slope = sxx > 0 ? sxy / sxx : 0.0;
    fit.intercept = vy - fit.slope * rx;
    fit.r_squared = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    // Lift the line until it majorizes every point.
    double lift = 0.0;
    for (std::size_t i = 0; i < radii.size(); ++i)
        lift = std::max(lift, fit.scaled[i] - (fit.intercept + fit.slope * radii[i]));
    fit.intercept += lift;
    auto margin = [&] {
        double mm = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < radii.size(); ++i)
            mm = std::min(mm, fit.intercept + fit.slope * radii[i] - fit.scaled[i]);
        return mm;
    };
    // The lift is exact up to rounding; absorb the rounding in the intercept.
    fit.min_margin = margin();
    if (fit.min_margin < 0.0) {
        fit.intercept += -2.0 * fit.min_margin;
        fit.min_margin = margin();
    }
    for (std::size_t i = 0; i < radii.size(); ++i) fit.constant = std::max(fit.constant, fit.scaled[i] / (1.0 + radii[i]));
    {
        // Floor the values so that vanishing estimates do not dominate the slope.
        const double floor = 1e-6 * std::max(1e-300, *std::max_element(fit.scaled.begin(), fit.scaled.end()));
        double lx = 0.0, ly = 0.0;
        for (std::size_t i = 0; i < radii.size(); ++i) {
            lx += std::log1p(radii[i]);
            ly += std::log(std::max(fit.scaled[i], floor));
        }
        lx /= m;
        ly /= m;
        double gxx = 0.0, gxy = 0.0;
        for (std::size_t i = 0; i < radii.size(); ++i) {
            const double dx = std::log1p(radii[i]) - lx;
            gxx += dx * dx;
            gxy += dx * (std::log(std::max(fit.scaled[i], floor)) - ly);
        }
        fit.growth_exponent = gxx > 0 ? gxy / gxx : 0.0;
    }
    return fit;
}

DeviationTail deviation_tail(const FlowSolver& solver, const PathEnsemble& ensemble, double delta) {
    if (delta < 0.0) throw DomainError("delta must be nonnegative");
    const auto& req = ensemble.request;
    const auto centre = flow_on_grid(solver, req.s, req.x, req.s, ensemble.step(), req.steps);
    DeviationTail out;
    out.delta = delta;
    out.samples = ensemble.size();
    for (const auto& traj : ensemble.paths) {
        bool hit = delta == 0.0;
        for (int k = 0; k < traj.cols() && !hit; ++k)
            hit = (traj.col(k) - centre[static_cast<std::size_t>(k)]).norm() >= delta;
        out.hits += hit ? 1 : 0;
    }
    out.probability = out.samples ? static_cast<double>(out.hits) / static_cast<double>(out.samples) : 0.0;
    std::tie(out.ci_low, out.ci_high) = wilson(out.hits, out.samples);
    return out;
}

BernsteinFit fit_bernstein(const std::vector<DeviationTail>& tails, double horizon, double ellipticity) {
    if (!(horizon > 0.0) || !(ellipticity > 0.0)) throw DomainError("horizon and ellipticity must be positive");
    BernsteinFit fit;
    std::vector<double> xs, ys;
    for (const auto& tl : tails) {
        if (tl.probability <= 0.0) continue;
        const double e = tl.delta * tl.delta / (horizon * ellipticity);
        // log C - e / C is increasing in C: bisect on log C.
        auto ok = [&](double c) { return std::log(c) - e / c >= std::log(tl.probability); };
        double lo = 1.0, hi = 1.0;
        while (!ok(hi)) hi *= 2.0;
        if (hi > 1.0) {
            lo = hi / 2.0;
            for (int it = 0; it < 100; ++it) {
                const double mid = 0.5 * (lo + hi);
                (ok(mid) ? hi : lo) = mid;
            }
        }
        fit.constant = std::max(fit.constant, hi);
        if (tl.probability < 1.0) {
            xs.push_back(tl.delta * tl.delta);
            ys.push_back(std::log(tl.probability));
        }
    }
    fit.points = static_cast<int>(xs.size());
    if (xs.size() >= 2) {
        const auto m = static_cast<double>(xs.size());
        const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / m;
        const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / m;
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sxx += (xs[i] - mx) * (xs[i] - mx);
            sxy += (xs[i] - mx) * (ys[i] - my);
        }
        fit.slope = sxy / sxx;
        fit.intercept = my - fit.slope * mx;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double pred = fit.intercept + fit.slope * xs[i];
            if (pred != 0.0)
                fit.max_relative_deviation = std::max(fit.max_relative_deviation, std::abs(ys[i] - pred) / std::abs(pred));
        }
    }
    return fit;
}

McEstimate tube_excursions(const FlowSolver& solver, double s0, const Vector& x0, double r1, double r2,
                           const PathEnsemble& ensemble) {
    if (!(r1 > 0.0) || !(r2 > r1)) throw DomainError("tube radii need 0 < R1 < R2");
    const auto& req = ensemble.request;
    if (req.s < s0) throw DomainError("ensemble starts before the tube reference time");
    const auto centre = flow_on_grid(solver, s0, x0, req.s, ensemble.step(), req.steps);
    std::vector<double> counts;
    counts.reserve(ensemble.paths.size());
    for (const auto& traj : ensemble.paths) {
        long count = 0;
        bool outward = true;  // looking for the next tau_{2k}
        for (int k = 0; k < traj.cols(); ++k) {
            const double dist = (traj.col(k) - centre[static_cast<std::size_t>(k)]).norm();
            if (outward && dist >= r2) {
                ++count;
                outward = false;
            } else if (!outward && dist <= r1) {
                outward = true;
            }
        }
        counts.push_back(static_cast<double>(count));
    }
    return summarize(counts);
}

Vector DensityHistogram::bin_center(const std::vector<long>& key) const {
    Vector c(center.size());
    for (Eigen::Index i = 0; i < c.size(); ++i)
        c(i) = center(i) + (static_cast<double>(key[static_cast<std::size_t>(i)]) + 0.5) * widths(i);
    return c;
}

double DensityHistogram::density(const std::vector<long>& key) const {
    auto it = counts.find(key);
    if (it == counts.end() || total == 0) return 0.0;
    return static_cast<double>(it->second) / (static_cast<double>(total) * bin_volume());
}

DensityHistogram density_estimate(const FlowSolver& solver, const PathEnsemble& ensemble, double t,
                                  const Binning& binning) {
    if (ensemble.paths.empty()) throw InsufficientDataError("empty ensemble");
    if (!(binning.scale > 0.0)) throw DomainError("bin scale must be positive");
    const int k = ensemble.index_of(t);
    const auto& spec = solver.spec();
    const auto& req = ensemble.request;
    DensityHistogram hist;
    hist.time = ensemble.time(k);
    hist.elapsed = hist.time - req.s;
    if (!(hist.elapsed > 0.0)) throw DomainError("density slice must lie after the start time");
    hist.center = solver.flow(hist.time, req.s, req.x);
    hist.widths.resize(spec.dim());
    for (int i = 0; i < spec.n; ++i)
        hist.widths.segment(i * spec.d, spec.d).setConstant(binning.scale * std::pow(hist.elapsed, (2.0 * i + 1) / 2.0));
    std::vector<long> key(static_cast<std::size_t>(spec.dim()));
    for (const auto& traj : ensemble.paths) {
        for (int i = 0; i < spec.dim(); ++i)
            key[static_cast<std::size_t>(i)] =
                static_cast<long>(std::floor((traj(i, k) - hist.center(i)) / hist.widths(i)));
        ++hist.counts[key];
        ++hist.total;
    }
    return hist;
}

double l1_distance(const DensityHistogram& hist, const std::function<double(const Vector&)>& density, int gl_order) {
    if (hist.total == 0) throw InsufficientDataError("empty histogram");
    const auto& gl = gauss_legendre(gl_order);
    const int dim = static_cast<int>(hist.center.size());
    long nodes = 1;
    for (int i = 0; i < dim; ++i) nodes *= gl.size();
    double l1 = 0.0;
    double covered = 0.0;
    Vector y(dim);
    for (const auto& [key, count] : hist.counts) {
        const Vector c = hist.bin_center(key);
        double mass = 0.0;
        for (long m = 0; m < nodes; ++m) {
            long rest = m;
            double w = 1.0;
            for (int i = 0; i < dim; ++i) {
                const auto j = static_cast<std::size_t>(rest % gl.size());
                rest /= gl.size();
                y(i) = c(i) + 0.5 * hist.widths(i) * gl.nodes[j];
                w *= 0.5 * gl.weights[j];
            }
            mass += w * density(y);
        }
        mass *= hist.bin_volume();
        covered += mass;
        l1 += std::abs(static_cast<double>(count) / static_cast<double>(hist.total) - mass);
    }
    return l1 + std::max(0.0, 1.0 - covered);
}

AronsonReport aronson_check(const DensityHistogram& hist, const ChainSpec& spec, long min_count, double quantile) {
    std::vector<EnvelopeSample> samples;
    const ScaleMatrix sc = scale_matrix(hist.elapsed, spec.n, spec.d);
    for (const auto& [key, count] : hist.counts) {
        if (count < min_count) continue;
        const Vector y = hist.bin_center(key);
        EnvelopeSample sm;
        sm.log_q = std::log(hist.density(key));
        sm.energy = hist.elapsed * sc.apply_inverse(hist.center - y).squaredNorm();
        sm.log_delta = std::log(hist.elapsed);
        samples.push_back(sm);
    }
    if (samples.empty())
        throw InsufficientDataError("no bin holds " + std::to_string(min_count) + " samples");
    const EnvelopeFit fit = fit_envelope(samples, spec.n, spec.d, quantile);
    AronsonReport rep;
    rep.c_lower = fit.c_lower;
    rep.c_upper = fit.c_upper;
    rep.qualified_bins = static_cast<int>(samples.size());
    int inside = 0;
    for (const auto& sm : samples)
        if (envelope_lower_constant(sm, spec.n, spec.d) <= fit.c_lower &&
            envelope_upper_constant(sm, spec.n, spec.d) <= fit.c_upper)
            ++inside;
    rep.fraction_inside = static_cast<double>(inside) / static_cast<double>(samples.size());
    return rep;
}

void write_ensemble_csv(std::ostream& os, const PathEnsemble& ensemble) {
    const int dim = ensemble.paths.empty() ? static_cast<int>(ensemble.request.x.size())
                                           : static_cast<int>(ensemble.paths.front().rows());
    os << "path,step,time";
    for (int i = 0; i < dim; ++i) os << ",x" << i + 1;
    os << ",seed\n";
    const auto prec = os.precision(17);
    for (std::size_t p = 0; p < ensemble.paths.size(); ++p) {
        const auto& traj = ensemble.paths[p];
        for (int k = 0; k < traj.cols(); ++k) {
            os << p << ',' << k << ',' << ensemble.time(k);
            for (int i = 0; i < dim; ++i) os << ',' << traj(i, k);
            os << ',' << ensemble.request.seed << '\n';
        }
    }
    os.precision(prec);
}

void write_histogram_csv(std::ostream& os, const DensityHistogram& hist) {
    const int dim = static_cast<int>(hist.center.size());
    os << "time";
    for (int i = 0; i < dim; ++i) os << ",y" << i + 1;
    for (int i = 0; i < dim; ++i) os << ",width" << i + 1;
    os << ",count,density\n";
    const auto prec = os.precision(17);
    for (const auto& [key, count] : hist.counts) {
        const Vector c = hist.bin_center(key);
        os << hist.time;
        for (int i = 0; i < dim; ++i) os << ',' << c(i);
        for (int i = 0; i < dim; ++i) os << ',' << hist.widths(i);
        os << ',' << count << ',' << hist.density(key) << '\n';
    }
    os.precision(prec);
}

}  // namespace kolmo
