#include "roughdev/devlab/devlab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <thread>
#include <exception>
#include <stdexcept>
#include <utility>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "roughdev/roughpath/rough_path.hpp"

namespace roughdev::devlab {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

/// (x, z) -> (f(x), grad f(x) z) and (x, z) -> [0; sigma(x)] on R^{2m}.
std::pair<SmoothFunction4, SmoothFunction4> linearized(const SmoothFunction4& f, const SmoothFunction4& sigma,
                                                       std::size_t m, std::size_t cols) {
    controlled::DerivativeFn drift = [f, m](std::span<const double> s, std::span<double> out) {
        const auto x = s.subspan(0, m), z = s.subspan(m, m);
        std::vector<double> fv(m), g(m * m);
        f.eval(x, fv);
        f.grad(x, g);
        for (std::size_t i = 0; i < m; ++i) {
            out[i] = fv[i];
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * z[j];
            out[m + i] = acc;
        }
    };
    controlled::DerivativeFn diff = [sigma, m, cols](std::span<const double> s, std::span<double> out) {
        std::vector<double> sv(m * cols);
        sigma.eval(s.subspan(0, m), sv);
        std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(m * cols), 0.0);
        std::copy(sv.begin(), sv.end(), out.begin() + static_cast<std::ptrdiff_t>(m * cols));
    };
    return {controlled::finite_difference_adapter(std::move(drift), 2 * m, 2 * m, f.bound),
            controlled::finite_difference_adapter(std::move(diff), 2 * m, 2 * m * cols, sigma.bound)};
}

/// Components [from, from + count) of a path.
PiecewiseLinearPath components(const PiecewiseLinearPath& p, std::size_t from, std::size_t count) {
    std::vector<double> v;
    v.reserve(p.points() * count);
    for (std::size_t k = 0; k < p.points(); ++k) {
        const auto row = p.value(k);
        v.insert(v.end(), row.begin() + static_cast<std::ptrdiff_t>(from),
                 row.begin() + static_cast<std::ptrdiff_t>(from + count));
    }
    return PiecewiseLinearPath(p.times(), std::move(v), count);
}

std::vector<double> coefficients(const CameronMartinControl& c) {
    std::vector<double> v(c.hu);
    v.insert(v.end(), c.vp.begin(), c.vp.end());
    return v;
}

void set_coefficients(CameronMartinControl& c, const std::vector<double>& v) {
    std::copy(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(c.hu.size()), c.hu.begin());
    std::copy(v.begin() + static_cast<std::ptrdiff_t>(c.hu.size()), v.end(), c.vp.begin());
}

std::vector<double> metric_weights(const CameronMartinControl& c) {
    std::vector<double> w;
    for (std::size_t j = 0; j < c.cell_count(); ++j)
        for (std::size_t i = 0; i < c.fbm_dim; ++i) w.push_back(c.cells[j + 1] - c.cells[j]);
    for (std::size_t j = 0; j < c.cell_count(); ++j)
        for (std::size_t i = 0; i < c.bm_dim; ++i) w.push_back(c.cells[j + 1] - c.cells[j]);
    return w;
}

slowfast::SlowFastSpec slow_fast_at(const DeviationSpec& spec, double eps) {
    auto s = *spec.slow_fast;
    s.eps = eps;
    s.delta = std::pow(eps, spec.delta_power);
    return s;
}

class SingleScaleSampler {
public:
    explicit SingleScaleSampler(const DeviationSpec& spec) : spec_(spec), fbm_(fbm_spec(spec)) {}

    PiecewiseLinearPath run(double eps, std::uint64_t index) const {
        const auto& s = spec_.single;
        auto rng = gaussian::make_stream(spec_.seed, index);
        const auto b = fbm_.sample(rng);
        const auto ex = slowfast::exponents_for_hurst(s.hurst);
        roughpath::RoughPath lift;
        if (s.e == 0) {
            lift = gaussian::lift_fbm(b, ex);
        } else {
            const auto w = gaussian::sample_bm(s.e, spec_.steps, spec_.horizon, rng);
            lift = gaussian::lift_mixed(b, w, ex).rough;
        }
        return solve(roughpath::dilate(lift, std::sqrt(eps)));
    }

    PiecewiseLinearPath solve(roughpath::RoughPath driver) const {
        const auto& s = spec_.single;
        rde::RdeProblem p;
        p.drift = s.drift;
        p.sigma = s.sigma;
        p.drift_lipschitz = s.drift_lipschitz;
        p.driver = std::make_shared<const roughpath::RoughPath>(std::move(driver));
        p.initial = s.x0;
        const auto sol = rde::solve_rde(p, spec_.solver);
        if (sol.partial) throw BudgetExhausted("RDE solver exhausted its iteration budget");
        std::vector<double> v;
        v.reserve(sol.points() * s.m);
        for (std::size_t k = 0; k < sol.points(); ++k) {
            const auto y = sol.state(k);
            v.insert(v.end(), y.begin(), y.end());
        }
        return PiecewiseLinearPath(sol.grid(), std::move(v), s.m);
    }

private:
    static gaussian::FbmSpec fbm_spec(const DeviationSpec& spec) {
        gaussian::FbmSpec f;
        f.hurst = spec.single.hurst;
        f.dim = spec.single.d;
        f.steps = spec.steps;
        f.horizon = spec.horizon;
        f.test_mode = spec.single.test_mode;
        return f;
    }
    const DeviationSpec& spec_;
    gaussian::FbmSampler fbm_;
};

PiecewiseLinearPath slow_fast_run(const DeviationSpec& spec, double eps, std::uint64_t index) {
    const auto s = slow_fast_at(spec, eps);
    const auto grid = slowfast::SlowFastGrid::make(s, spec.horizon, spec.steps);
    auto rng = gaussian::make_stream(spec.seed, index);
    const auto noise = slowfast::sample_noise(s, grid, rng);
    slowfast::SimulationOptions opts;
    opts.solver = spec.solver;
    return slowfast::simulate_slow_fast(s, grid, noise, opts).slow_path();
}

}  // namespace

double h_of(HMode mode, double eps, double theta) {
    require(eps > 0.0 && eps <= 1.0, "eps must lie in (0, 1]");
    switch (mode) {
        case HMode::Clt: return 1.0;
        case HMode::Ldp: return 1.0 / std::sqrt(eps);
        case HMode::Mdp: return std::pow(eps, -theta / 2.0);
    }
    return 1.0;
}

double speed_of(HMode mode, double eps, double theta) {
    if (mode == HMode::Ldp) return eps;
    const double h = h_of(mode, eps, theta);
    return 1.0 / (h * h);
}

void SingleScaleSpec::validate() const {
    require(m >= 1 && d >= 1, "single-scale dimensions must be positive");
    drift.check_ready();
    sigma.check_ready();
    require(drift.in_dim == m && drift.out_dim == m, "drift must map R^m to R^m");
    require(sigma.in_dim == m && sigma.out_dim == m * (d + e), "sigma must map R^m to R^{m x (d+e)}");
    require(x0.size() == m, "initial state has the wrong size");
    if (test_mode)
        require(hurst > 0.25 && hurst < 1.0, "Hurst index must lie in (1/4, 1)");
    else
        require(hurst > 0.25 && hurst < 1.0 / 3.0, "Hurst index must lie in (1/4, 1/3)");
}

double Event::functional(const PiecewiseLinearPath& path) const {
    require(component < path.dim(), "event component out of range");
    if (kind == EventKind::Terminal) return path.value(path.points() - 1)[component];
    double s = 0.0;
    for (std::size_t k = 0; k < path.points(); ++k) s = std::max(s, std::abs(path.value(k)[component]));
    return s;
}

double Event::violation(const PiecewiseLinearPath& path) const { return std::max(0.0, threshold - functional(path)); }

void DeviationSpec::validate() const {
    if (base == BaseKind::SingleScale) {
        single.validate();
    } else {
        require(slow_fast.has_value() && model != nullptr, "slow-fast base needs a spec and an averaged model");
        slow_fast->validate();
        require(delta_power > 1.0, "delta must be o(eps): delta_power > 1");
    }
    require(!eps.empty(), "eps schedule is empty");
    for (double e : eps) require(e > 0.0 && e <= 1.0, "eps must lie in (0, 1]");
    require(horizon > 0.0 && steps >= 1 && skeleton_steps >= 1 && cells >= 1, "grid sizes must be positive");
    require(event.component < state_dim(), "event component out of range");
    if (h_mode == HMode::Mdp) {
        require(theta > 0.0 && theta < 1.0, "MDP needs theta in (0, 1)");
        std::vector<double> s(eps);
        std::sort(s.begin(), s.end(), std::greater<>());
        for (std::size_t i = 1; i < s.size(); ++i) {
            const double h0 = h_of(h_mode, s[i - 1], theta), h1 = h_of(h_mode, s[i], theta);
            require(h1 > h0, "MDP schedule: h(eps) must grow as eps decreases");
            require(std::sqrt(s[i]) * h1 < std::sqrt(s[i - 1]) * h0, "MDP schedule: sqrt(eps) h(eps) must shrink");
        }
    }
}

std::size_t DeviationSpec::state_dim() const { return base == BaseKind::SingleScale ? single.m : slow_fast->m; }
std::size_t DeviationSpec::fbm_dim() const { return base == BaseKind::SingleScale ? single.d : slow_fast->d; }
std::size_t DeviationSpec::bm_dim() const { return base == BaseKind::SingleScale ? single.e : slow_fast->e; }
double DeviationSpec::hurst() const { return base == BaseKind::SingleScale ? single.hurst : slow_fast->hurst; }
std::vector<double> DeviationSpec::skeleton_grid() const { return algebra::uniform_grid(0.0, horizon, skeleton_steps); }
std::vector<double> DeviationSpec::mc_grid() const { return algebra::uniform_grid(0.0, horizon, steps); }
std::vector<double> DeviationSpec::control_cells() const { return algebra::uniform_grid(0.0, horizon, cells); }

PiecewiseLinearPath deviation_process(const PiecewiseLinearPath& trajectory, const PiecewiseLinearPath& limit,
                                      double eps, HMode mode, double theta) {
    require(trajectory.points() == limit.points() && trajectory.dim() == limit.dim(), "paths must share a grid");
    for (std::size_t k = 0; k < trajectory.points(); ++k)
        require(std::abs(trajectory.times()[k] - limit.times()[k]) <= 1e-12 * (1.0 + std::abs(limit.times()[k])),
                "paths must share a grid");
    const double c = std::sqrt(eps) * h_of(mode, eps, theta);
    std::vector<double> v(trajectory.values().size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (trajectory.values()[i] - limit.values()[i]) / c;
    return PiecewiseLinearPath(trajectory.times(), std::move(v), trajectory.dim());
}

PiecewiseLinearPath limit_path(const DeviationSpec& spec) {
    spec.validate();
    if (spec.base == BaseKind::SlowFast) {
        const auto grid = spec.mc_grid();
        return PiecewiseLinearPath(grid, slowfast::averaged_solution(*spec.model, grid), spec.state_dim());
    }
    const SingleScaleSampler sampler(spec);
    const auto& s = spec.single;
    // zero path on the MC grid, lifted and scaled to the zero rough path
    const auto grid = spec.mc_grid();
    const PiecewiseLinearPath zero(grid, std::vector<double>(grid.size() * (s.d + s.e), 0.0), s.d + s.e);
    return sampler.solve(roughpath::from_signature_path(zero, slowfast::exponents_for_hurst(s.hurst)));
}

PiecewiseLinearPath sample_trajectory(const DeviationSpec& spec, double eps, std::uint64_t index) {
    spec.validate();
    if (spec.base == BaseKind::SlowFast) return slow_fast_run(spec, eps, index);
    return SingleScaleSampler(spec).run(eps, index);
}

RateValue rate_value(const CameronMartinControl& ctrl, const DeviationSpec& spec) {
    return rate_value(ctrl, spec, spec.young);
}

RateValue rate_value(const CameronMartinControl& ctrl, const DeviationSpec& spec, const rde::YoungConfig& young) {
    ctrl.validate();
    require(ctrl.fbm_dim == spec.fbm_dim() && ctrl.bm_dim == spec.bm_dim(), "control dimensions do not match");
    require(std::abs(ctrl.cells.back() - spec.horizon) <= 1e-12 * spec.horizon, "control must cover the horizon");
    const auto times = spec.skeleton_grid();
    const std::size_t m = spec.state_dim();
    rde::YoungProblem p;
    std::size_t cols = 0;
    SmoothFunction4 drift, sigma;
    if (spec.base == BaseKind::SingleScale) {
        p.control = gaussian::cm_to_path(ctrl, times);
        cols = spec.single.d + spec.single.e;
        drift = spec.single.drift;
        sigma = spec.single.sigma;
        p.initial = spec.single.x0;
    } else {
        // the skeleton does not see v
        CameronMartinControl u = ctrl;
        u.bm_dim = 0;
        u.vp.clear();
        p.control = gaussian::cm_to_path(u, times);
        cols = spec.slow_fast->d;
        drift = spec.model->as_function();
        sigma = spec.slow_fast->sigma;
        p.initial = spec.slow_fast->x0;
    }
    const bool linear = spec.h_mode != HMode::Ldp;
    if (linear) {
        auto [ld, ls] = linearized(drift, sigma, m, cols);
        p.drift = std::move(ld);
        p.sigma = std::move(ls);
        p.initial.resize(2 * m, 0.0);
    } else {
        p.drift = std::move(drift);
        p.sigma = std::move(sigma);
    }
    // Cameron-Martin paths have finite q-variation for q > 1 / (H + 1/2)
    require(p.q > 1.0 / (spec.hurst() + 0.5), "Young exponent q too small for Cameron-Martin controls");
    auto cfg = young;
    cfg.check_variation = false;
    const auto sol = rde::solve_young(p, cfg);
    PiecewiseLinearPath full(sol.grid, sol.values, sol.state_dim);
    RateValue out;
    out.value = ctrl.norm_sq();
    out.skeleton = linear ? components(full, m, m) : components(full, 0, m);
    return out;
}

namespace {

RateFunctionResult sqp_from(const DeviationSpec& spec, const CameronMartinControl& start, const OptimizerConfig& cfg) {
    RateFunctionResult res;
    CameronMartinControl ctrl = start;
    rde::YoungConfig fast;
    fast.fixed_resolution = true;
    fast.base_substeps = cfg.substeps;
    fast.check_variation = false;
    const Event& ev = spec.event;
    const double target = ev.threshold + 0.1 * cfg.tol;

    auto phi = [&](const std::vector<double>& c, const rde::YoungConfig& yc) {
        set_coefficients(ctrl, c);
        ++res.evaluations;
        return ev.functional(rate_value(ctrl, spec, yc).skeleton);
    };
    const auto w = metric_weights(ctrl);
    const std::size_t P = w.size();
    auto J = [&](const std::vector<double>& c) {
        double s = 0.0;
        for (std::size_t i = 0; i < P; ++i) s += 0.5 * w[i] * c[i] * c[i];
        return s;
    };
    auto gradient = [&](const std::vector<double>& c) {
        std::vector<double> g(P), cp(c);
        for (std::size_t i = 0; i < P; ++i) {
            const double h = cfg.fd_step * std::max(1.0, std::abs(c[i]));
            cp[i] = c[i] + h;
            const double fp = phi(cp, fast);
            cp[i] = c[i] - h;
            const double fm = phi(cp, fast);
            cp[i] = c[i];
            g[i] = (fp - fm) / (2.0 * h);
        }
        return g;
    };

    std::vector<double> c = coefficients(ctrl);
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> best_c;
    double rho = 1.0;
    double f_c = phi(c, fast);
    for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
        res.iterations = it + 1;
        if (f_c >= ev.threshold && J(c) < best) {
            best = J(c);
            best_c = c;
        }
        if (J(c) == 0.0 && f_c >= ev.threshold) {
            res.trace.push_back(best);
            break;
        }
        const auto g = gradient(c);
        double s = 0.0, gc = 0.0;
        for (std::size_t i = 0; i < P; ++i) {
            s += g[i] * g[i] / w[i];
            gc += g[i] * c[i];
        }
        std::vector<double> next(P, 0.0);
        double lambda = 0.0;
        if (s > 0.0) {
            lambda = (target - f_c + gc) / s;
            if (lambda > 0.0)
                for (std::size_t i = 0; i < P; ++i) next[i] = lambda * g[i] / w[i];
        } else if (f_c < ev.threshold) {
            // flat spot (e.g. a sup attained at t = 0): kick along the constant direction
            bool kicked = false;
            for (double k = 1e-3; k < 1e3 && !kicked; k *= 2.0) {
                for (double sign : {1.0, -1.0}) {
                    std::vector<double> t(c);
                    for (auto& x : t) x += sign * k;
                    const double ft = phi(t, fast);
                    if (ft > f_c) {
                        c = t;
                        f_c = ft;
                        kicked = true;
                        break;
                    }
                }
            }
            res.trace.push_back(best);
            if (!kicked) break;
            continue;
        }
        rho = std::max(rho, 2.0 * std::abs(lambda) + 1e-3);
        auto merit = [&](const std::vector<double>& x, double fx) { return J(x) + rho * std::max(0.0, target - fx); };
        const double m0 = merit(c, f_c);
        std::vector<double> d(P), trial(P);
        double dn = 0.0;
        for (std::size_t i = 0; i < P; ++i) {
            d[i] = next[i] - c[i];
            dn += w[i] * d[i] * d[i];
        }
        double t = 1.0, f_t = f_c;
        bool moved = false;
        for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
            for (std::size_t i = 0; i < P; ++i) trial[i] = c[i] + t * d[i];
            f_t = phi(trial, fast);
            if (merit(trial, f_t) < m0 || t * t * dn <= cfg.step_tol * cfg.step_tol) {
                moved = true;
                break;
            }
        }
        if (!moved) {
            res.trace.push_back(best);
            break;
        }
        c = trial;
        f_c = f_t;
        if (f_c >= ev.threshold && J(c) < best) {
            best = J(c);
            best_c = c;
        }
        res.trace.push_back(best);
        if (std::sqrt(t * t * dn) <= cfg.step_tol * (1.0 + std::sqrt(2.0 * J(c))) && f_c >= ev.threshold) break;
    }
    if (!best_c.empty()) c = best_c;

    // feasibility under the accurate solver, restored by Newton steps along the constraint gradient
    double f_acc = phi(c, spec.young);
    for (int r = 0; r < 20 && ev.threshold - f_acc >= cfg.tol; ++r) {
        const auto g = gradient(c);
        double s = 0.0;
        for (std::size_t i = 0; i < P; ++i) s += g[i] * g[i] / w[i];
        if (!(s > 0.0)) break;
        const double step = (target - f_acc) / s;
        for (std::size_t i = 0; i < P; ++i) c[i] += step * g[i] / w[i];
        f_acc = phi(c, spec.young);
    }
    set_coefficients(ctrl, c);
    const auto rv = rate_value(ctrl, spec);
    res.ctrl = ctrl;
    res.value = rv.value;
    res.skeleton = rv.skeleton;
    res.violation = ev.violation(rv.skeleton);
    res.feasible = res.violation < cfg.tol;
    if (res.feasible && (res.trace.empty() || res.value < res.trace.back())) res.trace.push_back(res.value);
    return res;
}

}  // namespace

RateFunctionResult optimize_rate(const DeviationSpec& spec, const std::optional<CameronMartinControl>& init,
                                 const OptimizerConfig& cfg) {
    spec.validate();
    if (init) return sqp_from(spec, *init, cfg);
    auto best = sqp_from(spec, CameronMartinControl::zero(spec.hurst(), spec.control_cells(), spec.fbm_dim(), spec.bm_dim()), cfg);
    if (best.feasible && best.value == 0.0) return best;
    // second start from the cheapest corpus control; sup events have local minima
    const auto corpus = feasible_corpus(spec, 2);
    if (corpus.empty()) return best;
    const auto cheapest = std::min_element(corpus.begin(), corpus.end(), [](const auto& a, const auto& b) {
        return a.norm_sq() < b.norm_sq();
    });
    auto other = sqp_from(spec, *cheapest, cfg);
    const std::size_t evals = best.evaluations + other.evaluations, iters = best.iterations + other.iterations;
    if (other.feasible && (!best.feasible || other.value < best.value)) best = std::move(other);
    best.evaluations = evals;
    best.iterations = iters;
    return best;
}

std::vector<CameronMartinControl> feasible_corpus(const DeviationSpec& spec, std::size_t random,
                                                  std::uint64_t seed) {
    spec.validate();
    auto ctrl = CameronMartinControl::zero(spec.hurst(), spec.control_cells(), spec.fbm_dim(), spec.bm_dim());
    const std::size_t P = ctrl.hu.size() + ctrl.vp.size();
    std::vector<std::vector<double>> dirs;
    dirs.emplace_back(P, 1.0);
    std::vector<double> ramp(P);
    for (std::size_t i = 0; i < P; ++i) ramp[i] = static_cast<double>(i + 1) / static_cast<double>(P);
    dirs.push_back(ramp);
    auto rng = gaussian::make_stream(seed, 0);
    std::normal_distribution<double> nd;
    for (std::size_t r = 0; r < random; ++r) {
        std::vector<double> v(P);
        for (auto& x : v) x = nd(rng);
        dirs.push_back(v);
    }
    auto hits = [&](const std::vector<double>& d, double s) {
        std::vector<double> c(d);
        for (auto& x : c) x *= s;
        set_coefficients(ctrl, c);
        return spec.event.hit(rate_value(ctrl, spec).skeleton);
    };
    std::vector<CameronMartinControl> out;
    for (const auto& base : dirs) {
        for (double sign : {1.0, -1.0}) {
            std::vector<double> d(base);
            for (auto& x : d) x *= sign;
            if (hits(d, 0.0)) {
                set_coefficients(ctrl, std::vector<double>(P, 0.0));
                out.push_back(ctrl);
                return out;
            }
            double hi = 1.0;
            while (hi < 1e6 && !hits(d, hi)) hi *= 2.0;
            if (!hits(d, hi)) continue;
            double lo = 0.0;
            for (int it = 0; it < 40; ++it) {
                const double mid = 0.5 * (lo + hi);
                (hits(d, mid) ? hi : lo) = mid;
            }
            for (auto& x : d) x *= hi;
            set_coefficients(ctrl, d);
            out.push_back(ctrl);
        }
    }
    return out;
}

TailEstimate wilson(std::size_t hits, std::size_t n, double z) {
    require(n > 0 && hits <= n, "Wilson interval needs 0 <= hits <= n > 0");
    TailEstimate t;
    t.n = n;
    t.hits = hits;
    const double N = static_cast<double>(n), p = static_cast<double>(hits) / N, z2 = z * z;
    t.p = p;
    const double denom = 1.0 + z2 / N;
    const double center = (p + z2 / (2.0 * N)) / denom;
    const double half = z / denom * std::sqrt(p * (1.0 - p) / N + z2 / (4.0 * N * N));
    t.lo = hits == 0 ? 0.0 : std::max(0.0, center - half);
    t.hi = hits == n ? 1.0 : std::min(1.0, center + half);
    t.upper_only = hits == 0;
    return t;
}

TailEstimate mc_tail(const DeviationSpec& spec, double eps, std::size_t budget) {
    spec.validate();
    const std::size_t n = budget ? budget : spec.mc_budget;
    require(n >= 1000, "Monte Carlo budget must be at least 1000");
    const bool deviation = spec.h_mode != HMode::Ldp;
    std::optional<PiecewiseLinearPath> limit;
    if (deviation) limit = limit_path(spec);
    std::optional<SingleScaleSampler> sampler;
    if (spec.base == BaseKind::SingleScale) sampler.emplace(spec);
    auto one = [&](std::size_t k) {
        auto x = sampler ? sampler->run(eps, k) : slow_fast_run(spec, eps, k);
        if (deviation) x = deviation_process(x, *limit, eps, spec.h_mode, spec.theta);
        return spec.event.hit(x);
    };
    const std::size_t workers = std::max<std::size_t>(1, std::min(spec.threads, n));
    std::vector<std::size_t> counts(workers, 0);
    std::vector<std::exception_ptr> errors(workers);
    auto work = [&](std::size_t w) {
        try {
            for (std::size_t k = w; k < n; k += workers)
                if (one(k)) ++counts[w];
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::size_t hits = 0;
    for (std::size_t c : counts) hits += c;
    return wilson(hits, n);
}

SlopeReport fit_slope(const std::vector<SlopePoint>& points, double rate, std::size_t min_hits) {
    SlopeReport rep;
    rep.points = points;
    rep.rate = rate;
    bool all_certain = true;
    std::vector<std::size_t> use;
    for (std::size_t i = 0; i < rep.points.size(); ++i) {
        auto& pt = rep.points[i];
        pt.used = pt.tail.hits >= min_hits;
        if (!pt.used) {
            rep.truncated = true;
            continue;
        }
        if (pt.tail.hits < pt.tail.n) all_certain = false;
        use.push_back(i);
    }
    if (use.empty()) {
        rep.slope = std::numeric_limits<double>::quiet_NaN();
        rep.gap = std::numeric_limits<double>::quiet_NaN();
        return rep;
    }
    if (all_certain) {
        rep.slope = 0.0;
    } else {
        // weighted least squares of y = -a (log p - log(a) / 2) on [1, a]
        double s00 = 0, s01 = 0, s11 = 0, r0 = 0, r1 = 0;
        std::size_t cnt = 0;
        for (std::size_t i : use) {
            const auto& pt = rep.points[i];
            if (pt.tail.hits == pt.tail.n) continue;
            const double p = pt.tail.p, a = pt.speed;
            const double y = -a * (std::log(p) - 0.5 * std::log(a));
            const double var = a * a * (1.0 - p) / (static_cast<double>(pt.tail.n) * p);
            const double wgt = 1.0 / var;
            s00 += wgt;
            s01 += wgt * a;
            s11 += wgt * a * a;
            r0 += wgt * y;
            r1 += wgt * a * y;
            ++cnt;
        }
        if (cnt >= 2) {
            const double det = s00 * s11 - s01 * s01;
            rep.slope = (s11 * r0 - s01 * r1) / det;
            rep.slope_se = std::sqrt(s11 / det);
        } else {
            rep.slope = r0 / s00;
            rep.slope_se = std::sqrt(1.0 / s00);
        }
    }
    if (rate > 0.0) {
        rep.gap = std::abs(rep.slope - rate) / rate;
        rep.gap_se = rep.slope_se / rate;
    } else {
        rep.gap = std::abs(rep.slope);
        rep.gap_se = rep.slope_se;
    }
    return rep;
}

SlopeReport ldp_slope_check(const DeviationSpec& spec, double rate, std::size_t min_hits) {
    spec.validate();
    std::vector<SlopePoint> pts;
    for (double e : spec.eps) {
        SlopePoint p;
        p.eps = e;
        p.speed = speed_of(spec.h_mode, e, spec.theta);
        p.tail = mc_tail(spec, e);
        pts.push_back(p);
    }
    return fit_slope(pts, rate, min_hits);
}

double additive_terminal_rate(double hurst, double horizon, double a) {
    require(hurst > 0.0 && hurst < 1.0 && horizon > 0.0, "rate needs H in (0, 1) and T > 0");
    return a * a / (2.0 * std::pow(horizon, 2.0 * hurst));
}

double ou_terminal_variance(double hurst, double horizon, double lambda) {
    require(hurst > 0.0 && hurst < 1.0 && horizon > 0.0, "variance needs H in (0, 1) and T > 0");
    // int_0^T e^{-l (T - s)} db_s = b_T - l int_0^T e^{-l (T - s)} b_s ds
    const double T = horizon, l = lambda;
    auto R = [hurst](double t, double s) { return gaussian::fbm_covariance(hurst, t, s); };
    auto k = [T, l](double s) { return std::exp(-l * (T - s)); };
    boost::math::quadrature::tanh_sinh<double> q;
    const double cross = q.integrate([&](double s) { return k(s) * R(T, s); }, 0.0, T);
    // symmetric double integral: 2 int_0^T int_0^s
    const double dbl = 2.0 * q.integrate(
                                 [&](double s) {
                                     if (s <= 0.0) return 0.0;
                                     return k(s) * q.integrate([&](double r) { return k(r) * R(s, r); }, 0.0, s);
                                 },
                                 0.0, T);
    return R(T, T) - 2.0 * l * cross + l * l * dbl;
}

}  // namespace roughdev::devlab
