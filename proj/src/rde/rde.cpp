#include "roughdev/rde/rde.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace roughdev::rde {

using controlled::controlled_distance;
using controlled::controlled_norms;

void RdeProblem::validate() const {
    if (!driver) throw std::invalid_argument("RDE problem needs a driver");
    const std::size_t m = initial.size(), d = driver->dim();
    if (m == 0) throw std::invalid_argument("RDE problem needs a non-empty initial state");
    drift.check_ready();
    sigma.check_ready();
    if (drift.in_dim != m || drift.out_dim != m) throw std::invalid_argument("drift must map R^m to R^m");
    if (sigma.in_dim != m || sigma.out_dim != m * d) throw std::invalid_argument("sigma must map R^m to R^{m x d}");
    if (!std::isfinite(sigma.bound) || sigma.bound < 0.0) throw std::invalid_argument("sigma needs a finite C^4_b bound");
    if (!std::isfinite(drift_lipschitz) || drift_lipschitz < 0.0)
        throw std::invalid_argument("drift Lipschitz constant must be finite and non-negative");
    for (double v : initial)
        if (!std::isfinite(v)) throw std::invalid_argument("initial state must be finite");
}

SmoothFunction4 augmented_field(const RdeProblem& p) {
    return controlled::hstack_columns(p.drift, p.sigma, p.state_dim(), p.driver_dim());
}

double log_step_size(const RdeProblem& p, const SolverConfig& cfg) {
    if (cfg.lambda_override > 0.0) return std::log(cfg.lambda_override);
    if (!(cfg.c_beta > 4.0) || !(cfg.nu_hat > 2.0)) throw std::invalid_argument("step-size constants need C_beta > 4 and nu > 2");
    const auto& ex = p.driver->exponents();
    const double K = std::max(p.sigma.bound, p.drift_lipschitz);
    const double xn = roughpath::homogeneous_norm(*p.driver, cfg.holder_mode);
    const double s = std::log(cfg.c_beta) + cfg.nu_hat * std::log(K + 1.0) + cfg.nu_hat * std::log(xn + 1.0);
    return -s / (ex.alpha - ex.beta);
}

namespace {

struct Window {
    bool ok = false;
    std::size_t iterations = 0;
    double contraction = 0.0;
    ControlledPath result;
};

// Picard iteration of Y -> Y_a + int [f|sigma](Y) dX^ on grid steps [i0, i0 + n].
Window picard(const SmoothFunction4& field, const std::shared_ptr<const RoughPath>& aug, std::size_t i0, std::size_t n,
              std::span<const double> y0, std::span<const double> yd0, std::span<const double> ydd0,
              const SolverConfig& cfg, double beta, std::size_t& budget) {
    const std::size_t m = y0.size();
    auto local = std::make_shared<const RoughPath>(roughpath::restrict(*aug, i0, i0 + n));
    std::vector<double> y, yd, ydd;
    for (std::size_t k = 0; k <= n; ++k) {
        y.insert(y.end(), y0.begin(), y0.end());
        yd.insert(yd.end(), yd0.begin(), yd0.end());
        ydd.insert(ydd.end(), ydd0.begin(), ydd0.end());
    }
    ControlledPath cur(local, m, std::move(y), std::move(yd), std::move(ydd));
    Window w;
    double prev = 0.0;
    std::size_t growth = 0;
    while (w.iterations < cfg.max_picard_iterations) {
        if (budget == 0) return w;
        --budget;
        ++w.iterations;
        const ControlledPath z = controlled::compose(field, cur);
        const ControlledPath integral = controlled::rough_integral(z);
        std::vector<double> ny(integral.y_data());
        for (std::size_t k = 0; k <= n; ++k)
            for (std::size_t o = 0; o < m; ++o) ny[k * m + o] += y0[o];
        ControlledPath next(local, m, std::move(ny), z.y_data(), integral.ydagdag_data());
        const double dist = controlled_distance(cur, next, beta, 0, n);
        const double scale = std::max(1.0, controlled_norms(next, beta, 0, n).q_norm());
        if (w.iterations > 1 && prev > 0.0) {
            const double r = dist / prev;
            w.contraction = std::max(w.contraction, r);
            growth = r >= 1.0 ? growth + 1 : 0;
        }
        prev = dist;
        cur = std::move(next);
        if (dist <= cfg.picard_tol * scale) {
            w.ok = true;
            w.result = std::move(cur);
            return w;
        }
        if (!std::isfinite(dist) || growth >= 3) return w;
    }
    return w;
}

}  // namespace

RdeSolution solve_rde(const RdeProblem& p, const SolverConfig& cfg) {
    p.validate();
    if (cfg.max_subinterval_steps == 0) throw std::invalid_argument("max_subinterval_steps must be positive");
    const std::size_t m = p.state_dim(), D = p.driver_dim() + 1;
    auto aug = std::make_shared<const RoughPath>(roughpath::time_adjoined(*p.driver));
    const SmoothFunction4 field = augmented_field(p);
    const double beta = p.driver->exponents().beta;
    const double log_lambda = log_step_size(p, cfg);
    const double lambda = std::exp(log_lambda);
    const auto& g = aug->grid();
    const std::size_t N = aug->steps();

    // derivatives at the start: (field(xi), grad field(xi) field(xi))
    std::vector<double> y0(p.initial), yd0 = field.value(p.initial), ydd0(m * D * D, 0.0);
    {
        const auto gr = field.gradient(p.initial);
        for (std::size_t o = 0; o < m; ++o)
            for (std::size_t i = 0; i < D; ++i)
                for (std::size_t j = 0; j < D; ++j) {
                    double s = 0.0;
                    for (std::size_t l = 0; l < m; ++l) s += gr[(o * D + j) * m + l] * yd0[l * D + i];
                    ydd0[(o * D + i) * D + j] = s;
                }
    }

    std::vector<double> Y(y0), Yd(yd0), Ydd(ydd0);
    RdeSolution sol;
    std::size_t budget = cfg.max_total_iterations;
    std::size_t k = 0;
    double min_step = g[1] - g[0];
    for (std::size_t q = 1; q < N; ++q) min_step = std::min(min_step, g[q + 1] - g[q]);
    sol.growth.lambda = lambda;
    sol.growth.lambda_clamped = log_lambda < std::log(min_step);
    while (k < N) {
        std::size_t n = 1;
        while (n < cfg.max_subinterval_steps && k + n < N && g[k + n + 1] - g[k] < lambda) ++n;
        StepRecord rec;
        rec.i0 = k;
        rec.lambda = lambda;
        Window w;
        for (;;) {
            w = picard(field, aug, k, n, std::span<const double>(Y).subspan(k * m, m),
                       std::span<const double>(Yd).subspan(k * m * D, m * D),
                       std::span<const double>(Ydd).subspan(k * m * D * D, m * D * D), cfg, beta, budget);
            rec.iterations += w.iterations;
            sol.total_iterations += w.iterations;
            if (w.ok || budget == 0) break;
            if (n == 1) {
                std::ostringstream os;
                os << "Picard map did not contract on grid step " << k << " after " << w.iterations
                   << " iterations (largest distance ratio " << w.contraction << ")";
                throw ContractionFailure(os.str());
            }
            n /= 2;
            ++rec.halvings;
        }
        if (!w.ok) {
            sol.partial = true;
            break;
        }
        rec.i1 = k + n;
        rec.contraction = w.contraction;
        const ControlledPath& r = w.result;
        for (std::size_t q = 1; q <= n; ++q) {
            Y.insert(Y.end(), r.y(q).begin(), r.y(q).end());
            Yd.insert(Yd.end(), r.ydag(q).begin(), r.ydag(q).end());
            Ydd.insert(Ydd.end(), r.ydagdag(q).begin(), r.ydagdag(q).end());
        }
        sol.step_log.push_back(rec);
        k += n;
    }
    if (sol.partial && k == 0) {
        throw BudgetExhausted("iteration budget exhausted before the first step");
    }
    sol.augmented = k == N ? aug : std::make_shared<const RoughPath>(roughpath::restrict(*aug, 0, k));
    sol.path = ControlledPath(sol.augmented, m, std::move(Y), std::move(Yd), std::move(Ydd));
    sol.growth.subintervals = sol.step_log.size();
    sol.growth.beta_norm =
        roughpath::holder_seminorm(sol.augmented->grid(), sol.path.y_data(), m, beta, cfg.holder_mode);
    const double T = g[N] - g[0];
    // log(floor(T / lambda) + 1), computed without overflow
    const double log_count = log_lambda > std::log(T) - 30.0
                                 ? std::log(std::floor(T / lambda) + 1.0)
                                 : std::log(T) - log_lambda;
    sol.growth.log_bound = (1.0 - beta) * log_count;
    return sol;
}

double beta_distance(const RdeSolution& a, const RdeSolution& b, double beta, HolderMode mode) {
    if (a.grid() != b.grid() || a.path.value_dim() != b.path.value_dim())
        throw std::invalid_argument("solutions must share grid and dimension");
    const std::size_t m = a.path.value_dim();
    std::vector<double> diff(a.path.y_data());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= b.path.y_data()[i];
    double init = 0.0;
    for (std::size_t o = 0; o < m; ++o) init += diff[o] * diff[o];
    return std::sqrt(init) + roughpath::holder_seminorm(a.grid(), diff, m, beta, mode);
}

StabilityReport stability_probe(const RdeProblem& p, const Perturbation& pert, const SolverConfig& cfg) {
    p.validate();
    const std::size_t m = p.state_dim();
    if (!pert.initial_direction.empty() && pert.initial_direction.size() != m)
        throw std::invalid_argument("initial perturbation has the wrong dimension");
    if (!pert.driver_direction.empty() && pert.driver_direction.size() != p.driver->points() * p.driver_dim())
        throw std::invalid_argument("driver perturbation does not match the grid");
    const RdeSolution base = solve_rde(p, cfg);
    const double beta = p.driver->exponents().beta;
    StabilityReport rep;
    for (double eps : pert.magnitudes) {
        RdeProblem q = p;
        double din = 0.0;
        if (!pert.initial_direction.empty()) {
            double s = 0.0;
            for (std::size_t o = 0; o < m; ++o) {
                q.initial[o] += eps * pert.initial_direction[o];
                s += (eps * pert.initial_direction[o]) * (eps * pert.initial_direction[o]);
            }
            din += std::sqrt(s);
        }
        if (!pert.driver_direction.empty()) {
            std::vector<double> h(pert.driver_direction);
            for (double& e : h) e *= eps;
            q.driver = std::make_shared<const RoughPath>(roughpath::translate_linear(*p.driver, h));
            din += roughpath::rp_distance(*p.driver, *q.driver, cfg.holder_mode);
        }
        const RdeSolution other = solve_rde(q, cfg);
        const double dout = beta_distance(base, other, beta, cfg.holder_mode);
        const double r = din > 0.0 ? dout / din : 0.0;
        rep.magnitudes.push_back(eps);
        rep.ratios.push_back(r);
        rep.sup_ratio = std::max(rep.sup_ratio, r);
    }
    return rep;
}

void YoungProblem::validate() const {
    const std::size_t m = initial.size(), d = control.dim();
    if (m == 0) throw std::invalid_argument("Young problem needs a non-empty initial state");
    drift.check_ready();
    sigma.check_ready();
    if (drift.in_dim != m || drift.out_dim != m) throw std::invalid_argument("drift must map R^m to R^m");
    if (sigma.in_dim != m || sigma.out_dim != m * d) throw std::invalid_argument("sigma must map R^m to R^{m x d}");
    if (!(q >= 1.0 && q < 2.0)) throw std::invalid_argument("variation exponent must lie in [1, 2)");
}

double q_variation(const std::vector<double>& grid, std::span<const double> values, std::size_t dim, double q) {
    if (dim == 0 || values.size() != grid.size() * dim) throw std::invalid_argument("q-variation: values do not match the grid");
    const std::size_t P = grid.size();
    std::vector<double> best(P, 0.0);
    for (std::size_t j = 1; j < P; ++j) {
        double b = 0.0;
        for (std::size_t i = 0; i < j; ++i) {
            double s = 0.0;
            for (std::size_t c = 0; c < dim; ++c) {
                const double d = values[j * dim + c] - values[i * dim + c];
                s += d * d;
            }
            b = std::max(b, best[i] + std::pow(s, 0.5 * q));
        }
        best[j] = b;
    }
    return std::pow(best.back(), 1.0 / q);
}

namespace {

std::vector<double> young_euler(const YoungProblem& p, std::size_t sub) {
    const std::size_t m = p.initial.size(), d = p.control.dim(), P = p.control.points();
    const auto& t = p.control.times();
    std::vector<double> out(P * m);
    std::vector<double> y(p.initial);
    std::copy(y.begin(), y.end(), out.begin());
    std::vector<double> du(d);
    for (std::size_t k = 0; k + 1 < P; ++k) {
        const double dt = (t[k + 1] - t[k]) / static_cast<double>(sub);
        const auto a = p.control.value(k), b = p.control.value(k + 1);
        for (std::size_t c = 0; c < d; ++c) du[c] = (b[c] - a[c]) / static_cast<double>(sub);
        for (std::size_t s = 0; s < sub; ++s) {
            const auto f = p.drift.value(y);
            const auto sg = p.sigma.value(y);
            for (std::size_t o = 0; o < m; ++o) {
                double inc = f[o] * dt;
                for (std::size_t c = 0; c < d; ++c) inc += sg[o * d + c] * du[c];
                y[o] += inc;
            }
        }
        std::copy(y.begin(), y.end(), out.begin() + static_cast<std::ptrdiff_t>((k + 1) * m));
    }
    return out;
}

void check_control_variation(const YoungProblem& p) {
    const std::size_t P = p.control.points(), d = p.control.dim();
    if (P < 17) return;
    auto sampled = [&](std::size_t stride) {
        std::vector<double> g, v;
        for (std::size_t k = 0; k < P; k += stride) {
            g.push_back(p.control.times()[k]);
            const auto x = p.control.value(k);
            v.insert(v.end(), x.begin(), x.end());
        }
        return q_variation(g, v, d, p.q);
    };
    const std::size_t base = std::max<std::size_t>(1, (P - 1) / 2048);
    const double v1 = sampled(base), v4 = sampled(4 * base), v16 = sampled(16 * base);
    if (v1 > 1.05 * v4 && v4 > 1.05 * v16) {
        std::ostringstream os;
        os << "control q-variation grows under refinement (" << v16 << ", " << v4 << ", " << v1
           << "); q = " << p.q << " looks too small for this driver";
        throw std::invalid_argument(os.str());
    }
}

}  // namespace

YoungSolution solve_young(const YoungProblem& p, const YoungConfig& cfg) {
    p.validate();
    if (cfg.base_substeps == 0) throw std::invalid_argument("base_substeps must be positive");
    if (cfg.check_variation) check_control_variation(p);
    YoungSolution sol;
    sol.grid = p.control.times();
    sol.state_dim = p.initial.size();
    std::size_t sub = cfg.base_substeps;
    std::vector<double> cur = young_euler(p, sub);
    if (cfg.fixed_resolution) {
        sol.values = std::move(cur);
        sol.substeps = sub;
        sol.converged = true;
        return sol;
    }
    // Richardson step on the first-order scheme: 2 E(2s) - E(s)
    std::vector<double> extrap;
    for (std::size_t r = 0; r < cfg.max_refinements; ++r) {
        std::vector<double> next = young_euler(p, 2 * sub);
        std::vector<double> ext(next.size());
        for (std::size_t i = 0; i < next.size(); ++i) ext[i] = 2.0 * next[i] - cur[i];
        sub *= 2;
        cur = std::move(next);
        if (!extrap.empty()) {
            double diff = 0.0, scale = 1.0;
            for (std::size_t i = 0; i < ext.size(); ++i) {
                diff = std::max(diff, std::abs(ext[i] - extrap[i]));
                scale = std::max(scale, std::abs(ext[i]));
            }
            sol.error_estimate = diff;
            extrap = std::move(ext);
            if (diff <= cfg.tol * scale) {
                sol.converged = true;
                break;
            }
        } else {
            extrap = std::move(ext);
        }
    }
    if (!extrap.empty()) cur = std::move(extrap);
    sol.values = std::move(cur);
    sol.substeps = sub;
    return sol;
}

}  // namespace roughdev::rde
