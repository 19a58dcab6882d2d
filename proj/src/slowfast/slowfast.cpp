#include "roughdev/slowfast/slowfast.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <string>

#include "roughdev/roughpath/rough_path.hpp"

namespace roughdev::slowfast {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

void check_map(const SmoothFunction4& phi, std::size_t in, std::size_t out, const char* msg) {
    require(phi.in_dim == in && phi.out_dim == out, msg);
    phi.check_ready();
}

/// F~ and G at (x, y) without allocation; one instance per thread of work.
class FastField {
public:
    explicit FastField(const SlowFastSpec& s)
        : s_(s), z_(s.m + s.n), gg_(s.n * s.e * (s.m + s.n)) {}

    /// Corrected drift into drift, diffusion into g (n x e).
    void corrected(std::span<const double> x, std::span<const double> y, std::span<double> drift,
                   std::span<double> g) {
        load(x, y);
        s_.F.eval(z_, drift);
        s_.G.eval(z_, g);
        s_.G.grad(z_, gg_);
        const std::size_t n = s_.n, e = s_.e, w = s_.m + s_.n;
        for (std::size_t k = 0; k < n; ++k) {
            double c = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < e; ++j) c += gg_[(k * e + j) * w + s_.m + i] * g[i * e + j];
            drift[k] += 0.5 * c;
        }
    }

    /// Uncorrected F and G.
    void plain(std::span<const double> x, std::span<const double> y, std::span<double> drift, std::span<double> g) {
        load(x, y);
        s_.F.eval(z_, drift);
        s_.G.eval(z_, g);
    }

    /// f(x, y) into out (m values).
    void slow_drift(std::span<const double> x, std::span<const double> y, std::span<double> out) {
        load(x, y);
        s_.f.eval(z_, out);
    }

private:
    void load(std::span<const double> x, std::span<const double> y) {
        std::copy(x.begin(), x.end(), z_.begin());
        std::copy(y.begin(), y.end(), z_.begin() + static_cast<std::ptrdiff_t>(s_.m));
    }

    const SlowFastSpec& s_;
    std::vector<double> z_, gg_;
};

void check_cap(std::span<const double> y, double cap, double t) {
    for (double v : y) {
        if (!std::isfinite(v) || std::abs(v) > cap) {
            std::ostringstream os;
            os << "fast component exceeded " << cap << " at t = " << t
               << "; the frozen fast dynamics are likely not dissipative";
            throw FastBlowUp(os.str());
        }
    }
}

/// y += drift * a + (g dw) * b
void em_update(std::span<double> y, std::span<const double> drift, std::span<const double> g,
               std::span<const double> dw, double a, double b, std::size_t e) {
    for (std::size_t k = 0; k < y.size(); ++k) {
        double gw = 0.0;
        for (std::size_t j = 0; j < e; ++j) gw += g[k * e + j] * dw[j];
        y[k] += drift[k] * a + gw * b;
    }
}

double sq_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

std::size_t steps_for(double horizon, double dt, const char* msg) {
    require(dt > 0.0 && horizon > 0.0, msg);
    const double r = horizon / dt;
    const auto n = static_cast<std::size_t>(std::llround(r));
    require(n >= 1 && std::abs(r - static_cast<double>(n)) <= 1e-9 * r, msg);
    return n;
}

std::size_t block_micro_steps(const SlowFastGrid& grid, double Delta) {
    const std::size_t total = grid.micro_steps();
    if (Delta >= grid.horizon * (1.0 - 1e-12)) return total;
    const std::size_t dm = steps_for(Delta, grid.micro_dt(), "Delta must be a multiple of the fast step");
    require(total % dm == 0, "Delta must divide the horizon");
    return dm;
}

}  // namespace

void SlowFastSpec::validate() const {
    require(m >= 1 && n >= 1 && d >= 1 && e >= 1, "slow-fast dimensions must be positive");
    check_map(f, m + n, m, "f must map R^{m+n} to R^m");
    check_map(sigma, m, m * d, "sigma must map R^m to R^{m x d}");
    check_map(F, m + n, n, "F must map R^{m+n} to R^n");
    check_map(G, m + n, n * e, "G must map R^{m+n} to R^{n x e}");
    require(eps > 0.0 && eps <= 1.0, "eps must lie in (0, 1]");
    require(delta > 0.0 && delta <= 1.0, "delta must lie in (0, 1]");
    if (test_mode)
        require(hurst > 0.0 && hurst < 1.0, "Hurst index must lie in (0, 1)");
    else
        require(hurst > 0.25 && hurst < 1.0 / 3.0, "Hurst index must lie in (1/4, 1/3)");
    require(x0.size() == m, "initial slow state has the wrong size");
    require(y0.size() == n, "initial fast state has the wrong size");
}

SlowFastSpec ou_benchmark(double eps, double delta, double kappa, double hurst) {
    using controlled::TermSum;
    SlowFastSpec s;
    std::vector<TermSum> f(1), F(1);
    f[0].monomials = {{-1.0, {1, 0}}, {1.0, {0, 1}}};
    F[0].monomials = {{kappa, {1, 0}}, {-1.0, {0, 1}}};
    s.f = controlled::term_function(2, f, 2.0);
    s.F = controlled::term_function(2, F, 1.0 + std::abs(kappa));
    s.sigma = controlled::constant(1, {1.0});
    s.G = controlled::constant(2, {1.0});
    s.eps = eps;
    s.delta = delta;
    s.hurst = hurst;
    s.x0 = {1.0};
    s.y0 = {0.0};
    s.params = {1.0 + std::max(1.0, std::abs(kappa)), 2.0, 1.0, std::max(1.0, kappa * kappa)};
    return s;
}

roughpath::HolderExponents exponents_for_hurst(double hurst) {
    require(hurst > 0.25, "level-3 lifts need H > 1/4");
    const double alpha = std::min(1.0 / 3.0, 0.25 + 0.75 * (hurst - 0.25));
    const double beta = 0.25 + 0.5 * (alpha - 0.25);
    return roughpath::HolderExponents(alpha, beta, 0.49);
}

SmoothFunction4 ito_correction(const SmoothFunction4& F, const SmoothFunction4& G, std::size_t m, std::size_t n,
                               std::size_t e) {
    check_map(F, m + n, n, "F must map R^{m+n} to R^n");
    check_map(G, m + n, n * e, "G must map R^{m+n} to R^{n x e}");
    const std::size_t w = m + n;
    controlled::DerivativeFn eval = [F, G, m, n, e, w](std::span<const double> z, std::span<double> out) {
        std::vector<double> gv(n * e), gg(n * e * w);
        F.eval(z, out);
        G.eval(z, gv);
        G.grad(z, gg);
        for (std::size_t k = 0; k < n; ++k) {
            double c = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < e; ++j) c += gg[(k * e + j) * w + m + i] * gv[i * e + j];
            out[k] += 0.5 * c;
        }
    };
    return controlled::finite_difference_adapter(std::move(eval), w, n, F.bound);
}

DissipativityCheck check_dissipativity(const SlowFastSpec& spec, std::size_t samples, std::uint64_t seed,
                                       double radius) {
    spec.validate();
    FastField field(spec);
    auto rng = gaussian::make_stream(seed, 0);
    std::uniform_real_distribution<double> u(-radius, radius);
    const std::size_t m = spec.m, n = spec.n, e = spec.e;
    std::vector<double> x(m), y1(n), y2(n), f1(n), f2(n), g1(n * e), g2(n * e);
    DissipativityCheck out;
    out.samples = samples;
    out.worst_contraction = -std::numeric_limits<double>::infinity();
    out.worst_coercivity = -std::numeric_limits<double>::infinity();
    const auto& p = spec.params;
    for (std::size_t s = 0; s < samples; ++s) {
        for (auto& v : x) v = u(rng);
        for (std::size_t i = 0; i < n; ++i) {
            y1[i] = u(rng);
            y2[i] = u(rng);
        }
        field.corrected(x, y1, f1, g1);
        field.corrected(x, y2, f2, g2);
        double dot = 0.0, dy2 = 0.0, dg2 = 0.0, yf = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dot += (y1[i] - y2[i]) * (f1[i] - f2[i]);
            dy2 += (y1[i] - y2[i]) * (y1[i] - y2[i]);
            yf += y1[i] * f1[i];
        }
        for (std::size_t i = 0; i < n * e; ++i) dg2 += (g1[i] - g2[i]) * (g1[i] - g2[i]);
        bool bad = false;
        if (dy2 > 0.0) {
            const double rel = (2.0 * dot + dg2 + p.beta1 * dy2) / dy2;
            out.worst_contraction = std::max(out.worst_contraction, rel);
            bad = rel > 1e-9;
        }
        const double coer = 2.0 * yf + sq_norm(g1) + p.beta2 * sq_norm(y1) - p.c * sq_norm(x) - p.c;
        out.worst_coercivity = std::max(out.worst_coercivity, coer);
        if (coer > 1e-9) bad = true;
        if (bad) ++out.violations;
    }
    out.passed = out.violations == 0;
    return out;
}

FastTrajectory frozen_fast(const SlowFastSpec& spec, std::span<const double> x, std::span<const double> y0,
                           double horizon, double dt, std::mt19937_64& rng, FastForm form, double cap) {
    spec.validate();
    require(x.size() == spec.m && y0.size() == spec.n, "frozen fast state has the wrong size");
    const std::size_t steps = steps_for(horizon, dt, "horizon must be a positive multiple of dt");
    const std::size_t n = spec.n, e = spec.e;
    FastField field(spec);
    std::normal_distribution<double> gauss(0.0, std::sqrt(dt));
    FastTrajectory out;
    out.dt = dt;
    out.dim = n;
    out.values.reserve((steps + 1) * n);
    out.values.assign(y0.begin(), y0.end());
    std::vector<double> y(y0.begin(), y0.end()), yp(n), f0(n), f1(n), g0(n * e), g1(n * e), dw(e);
    for (std::size_t k = 0; k < steps; ++k) {
        for (auto& v : dw) v = gauss(rng);
        if (form == FastForm::Ito) {
            field.corrected(x, y, f0, g0);
            em_update(y, f0, g0, dw, dt, 1.0, e);
        } else {
            field.plain(x, y, f0, g0);
            yp = y;
            em_update(yp, f0, g0, dw, dt, 1.0, e);
            field.plain(x, yp, f1, g1);
            for (std::size_t i = 0; i < n; ++i) f0[i] = 0.5 * (f0[i] + f1[i]);
            for (std::size_t i = 0; i < n * e; ++i) g0[i] = 0.5 * (g0[i] + g1[i]);
            em_update(y, f0, g0, dw, dt, 1.0, e);
        }
        check_cap(y, cap, static_cast<double>(k + 1) * dt);
        out.values.insert(out.values.end(), y.begin(), y.end());
    }
    return out;
}

BarFEstimate estimate_bar_f(const SlowFastSpec& spec, std::span<const double> x, const BarFBudget& budget) {
    spec.validate();
    require(x.size() == spec.m, "slow state has the wrong size");
    require(budget.batches >= 2, "at least two batches are needed");
    const std::size_t m = spec.m, n = spec.n, e = spec.e;
    const double dt = budget.dt;
    const std::size_t burn = budget.burn_in > 0.0 ? steps_for(budget.burn_in, dt, "burn-in must be a multiple of dt") : 0;
    const std::size_t total = steps_for(budget.horizon, dt, "horizon must be a multiple of dt");
    const std::size_t per_batch = total / budget.batches;
    require(per_batch >= 1, "averaging window is shorter than the batch count");
    const std::size_t B = budget.batches;

    FastField field(spec);
    auto rng = gaussian::make_stream(budget.seed, 0);
    std::normal_distribution<double> gauss(0.0, std::sqrt(dt));
    std::vector<double> y(spec.y0), f0(n), g0(n * e), dw(e), fv(m), first(m);
    auto step = [&](std::vector<double>& state) {
        for (auto& v : dw) v = gauss(rng);
        field.corrected(x, state, f0, g0);
        em_update(state, f0, g0, dw, dt, 1.0, e);
    };
    for (std::size_t k = 0; k < burn; ++k) {
        step(y);
        check_cap(y, 1e8, static_cast<double>(k + 1) * dt);
    }
    std::vector<double> means(B * m, 0.0);
    bool collapsed = true;
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t k = 0; k < per_batch; ++k) {
            step(y);
            check_cap(y, 1e8, budget.burn_in + static_cast<double>(b * per_batch + k + 1) * dt);
            field.slow_drift(x, y, fv);
            if (b == 0 && k == 0)
                first = fv;
            else if (collapsed && fv != first)
                collapsed = false;
            for (std::size_t i = 0; i < m; ++i) means[b * m + i] += fv[i];
        }
        for (std::size_t i = 0; i < m; ++i) means[b * m + i] /= static_cast<double>(per_batch);
    }

    BarFEstimate out;
    out.value.assign(m, 0.0);
    out.stderr_.assign(m, 0.0);
    if (collapsed) {
        out.value = first;
    } else {
        double worst_r = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double mu = 0.0;
            for (std::size_t b = 0; b < B; ++b) mu += means[b * m + i];
            mu /= static_cast<double>(B);
            double var = 0.0, cov = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const double dv = means[b * m + i] - mu;
                var += dv * dv;
                if (b + 1 < B) cov += dv * (means[(b + 1) * m + i] - mu);
            }
            const double r = var > 0.0 ? cov / var : 0.0;
            worst_r = std::max(worst_r, r);
            out.value[i] = mu;
            out.stderr_[i] = std::sqrt(var / static_cast<double>(B - 1) / static_cast<double>(B));
        }
        out.batch_correlation = worst_r;
        if (worst_r > 0.3) {
            out.converged = false;
            const double r = std::min(worst_r, 0.95);
            for (auto& s : out.stderr_) s *= std::sqrt((1.0 + r) / (1.0 - r));
        }
    }

    // Synchronous coupling of two frozen trajectories: E|Y^{y1}_t - Y^{y2}_t|^2 against e^{-rate t}.
    if (budget.decay_pairs > 0 && spec.params.beta1 > 0.0) {
        const double t_fit = std::min(std::max(budget.burn_in, 10.0 * dt), 4.0 / spec.params.beta1);
        const std::size_t fit_steps = std::max<std::size_t>(1, static_cast<std::size_t>(t_fit / dt));
        const std::size_t samples = std::min<std::size_t>(20, fit_steps);
        const std::size_t stride = fit_steps / samples;
        std::vector<double> acc(samples + 1, 0.0);
        std::vector<double> y1(n), y2(n), f1(n), g1(n * e);
        for (std::size_t p = 0; p < budget.decay_pairs; ++p) {
            auto prng = gaussian::make_stream(budget.seed, 1 + p);
            std::normal_distribution<double> pg(0.0, std::sqrt(dt));
            y1 = spec.y0;
            y2 = spec.y0;
            for (auto& v : y2) v += 1.0;
            acc[0] += static_cast<double>(n);
            for (std::size_t k = 1; k <= samples * stride; ++k) {
                for (auto& v : dw) v = pg(prng);
                field.corrected(x, y1, f0, g0);
                field.corrected(x, y2, f1, g1);
                em_update(y1, f0, g0, dw, dt, 1.0, e);
                em_update(y2, f1, g1, dw, dt, 1.0, e);
                if (k % stride == 0) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < n; ++i) s += (y1[i] - y2[i]) * (y1[i] - y2[i]);
                    acc[k / stride] += s;
                }
            }
        }
        double sx = 0, sy = 0, sxx = 0, sxy = 0, cnt = 0;
        for (std::size_t q = 0; q <= samples; ++q) {
            const double v = acc[q] / static_cast<double>(budget.decay_pairs);
            if (!(v > 1e-12 * acc[0] / static_cast<double>(budget.decay_pairs))) break;
            const double t = static_cast<double>(q * stride) * dt, l = std::log(v);
            sx += t;
            sy += l;
            sxx += t * t;
            sxy += t * l;
            cnt += 1;
        }
        if (cnt >= 2) {
            const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
            out.decay_rate = -slope;
        } else {
            out.decay_rate = std::numeric_limits<double>::infinity();
        }
        out.decay_consistent = out.decay_rate >= 0.8 * spec.params.beta1;
    }
    return out;
}

struct AveragedModel::Cache {
    std::mutex mu;
    std::map<std::vector<double>, BarFEstimate> map;
};

AveragedModel::AveragedModel(SlowFastSpec spec, BarFBudget budget)
    : spec_(std::move(spec)), budget_(budget), cache_(std::make_shared<Cache>()) {
    spec_.validate();
}

AveragedModel AveragedModel::closed_form(SlowFastSpec spec, Closed bar_f, double lipschitz) {
    require(static_cast<bool>(bar_f), "closed-form averaged drift is empty");
    AveragedModel out(std::move(spec));
    out.closed_ = std::move(bar_f);
    out.lip_ = lipschitz;
    return out;
}

BarFEstimate AveragedModel::estimate(std::span<const double> x) const {
    if (closed_) {
        BarFEstimate e;
        e.value = closed_(x);
        e.stderr_.assign(e.value.size(), 0.0);
        return e;
    }
    std::vector<double> key(x.begin(), x.end());
    {
        std::lock_guard lock(cache_->mu);
        auto it = cache_->map.find(key);
        if (it != cache_->map.end()) return it->second;
    }
    BarFEstimate e = estimate_bar_f(spec_, x, budget_);
    std::lock_guard lock(cache_->mu);
    cache_->map[key] = e;
    return e;
}

std::vector<double> AveragedModel::bar_f(std::span<const double> x) const { return estimate(x).value; }

std::size_t AveragedModel::cache_size() const {
    std::lock_guard lock(cache_->mu);
    return cache_->map.size();
}

double AveragedModel::lipschitz_spot_check(std::size_t pairs, std::uint64_t seed, double radius) {
    auto rng = gaussian::make_stream(seed, 0);
    std::uniform_real_distribution<double> u(-radius, radius);
    const std::size_t m = spec_.m;
    std::vector<double> x1(m), x2(m);
    double worst = 0.0;
    for (std::size_t p = 0; p < pairs; ++p) {
        double dist = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            x1[i] = spec_.x0[i] + u(rng);
            x2[i] = spec_.x0[i] + u(rng);
            dist += (x1[i] - x2[i]) * (x1[i] - x2[i]);
        }
        dist = std::sqrt(dist);
        if (dist < 1e-6) continue;
        const auto a = bar_f(x1), b = bar_f(x2);
        double df = 0.0;
        for (std::size_t i = 0; i < m; ++i) df += (a[i] - b[i]) * (a[i] - b[i]);
        worst = std::max(worst, std::sqrt(df) / dist);
    }
    lip_ = worst;
    return worst;
}

SmoothFunction4 AveragedModel::as_function() const {
    const AveragedModel self = *this;
    controlled::DerivativeFn eval = [self](std::span<const double> x, std::span<double> out) {
        const auto v = self.bar_f(x);
        std::copy(v.begin(), v.end(), out.begin());
    };
    return controlled::finite_difference_adapter(std::move(eval), spec_.m, spec_.m,
                                                 std::max(lip_, spec_.params.lipschitz));
}

std::vector<double> averaged_solution(const AveragedModel& model, const std::vector<double>& grid,
                                      std::size_t substeps) {
    require(grid.size() >= 1 && substeps >= 1, "averaged solution needs a grid");
    const std::size_t m = model.spec().m;
    std::vector<double> out(model.spec().x0);
    out.reserve(grid.size() * m);
    std::vector<double> x(model.spec().x0), tmp(m);
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        const double h = (grid[k + 1] - grid[k]) / static_cast<double>(substeps);
        for (std::size_t s = 0; s < substeps; ++s) {
            const auto k1 = model.bar_f(x);
            for (std::size_t i = 0; i < m; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
            const auto k2 = model.bar_f(tmp);
            for (std::size_t i = 0; i < m; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
            const auto k3 = model.bar_f(tmp);
            for (std::size_t i = 0; i < m; ++i) tmp[i] = x[i] + h * k3[i];
            const auto k4 = model.bar_f(tmp);
            for (std::size_t i = 0; i < m; ++i) x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.insert(out.end(), x.begin(), x.end());
    }
    return out;
}

std::vector<double> SlowFastGrid::macro_grid() const { return algebra::uniform_grid(0.0, horizon, macro_steps); }

SlowFastGrid SlowFastGrid::make(const SlowFastSpec& spec, double horizon, std::size_t macro_steps) {
    require(horizon > 0.0 && macro_steps >= 1, "grid needs a positive horizon and steps");
    SlowFastGrid g;
    g.horizon = horizon;
    g.macro_steps = macro_steps;
    const double h = g.macro_dt();
    const double target = std::min(spec.delta / 50.0, h / 20.0);
    g.micro_per_macro = static_cast<std::size_t>(std::ceil(h / target - 1e-9));
    return g;
}

SlowFastNoise sample_noise(const SlowFastSpec& spec, const SlowFastGrid& grid, std::mt19937_64& rng) {
    gaussian::FbmSpec fs;
    fs.hurst = spec.hurst;
    fs.dim = spec.d;
    fs.steps = grid.macro_steps;
    fs.horizon = grid.horizon;
    fs.test_mode = spec.test_mode;
    SlowFastNoise out;
    out.fbm = gaussian::FbmSampler(fs).sample(rng);
    std::normal_distribution<double> gauss(0.0, std::sqrt(grid.micro_dt()));
    out.dw.resize(grid.micro_steps() * spec.e);
    for (auto& v : out.dw) v = gauss(rng);
    return out;
}

double SimulationOptions::h_value(double eps) const { return h > 0.0 ? h : std::pow(eps, -theta / 2.0); }

PiecewiseLinearPath SlowFastPath::slow_path() const { return PiecewiseLinearPath(grid.macro_grid(), slow, m); }

SlowFastPath simulate_slow_fast(const SlowFastSpec& spec, const SlowFastGrid& grid, const SlowFastNoise& noise,
                                const SimulationOptions& opts) {
    spec.validate();
    require(grid.macro_steps >= 1 && grid.micro_per_macro >= 1, "grid needs positive step counts");
    require(grid.micro_dt() <= spec.delta / 50.0 * (1.0 + 1e-12), "fast step must not exceed delta / 50");
    require(noise.fbm.points() == grid.macro_steps + 1 && noise.fbm.dim() == spec.d,
            "fBM noise does not match the macro grid");
    require(noise.dw.size() == grid.micro_steps() * spec.e, "BM increments do not match the micro grid");
    const std::size_t m = spec.m, n = spec.n, e = spec.e, M = grid.micro_per_macro;
    const double dt = grid.micro_dt(), a = dt / spec.delta, b = 1.0 / std::sqrt(spec.delta);

    const auto lift = gaussian::lift_fbm(noise.fbm, exponents_for_hurst(spec.hurst));
    auto driver = roughpath::dilate(lift, std::sqrt(spec.eps));
    double cv = 0.0;
    std::vector<double> vcells;
    std::vector<double> vp;
    if (opts.mode != SimulationMode::Plain) {
        require(opts.ctrl.has_value(), "controlled modes need a control");
        const auto& c = *opts.ctrl;
        c.validate();
        require(c.fbm_dim == spec.d && c.bm_dim == e, "control dimensions do not match the noise");
        require(std::abs(c.cells.back() - grid.horizon) <= 1e-12 * grid.horizon, "control cells must cover the horizon");
        double us = 1.0;
        if (opts.mode == SimulationMode::ControlledLdp) {
            cv = 1.0 / std::sqrt(spec.delta * spec.eps);
        } else {
            const double h = opts.h_value(spec.eps);
            us = std::sqrt(spec.eps) * h;
            cv = h / std::sqrt(spec.delta);
        }
        CameronMartinControl u = c;
        u.bm_dim = 0;
        u.vp.clear();
        for (auto& v : u.hu) v *= us;
        driver = gaussian::translate(driver, u);
        vcells = c.cells;
        vp = c.vp;
    }

    FastField field(spec);
    SlowFastPath out;
    out.grid = grid;
    out.m = m;
    out.n = n;
    out.slow.reserve((grid.macro_steps + 1) * m);
    out.slow.assign(spec.x0.begin(), spec.x0.end());
    out.fast.reserve((grid.micro_steps() + 1) * n);
    out.fast.assign(spec.y0.begin(), spec.y0.end());

    std::vector<double> x(spec.x0), y(spec.y0), fd(n), g(n * e), vcur(e, 0.0);
    std::vector<std::vector<double>> ys(M, std::vector<double>(n));
    const std::vector<double> weights(M, 1.0 / static_cast<double>(M));
    std::size_t cell = 0;
    for (std::size_t j = 0; j < grid.macro_steps; ++j) {
        for (std::size_t r = 0; r < M; ++r) {
            const std::size_t k = j * M + r;
            std::copy(y.begin(), y.end(), ys[r].begin());
            field.corrected(x, y, fd, g);
            if (cv != 0.0) {
                const double t = static_cast<double>(k) * dt;
                while (cell + 2 < vcells.size() && t >= vcells[cell + 1]) ++cell;
                for (std::size_t i = 0; i < e; ++i) vcur[i] = vp[cell * e + i];
                for (std::size_t o = 0; o < n; ++o) {
                    double gv = 0.0;
                    for (std::size_t i = 0; i < e; ++i) gv += g[o * e + i] * vcur[i];
                    fd[o] += cv * spec.delta * gv;
                }
            }
            em_update(y, fd, g, std::span<const double>(noise.dw).subspan(k * e, e), a, b, e);
            check_cap(y, opts.cap, static_cast<double>(k + 1) * dt);
            out.fast.insert(out.fast.end(), y.begin(), y.end());
        }
        rde::RdeProblem p;
        p.drift = controlled::average_in_second(spec.f, m, ys, weights);
        p.sigma = spec.sigma;
        p.drift_lipschitz = spec.params.lipschitz;
        p.driver = std::make_shared<const roughpath::RoughPath>(roughpath::restrict(driver, j, j + 1));
        p.initial = x;
        const auto sol = rde::solve_rde(p, opts.solver);
        if (sol.partial) throw std::runtime_error("slow solver exhausted its iteration budget");
        const auto xe = sol.state(sol.points() - 1);
        std::copy(xe.begin(), xe.end(), x.begin());
        out.slow.insert(out.slow.end(), x.begin(), x.end());
    }
    return out;
}

std::vector<double> auxiliary_fast(const SlowFastSpec& spec, const SlowFastPath& path, double Delta,
                                   const SlowFastNoise& noise, double cap) {
    spec.validate();
    require(path.m == spec.m && path.n == spec.n, "path does not match the spec");
    const auto& grid = path.grid;
    require(noise.dw.size() == grid.micro_steps() * spec.e, "BM increments do not match the micro grid");
    require(Delta > 0.0, "Delta must be positive");
    const std::size_t dm = block_micro_steps(grid, Delta);
    const std::size_t n = spec.n, e = spec.e, M = grid.micro_per_macro;
    const double dt = grid.micro_dt(), a = dt / spec.delta, b = 1.0 / std::sqrt(spec.delta);
    FastField field(spec);
    std::vector<double> out;
    out.reserve((grid.micro_steps() + 1) * n);
    out.assign(spec.y0.begin(), spec.y0.end());
    std::vector<double> y(spec.y0), fd(n), g(n * e);
    for (std::size_t k = 0; k < grid.micro_steps(); ++k) {
        const std::size_t J = (k / dm) * dm / M;
        field.corrected(path.slow_at(J), y, fd, g);
        em_update(y, fd, g, std::span<const double>(noise.dw).subspan(k * e, e), a, b, e);
        check_cap(y, cap, static_cast<double>(k + 1) * dt);
        out.insert(out.end(), y.begin(), y.end());
    }
    return out;
}

double fast_gap_integral(const SlowFastPath& path, std::span<const double> aux) {
    require(aux.size() == path.fast.size(), "auxiliary path does not match the fast path");
    const std::size_t n = path.n, K = path.grid.micro_steps();
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t i = 0; i < n; ++i) {
            const double d = path.fast[k * n + i] - aux[k * n + i];
            s += d * d;
        }
    return s * path.grid.micro_dt();
}

double delta_schedule(double delta, double beta) {
    require(delta > 0.0 && delta < 1.0 && beta > 0.0, "schedule needs delta in (0, 1) and beta > 0");
    return std::pow(delta, 1.0 / (4.0 * beta)) * std::log(1.0 / delta);
}

double round_delta(double Delta, const SlowFastGrid& grid) {
    require(Delta > 0.0, "Delta must be positive");
    if (Delta >= grid.horizon) return grid.horizon;
    const double h = grid.macro_dt();
    std::size_t best = 1;
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k <= grid.macro_steps; k *= 2) {
        if (grid.macro_steps % k != 0) break;
        const double g = std::abs(std::log(static_cast<double>(k) * h) - std::log(Delta));
        if (g < gap) {
            gap = g;
            best = k;
        }
    }
    return static_cast<double>(best) * h;
}

KhasminskiiTerms khasminskii_terms(const SlowFastSpec& spec, const AveragedModel& model, const SlowFastPath& path,
                                   std::span<const double> aux, double Delta, double eta) {
    require(aux.size() == path.fast.size(), "auxiliary path does not match the fast path");
    const auto& grid = path.grid;
    const std::size_t dm = block_micro_steps(grid, Delta);
    const std::size_t M = grid.micro_per_macro;
    require(dm % M == 0, "Delta must be a multiple of the macro step");
    const std::size_t m = spec.m, n = spec.n, N = grid.macro_steps;
    const double dt = grid.micro_dt();
    FastField field(spec);

    // bar_f along the slow path at macro points, linear in between
    std::vector<double> fbar((N + 1) * m);
    for (std::size_t J = 0; J <= N; ++J) {
        const auto v = model.bar_f(path.slow_at(J));
        std::copy(v.begin(), v.end(), fbar.begin() + static_cast<std::ptrdiff_t>(J * m));
    }
    std::vector<double> xs(m), fbs(m), f1(m), f2(m), f3(m), m1(m, 0.0), m2(m, 0.0), m3(m, 0.0), m4(m, 0.0);
    std::vector<double> m3_macro((N + 1) * m, 0.0);
    KhasminskiiTerms out;
    for (std::size_t k = 0; k < grid.micro_steps(); ++k) {
        const std::size_t J = k / M, r = k % M, Jb = (k / dm) * dm / M;
        const auto x0 = path.slow_at(J), x1 = path.slow_at(J + 1), xb = path.slow_at(Jb);
        const double w = static_cast<double>(r) / static_cast<double>(M);
        for (std::size_t i = 0; i < m; ++i) {
            xs[i] = x0[i] + w * (x1[i] - x0[i]);
            fbs[i] = fbar[J * m + i] + w * (fbar[(J + 1) * m + i] - fbar[J * m + i]);
        }
        const auto y = path.fast_at(k);
        const std::span<const double> yh(aux.data() + k * n, n);
        field.slow_drift(xs, y, f1);
        field.slow_drift(xb, y, f2);
        field.slow_drift(xb, yh, f3);
        for (std::size_t i = 0; i < m; ++i) {
            const double fb = fbar[Jb * m + i];
            m1[i] += (f1[i] - f2[i]) * dt;
            m2[i] += (f2[i] - f3[i]) * dt;
            m3[i] += (f3[i] - fb) * dt;
            m4[i] += (fb - fbs[i]) * dt;
        }
        out.m1 = std::max(out.m1, sq_norm(m1));
        out.m2 = std::max(out.m2, sq_norm(m2));
        out.m4 = std::max(out.m4, sq_norm(m4));
        if ((k + 1) % M == 0) std::copy(m3.begin(), m3.end(), m3_macro.begin() + static_cast<std::ptrdiff_t>((k + 1) / M * m));
    }
    const double h3 = roughpath::holder_seminorm(grid.macro_grid(), m3_macro, m, eta);
    out.m3 = h3 * h3;
    return out;
}

std::vector<KhasminskiiRow> khasminskii_report(const SlowFastSpec& base, const AveragedModel& model,
                                               const KhasminskiiConfig& cfg) {
    require(!cfg.eps.empty() && cfg.runs >= 2, "report needs eps values and at least two runs");
    std::vector<KhasminskiiRow> rows;
    for (double eps : cfg.eps) {
        SlowFastSpec spec = base;
        spec.eps = eps;
        spec.delta = std::pow(eps, cfg.delta_power);
        const auto grid = SlowFastGrid::make(spec, cfg.horizon, cfg.macro_steps);
        KhasminskiiRow row;
        row.eps = eps;
        row.delta = spec.delta;
        row.Delta = round_delta(delta_schedule(spec.delta, cfg.beta), grid);
        row.runs = cfg.runs;
        std::array<double, 4> s{}, s2{};
        double gap = 0.0;
        for (std::size_t r = 0; r < cfg.runs; ++r) {
            auto rng = gaussian::make_stream(cfg.seed, r);
            const auto noise = sample_noise(spec, grid, rng);
            const auto path = simulate_slow_fast(spec, grid, noise, cfg.sim);
            const auto aux = auxiliary_fast(spec, path, row.Delta, noise, cfg.sim.cap);
            const auto t = khasminskii_terms(spec, model, path, aux, row.Delta, cfg.eta);
            const std::array<double, 4> v{t.m1, t.m2, t.m3, t.m4};
            for (std::size_t i = 0; i < 4; ++i) {
                s[i] += v[i];
                s2[i] += v[i] * v[i];
            }
            gap += fast_gap_integral(path, aux);
        }
        const double R = static_cast<double>(cfg.runs);
        std::array<double, 4> mean{}, se{};
        for (std::size_t i = 0; i < 4; ++i) {
            mean[i] = s[i] / R;
            se[i] = std::sqrt(std::max(0.0, s2[i] / R - mean[i] * mean[i]) / (R - 1.0));
        }
        row.mean = {mean[0], mean[1], mean[2], mean[3]};
        row.stderr_ = {se[0], se[1], se[2], se[3]};
        row.gap = gap / R;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace roughdev::slowfast
