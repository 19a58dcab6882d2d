#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "roughdev/rde/rde.hpp"

using namespace roughdev::rde;
using roughdev::algebra::PiecewiseLinearPath;
using roughdev::algebra::uniform_grid;
using roughdev::controlled::affine;
using roughdev::controlled::constant;
using roughdev::controlled::identity_map;
using roughdev::controlled::scaled;
using roughdev::controlled::term_function;
using roughdev::controlled::TermSum;
using roughdev::roughpath::dilate;
using roughdev::roughpath::from_signature_path;
using roughdev::roughpath::HolderExponents;
using roughdev::roughpath::restrict;

namespace {

std::shared_ptr<const RoughPath> lift(const std::vector<double>& t, const std::vector<double>& v, std::size_t d) {
    return std::make_shared<const RoughPath>(from_signature_path(PiecewiseLinearPath(t, v, d), HolderExponents()));
}

double smooth_x(double s) { return 0.5 * std::sin(2.0 * M_PI * s) + s; }

std::shared_ptr<const RoughPath> smooth_scalar(std::size_t n) {
    const auto t = uniform_grid(0.0, 1.0, n);
    std::vector<double> v;
    for (double s : t) v.push_back(smooth_x(s));
    return lift(t, v, 1);
}

std::vector<double> brownian(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    std::vector<double> v((n + 1) * d, 0.0);
    for (std::size_t k = 1; k <= n; ++k)
        for (std::size_t i = 0; i < d; ++i) v[k * d + i] = v[(k - 1) * d + i] + std::sqrt(1.0 / n) * n01(rng);
    return v;
}

std::vector<double> subsample(const std::vector<double>& v, std::size_t d, std::size_t stride) {
    std::vector<double> out;
    for (std::size_t k = 0; k * d < v.size(); k += stride) out.insert(out.end(), v.begin() + k * d, v.begin() + (k + 1) * d);
    return out;
}

SmoothFunction4 linear_scalar(double c) {
    std::vector<TermSum> s(1);
    s[0].monomials = {{c, {1}}};
    return term_function(1, s, std::abs(c));
}

// sigma: R^2 -> R^{2x2} with bounded smooth entries
SmoothFunction4 nonlinear_sigma() {
    std::vector<TermSum> c(4);
    c[0].sinusoids = {{1.0, {1.0, 0.0}, 0.3}};
    c[1].sinusoids = {{0.4, {0.5, -1.0}, 0.0}};
    c[2].sinusoids = {{0.6, {0.0, 1.0}, 1.2}};
    c[3].monomials = {{0.8, {0, 0}}};
    c[3].sinusoids = {{0.3, {1.0, 1.0}, 0.0}};
    return term_function(2, std::move(c), 8.0);
}

SmoothFunction4 nonlinear_drift() {
    std::vector<TermSum> c(2);
    c[0].monomials = {{-0.5, {1, 0}}};
    c[0].sinusoids = {{0.2, {0.0, 1.0}, 0.0}};
    c[1].monomials = {{-1.0, {0, 1}}};
    return term_function(2, std::move(c), 3.0);
}

RdeProblem nonlinear_problem(std::shared_ptr<const RoughPath> x) {
    RdeProblem p;
    p.drift = nonlinear_drift();
    p.sigma = nonlinear_sigma();
    p.drift_lipschitz = 1.0;
    p.driver = std::move(x);
    p.initial = {0.3, -0.7};
    return p;
}

double rk4_decay(double y0, double T, std::size_t n) {
    double y = y0;
    const double h = T / n;
    auto f = [](double v) { return -v; };
    for (std::size_t k = 0; k < n; ++k) {
        const double k1 = f(y), k2 = f(y + 0.5 * h * k1), k3 = f(y + 0.5 * h * k2), k4 = f(y + h * k3);
        y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return y;
}

}  // namespace

TEST_CASE("identity diffusion reproduces the driver") {
    const auto t = uniform_grid(0.0, 1.0, 64);
    RdeProblem p;
    p.drift = constant(2, {0.0, 0.0});
    p.sigma = constant(2, {1.0, 0.0, 0.0, 1.0});
    p.driver = lift(t, brownian(64, 2, 1), 2);
    p.initial = {1.0, -2.0};
    const auto sol = solve_rde(p);
    CHECK_FALSE(sol.partial);
    for (std::size_t k = 0; k < sol.points(); ++k) {
        const auto x = p.driver->value(k);
        CHECK(std::abs(sol.state(k)[0] - (1.0 + x[0])) < 1e-13);
        CHECK(std::abs(sol.state(k)[1] - (-2.0 + x[1])) < 1e-13);
    }
    CHECK(sol.growth.lambda_clamped);
}

TEST_CASE("zero diffusion matches a fourth-order integrator") {
    RdeProblem p;
    p.drift = linear_scalar(-1.0);
    p.drift_lipschitz = 1.0;
    p.sigma = constant(1, {0.0});
    p.driver = smooth_scalar(2048);
    p.initial = {1.0};
    const auto sol = solve_rde(p);
    const double ref = rk4_decay(1.0, 1.0, 2048);
    CHECK(std::abs(sol.state(2048)[0] - ref) < 1e-8);
    CHECK(std::abs(sol.state(2048)[0] - std::exp(-1.0)) < 1e-8);
}

TEST_CASE("linear equation against the exponential on a smooth driver") {
    RdeProblem p;
    p.drift = constant(1, {0.0});
    p.sigma = linear_scalar(1.0);
    p.initial = {1.0};
    double prev = 0.0;
    for (std::size_t n : {256u, 512u, 1024u, 2048u}) {
        p.driver = smooth_scalar(n);
        const auto sol = solve_rde(p);
        double err = 0.0;
        for (std::size_t k = 0; k <= n; ++k)
            err = std::max(err, std::abs(sol.state(k)[0] - std::exp(smooth_x(sol.grid()[k]) - smooth_x(0.0))));
        if (n == 2048) CHECK(err <= 5e-3);
        if (prev > 0.0) CHECK(err < prev);
        prev = err;
    }
}

TEST_CASE("linear equation on Brownian drivers converges at first order") {
    RdeProblem p;
    p.drift = constant(1, {0.0});
    p.sigma = linear_scalar(1.0);
    p.initial = {1.0};
    const std::size_t fine = 4096;
    const auto tf = uniform_grid(0.0, 1.0, fine);
    std::vector<double> errs(4, 0.0);
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const auto w = brownian(fine, 1, 100 + seed);
        for (std::size_t r = 0; r < 4; ++r) {
            const std::size_t stride = std::size_t{8} >> r;
            const auto v = subsample(w, 1, stride);
            p.driver = lift(subsample(tf, 1, stride), v, 1);
            const auto sol = solve_rde(p);
            double err = 0.0;
            for (std::size_t k = 0; k < sol.points(); ++k) err = std::max(err, std::abs(sol.state(k)[0] - std::exp(v[k])));
            errs[r] += err;
        }
    }
    for (std::size_t r = 1; r < 4; ++r) {
        const double ratio = errs[r] / errs[r - 1];
        CHECK(ratio >= 0.35);
        CHECK(ratio <= 0.65);
    }
}

TEST_CASE("solution derivatives are the vector field on the solution") {
    const auto t = uniform_grid(0.0, 1.0, 128);
    const auto p = nonlinear_problem(lift(t, brownian(128, 2, 7), 2));
    const auto sol = solve_rde(p);
    const auto field = augmented_field(p);
    const std::size_t m = 2, D = 3;
    double worst = 0.0;
    for (std::size_t k = 0; k < sol.points(); ++k) {
        const auto y = sol.state(k);
        const auto v = field.value(y);
        const auto g = field.gradient(y);
        for (std::size_t w = 0; w < m * D; ++w) worst = std::max(worst, std::abs(sol.path.ydag(k)[w] - v[w]));
        for (std::size_t o = 0; o < m; ++o)
            for (std::size_t i = 0; i < D; ++i)
                for (std::size_t j = 0; j < D; ++j) {
                    double s = 0.0;
                    for (std::size_t l = 0; l < m; ++l) s += g[(o * D + j) * m + l] * v[l * D + i];
                    worst = std::max(worst, std::abs(sol.path.ydagdag(k)[(o * D + i) * D + j] - s));
                }
    }
    CHECK(worst < 1e-10);
    for (const auto& r : sol.step_log) CHECK(r.contraction < 1.0);
}

TEST_CASE("multi-step windows reach the same fixed point") {
    const auto t = uniform_grid(0.0, 1.0, 96);
    const auto p = nonlinear_problem(lift(t, brownian(96, 2, 8), 2));
    const auto one = solve_rde(p);
    SolverConfig cfg;
    cfg.lambda_override = 0.2;
    cfg.max_subinterval_steps = 16;
    const auto many = solve_rde(p, cfg);
    CHECK(many.step_log.size() < one.step_log.size());
    CHECK_FALSE(many.growth.lambda_clamped);
    double worst = 0.0;
    for (std::size_t i = 0; i < one.path.y_data().size(); ++i)
        worst = std::max(worst, std::abs(one.path.y_data()[i] - many.path.y_data()[i]));
    CHECK(worst < 1e-9);
    for (const auto& r : many.step_log) {
        CHECK(r.iterations > 2);
        CHECK(r.contraction < 1.0);
    }
}

TEST_CASE("flow property") {
    const auto t = uniform_grid(0.0, 1.0, 128);
    auto x = lift(t, brownian(128, 2, 9), 2);
    const auto p = nonlinear_problem(x);
    const auto full = solve_rde(p);
    RdeProblem second = p;
    second.driver = std::make_shared<const RoughPath>(restrict(*x, 64, 128));
    second.initial.assign(full.state(64).begin(), full.state(64).end());
    const auto tail = solve_rde(second);
    for (std::size_t k = 0; k <= 64; ++k)
        for (std::size_t o = 0; o < 2; ++o) CHECK(std::abs(tail.state(k)[o] - full.state(64 + k)[o]) < 1e-10);
}

TEST_CASE("dilated driver equals scaled diffusion") {
    const auto t = uniform_grid(0.0, 1.0, 128);
    auto x = lift(t, brownian(128, 2, 10), 2);
    const double eps = 0.09;
    auto a = nonlinear_problem(std::make_shared<const RoughPath>(dilate(*x, std::sqrt(eps))));
    auto b = nonlinear_problem(x);
    b.sigma = scaled(b.sigma, std::sqrt(eps));
    const auto sa = solve_rde(a), sb = solve_rde(b);
    double worst = 0.0;
    for (std::size_t i = 0; i < sa.path.y_data().size(); ++i)
        worst = std::max(worst, std::abs(sa.path.y_data()[i] - sb.path.y_data()[i]));
    CHECK(worst < 1e-9);
}

TEST_CASE("refinement changes shrink monotonically") {
    auto make = [](std::size_t n) {
        const auto t = uniform_grid(0.0, 1.0, n);
        std::vector<double> v;
        for (double s : t) v.insert(v.end(), {std::sin(3.0 * s), std::cos(5.0 * s) * s});
        return nonlinear_problem(lift(t, v, 2));
    };
    std::vector<RdeSolution> sols;
    for (std::size_t n : {32u, 64u, 128u, 256u}) sols.push_back(solve_rde(make(n)));
    std::vector<double> changes;
    for (std::size_t r = 1; r < sols.size(); ++r) {
        double c = 0.0;
        for (std::size_t k = 0; k < sols[r - 1].points(); ++k)
            for (std::size_t o = 0; o < 2; ++o) c = std::max(c, std::abs(sols[r].state(2 * k)[o] - sols[r - 1].state(k)[o]));
        changes.push_back(c);
    }
    CHECK(changes[1] < changes[0]);
    CHECK(changes[2] < changes[1]);
}

TEST_CASE("growth diagnostic and step log") {
    const auto t = uniform_grid(0.0, 1.0, 64);
    const auto sol = solve_rde(nonlinear_problem(lift(t, brownian(64, 2, 11), 2)));
    CHECK(sol.step_log.size() == 64);
    CHECK(sol.growth.subintervals == 64);
    CHECK(sol.growth.beta_norm > 0.0);
    CHECK(std::log(sol.growth.beta_norm) <= sol.growth.log_bound);
    CHECK(sol.growth.lambda < 1.0 / 64);
}

TEST_CASE("budget exhaustion returns a flagged partial solution") {
    const auto t = uniform_grid(0.0, 1.0, 64);
    SolverConfig cfg;
    cfg.max_total_iterations = 40;
    const auto sol = solve_rde(nonlinear_problem(lift(t, brownian(64, 2, 12), 2)), cfg);
    CHECK(sol.partial);
    CHECK(sol.points() > 1);
    CHECK(sol.points() < 65);
    CHECK(sol.total_iterations <= 40);
}

TEST_CASE("problem validation") {
    const auto t = uniform_grid(0.0, 1.0, 8);
    auto p = nonlinear_problem(lift(t, brownian(8, 2, 13), 2));
    p.initial = {1.0};
    CHECK_THROWS_AS(solve_rde(p), std::invalid_argument);
    p = nonlinear_problem(lift(t, brownian(8, 1, 13), 1));
    CHECK_THROWS_AS(solve_rde(p), std::invalid_argument);
    SolverConfig cfg;
    cfg.c_beta = 3.0;
    CHECK_THROWS_AS(solve_rde(nonlinear_problem(lift(t, brownian(8, 2, 13), 2)), cfg), std::invalid_argument);
}

TEST_CASE("stability probe") {
    const auto t = uniform_grid(0.0, 1.0, 64);
    auto x = lift(t, brownian(64, 2, 14), 2);
    RdeProblem flat;
    flat.drift = constant(2, {0.0, 0.0});
    flat.sigma = constant(2, {1.0, 0.0, 0.0, 1.0});
    flat.driver = x;
    flat.initial = {0.0, 0.0};

    Perturbation none;
    none.initial_direction = {0.0, 0.0};
    for (double r : stability_probe(flat, none).ratios) CHECK(r == 0.0);

    Perturbation init;
    init.initial_direction = {0.6, -0.8};
    for (double r : stability_probe(flat, init).ratios) CHECK(r == doctest::Approx(1.0).epsilon(1e-9));

    std::vector<double> s;
    for (double u : t) s.insert(s.end(), {std::sin(3.0 * u), std::cos(2.0 * u) - 1.0});
    const auto p = nonlinear_problem(lift(t, s, 2));
    Perturbation both;
    both.initial_direction = {1.0, 0.5};
    for (double u : t) both.driver_direction.insert(both.driver_direction.end(), {u * u, std::sin(u)});
    const auto rep = stability_probe(p, both);
    std::vector<double> sorted(rep.ratios);
    std::sort(sorted.begin(), sorted.end());
    const double med = 0.5 * (sorted[1] + sorted[2]);
    for (double r : rep.ratios) {
        CHECK(std::isfinite(r));
        CHECK(std::abs(r - med) <= 0.2 * med);
    }
    CHECK(rep.sup_ratio == sorted.back());
}

TEST_CASE("Young solver examples") {
    const auto t = uniform_grid(0.0, 2.0, 50);
    std::vector<double> u;
    for (double s : t) u.push_back(std::sin(s) + 0.3 * s);
    YoungProblem yp;
    yp.drift = constant(1, {0.0});
    yp.sigma = constant(1, {1.0});
    yp.control = PiecewiseLinearPath(t, u, 1);
    yp.initial = {0.5};
    const auto sol = solve_young(yp);
    for (std::size_t k = 0; k < t.size(); ++k) CHECK(std::abs(sol.state(k)[0] - (0.5 + u[k] - u[0])) < 1e-13);

    // dZ = -Z dt + dv with v_t = t
    YoungProblem lin;
    lin.drift = linear_scalar(-1.0);
    lin.sigma = constant(1, {1.0});
    lin.control = PiecewiseLinearPath(t, t, 1);
    lin.initial = {0.0};
    YoungConfig cfg;
    cfg.tol = 1e-7;
    const auto z = solve_young(lin, cfg);
    CHECK(z.converged);
    for (std::size_t k = 0; k < t.size(); ++k) CHECK(std::abs(z.state(k)[0] - (1.0 - std::exp(-t[k]))) < 1e-6);
}

TEST_CASE("Young and rough solvers agree on smooth controls") {
    std::mt19937_64 rng(15);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        const double a = u(rng), b = u(rng), c = u(rng), w = 1.0 + 3.0 * std::abs(u(rng));
        std::vector<double> errs;
        for (std::size_t n : {64u, 128u}) {
            const auto t = uniform_grid(0.0, 1.0, n);
            std::vector<double> v;
            for (double s : t) v.insert(v.end(), {a * std::sin(w * s) + b * s, c * s * s});
            YoungProblem yp;
            yp.drift = nonlinear_drift();
            yp.sigma = nonlinear_sigma();
            yp.control = PiecewiseLinearPath(t, v, 2);
            yp.initial = {0.3, -0.7};
            YoungConfig cfg;
            cfg.tol = 1e-9;
            cfg.max_refinements = 14;
            const auto ys = solve_young(yp, cfg);
            const auto rs = solve_rde(nonlinear_problem(lift(t, v, 2)));
            double e = 0.0;
            for (std::size_t k = 0; k <= n; ++k)
                for (std::size_t o = 0; o < 2; ++o) e = std::max(e, std::abs(ys.state(k)[o] - rs.state(k)[o]));
            errs.push_back(e);
        }
        CHECK(errs[0] < 1e-3);
        CHECK(errs[1] < errs[0]);
    }
}

TEST_CASE("rough controls are rejected by the variation check") {
    const auto t = uniform_grid(0.0, 1.0, 4096);
    YoungProblem yp;
    yp.drift = constant(1, {0.0});
    yp.sigma = constant(1, {1.0});
    yp.control = PiecewiseLinearPath(t, brownian(4096, 1, 16), 1);
    yp.initial = {0.0};
    yp.q = 1.2;
    CHECK_THROWS_AS(solve_young(yp), std::invalid_argument);
    std::vector<double> smooth;
    for (double s : t) smooth.push_back(std::sin(4.0 * s));
    yp.control = PiecewiseLinearPath(t, smooth, 1);
    CHECK_NOTHROW(solve_young(yp));
    CHECK(q_variation(t, smooth, 1, 1.0) == doctest::Approx(2.0 - std::sin(4.0)).epsilon(1e-6));
}
