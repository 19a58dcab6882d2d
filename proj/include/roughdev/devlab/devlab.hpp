#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "roughdev/algebra/path.hpp"
#include "roughdev/controlled/smooth_function.hpp"
#include "roughdev/gaussian/gaussian.hpp"
#include "roughdev/rde/rde.hpp"
#include "roughdev/slowfast/slowfast.hpp"

namespace roughdev::devlab {

using algebra::PiecewiseLinearPath;
using controlled::SmoothFunction4;
using gaussian::CameronMartinControl;

using rde::BudgetExhausted;

enum class HMode { Clt, Ldp, Mdp };

/// h(eps): 1, 1/sqrt(eps), eps^{-theta/2}.
double h_of(HMode mode, double eps, double theta);
/// Speed a(eps) of the deviation principle: eps for LDP, 1/h^2 otherwise.
double speed_of(HMode mode, double eps, double theta);

/// dX = f(X) dt + sqrt(eps) sigma(X) d(b^H, w) with sigma: R^m -> R^{m x (d+e)}, fBM columns first.
struct SingleScaleSpec {
    SmoothFunction4 drift;
    SmoothFunction4 sigma;
    double drift_lipschitz = 1.0;
    std::size_t m = 1, d = 1, e = 0;
    double hurst = 0.3;
    bool test_mode = false;
    std::vector<double> x0;
    void validate() const;
};

enum class EventKind { Terminal, SupNorm };

/// Terminal: path_T[c] >= a. SupNorm: max_t |path_t[c]| >= a.
struct Event {
    EventKind kind = EventKind::Terminal;
    std::size_t component = 0;
    double threshold = 1.0;

    double functional(const PiecewiseLinearPath& path) const;
    bool hit(const PiecewiseLinearPath& path) const { return functional(path) >= threshold; }
    double violation(const PiecewiseLinearPath& path) const;
};

enum class BaseKind { SingleScale, SlowFast };

struct DeviationSpec {
    BaseKind base = BaseKind::SingleScale;
    SingleScaleSpec single;
    std::optional<slowfast::SlowFastSpec> slow_fast;
    std::shared_ptr<const slowfast::AveragedModel> model;  // averaged drift for the slow-fast base
    double delta_power = 2.0;                               // slow-fast: delta = eps^power

    HMode h_mode = HMode::Ldp;
    double theta = 0.5;
    std::vector<double> eps{0.5, 0.25, 0.125};
    Event event;
    std::size_t mc_budget = 10000;
    std::uint64_t seed = 1;
    std::size_t threads = 1;  // MC workers; trajectory k always uses stream (seed, k)

    double horizon = 1.0;
    std::size_t steps = 32;           // MC grid
    std::size_t skeleton_steps = 64;  // skeleton grid
    std::size_t cells = 32;           // control cells

    rde::SolverConfig solver;
    rde::YoungConfig young;

    /// Rejects MDP schedules where h does not grow or sqrt(eps) h does not shrink.
    void validate() const;
    std::size_t state_dim() const;
    std::size_t fbm_dim() const;
    std::size_t bm_dim() const;
    double hurst() const;
    std::vector<double> skeleton_grid() const;
    std::vector<double> mc_grid() const;
    std::vector<double> control_cells() const;
};

/// Z_t = (X_t - X^0_t) / (sqrt(eps) h(eps)) pointwise.
PiecewiseLinearPath deviation_process(const PiecewiseLinearPath& trajectory, const PiecewiseLinearPath& limit,
                                      double eps, HMode mode, double theta = 0.5);

/// Noiseless limit on the MC grid: the RDE solver with the driver dilated to 0, or the averaged ODE.
PiecewiseLinearPath limit_path(const DeviationSpec& spec);

/// One MC trajectory of the slow (or single-scale) state on the MC grid for trajectory index k.
PiecewiseLinearPath sample_trajectory(const DeviationSpec& spec, double eps, std::uint64_t index);

struct RateValue {
    double value = 0.0;
    PiecewiseLinearPath skeleton;  // X for LDP, the linearized deviation otherwise
};

/// 1/2 ||(u, v)||^2 and the skeleton solved by the Young solver.
RateValue rate_value(const CameronMartinControl& ctrl, const DeviationSpec& spec);
RateValue rate_value(const CameronMartinControl& ctrl, const DeviationSpec& spec, const rde::YoungConfig& young);

struct OptimizerConfig {
    std::size_t max_iterations = 60;
    double tol = 1e-6;          // feasibility: violation below tol
    double fd_step = 1e-5;
    std::size_t substeps = 8;   // fixed Young resolution inside the loop
    double step_tol = 1e-10;
};

struct RateFunctionResult {
    CameronMartinControl ctrl;
    double value = 0.0;
    PiecewiseLinearPath skeleton;
    std::vector<double> trace;  // best feasible value after each iteration
    bool feasible = false;
    double violation = 0.0;
    std::size_t evaluations = 0;
    std::size_t iterations = 0;
};

/// Minimizes 1/2 ||(u, v)||^2 subject to the event by sequential quadratic steps on the control coefficients
/// (finite-difference gradients of the skeleton map, l1-penalty line search with adaptive weight).
/// Without init it starts from 0 and from the cheapest feasible_corpus control and keeps the better result.
RateFunctionResult optimize_rate(const DeviationSpec& spec, const std::optional<CameronMartinControl>& init = {},
                                 const OptimizerConfig& cfg = {});

/// Feasible controls for invariant checks: constant, ramp and random directions (both signs), each scaled
/// by bisection to the smallest multiple that meets the event. Directions that never meet it are skipped.
std::vector<CameronMartinControl> feasible_corpus(const DeviationSpec& spec, std::size_t random = 4,
                                                  std::uint64_t seed = 3);

struct TailEstimate {
    std::size_t n = 0;
    std::size_t hits = 0;
    double p = 0.0;
    double lo = 0.0, hi = 1.0;  // Wilson 95% interval
    bool upper_only = false;    // no hits: hi is an upper bound only
};

TailEstimate wilson(std::size_t hits, std::size_t n, double z = 1.959963984540054);

/// Crude Monte Carlo of P(event) at eps over mc_budget trajectories (event on X for LDP, on Z otherwise).
TailEstimate mc_tail(const DeviationSpec& spec, double eps, std::size_t budget = 0);

struct SlopePoint {
    double eps = 0.0;
    double speed = 0.0;
    TailEstimate tail;
    bool used = false;
};

struct SlopeReport {
    std::vector<SlopePoint> points;
    double slope = 0.0;     // fitted limit of -a(eps) log P
    double slope_se = 0.0;
    double rate = 0.0;      // optimized rate value
    double gap = 0.0;       // |slope - rate| / rate (absolute when rate = 0)
    double gap_se = 0.0;
    bool truncated = false;  // points with fewer than min_hits hits were dropped
};

/// Regresses -a(eps) (log P - log(a(eps)) / 2) on [1, a(eps)] with hit-count weights; the intercept is the slope.
SlopeReport ldp_slope_check(const DeviationSpec& spec, double rate, std::size_t min_hits = 10);
/// Slope fit from given tail estimates.
SlopeReport fit_slope(const std::vector<SlopePoint>& points, double rate, std::size_t min_hits = 10);

/// a^2 / (2 T^{2H}): rate of {b_T >= a} for unit-variance additive noise.
double additive_terminal_rate(double hurst, double horizon, double a);
/// Var(int_0^T e^{-lambda (T - s)} db^H_s) by adaptive quadrature on the fBM covariance.
double ou_terminal_variance(double hurst, double horizon, double lambda);

}  // namespace roughdev::devlab
