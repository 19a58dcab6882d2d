#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "roughdev/controlled/controlled_path.hpp"
#include "roughdev/controlled/smooth_function.hpp"
#include "roughdev/roughpath/rough_path.hpp"

namespace roughdev::rde {

using controlled::ControlledPath;
using controlled::SmoothFunction4;
using roughpath::HolderMode;
using roughpath::RoughPath;

/// dY = f(Y) dt + sigma(Y) dX on R^m with a d-dimensional driver.
struct RdeProblem {
    SmoothFunction4 drift;   // R^m -> R^m
    SmoothFunction4 sigma;   // R^m -> R^{m x d}, entry o*d + j
    double drift_lipschitz = 0.0;
    std::shared_ptr<const RoughPath> driver;
    std::vector<double> initial;

    std::size_t state_dim() const { return initial.size(); }
    std::size_t driver_dim() const { return driver ? driver->dim() : 0; }
    void validate() const;
};

struct SolverConfig {
    double c_beta = 4.01;
    double nu_hat = 2.01;
    double picard_tol = 1e-10;
    std::size_t max_picard_iterations = 50;
    std::size_t max_subinterval_steps = 64;
    /// Positive value replaces the step-size formula.
    double lambda_override = 0.0;
    /// Total Picard iterations over the run; exceeding it returns a partial solution.
    std::size_t max_total_iterations = 100000000;
    HolderMode holder_mode = HolderMode::Auto;
};

struct StepRecord {
    std::size_t i0 = 0, i1 = 0;
    double lambda = 0.0;
    std::size_t iterations = 0;
    double contraction = 0.0;  // largest ratio of successive Picard distances
    std::size_t halvings = 0;
};

struct GrowthDiag {
    double beta_norm = 0.0;    // discrete beta-Hölder seminorm of Y on the solved range
    double log_bound = 0.0;    // log of (floor(T / lambda) + 1)^{1 - beta}
    double lambda = 0.0;
    bool lambda_clamped = false;  // lambda below one grid step
    std::size_t subintervals = 0;
};

struct RdeSolution {
    /// Time-adjoined driver (coordinate 0 is t) over the solved range.
    std::shared_ptr<const RoughPath> augmented;
    /// Y with Y' = [f | sigma](Y) and Y'' = (grad [f | sigma] . [f | sigma])(Y) relative to augmented.
    ControlledPath path;
    std::vector<StepRecord> step_log;
    GrowthDiag growth;
    std::size_t total_iterations = 0;
    bool partial = false;

    std::size_t points() const { return path.points(); }
    std::span<const double> state(std::size_t k) const { return path.y(k); }
    const std::vector<double>& grid() const { return augmented->grid(); }
};

/// Iteration budget ran out before the solve finished.
class BudgetExhausted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Picard map failed to contract even on single grid steps.
class ContractionFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// [f | sigma] as a map R^m -> R^{m x (1 + d)}.
SmoothFunction4 augmented_field(const RdeProblem& p);

/// {C_beta (K + 1)^nu (|||X|||_alpha + 1)^nu}^{-1 / (alpha - beta)} with K = ||sigma||_{C^4_b} v L, as a logarithm.
double log_step_size(const RdeProblem& p, const SolverConfig& cfg);

RdeSolution solve_rde(const RdeProblem& p, const SolverConfig& cfg = {});

/// |Y_0 - Z_0| + beta-Hölder seminorm of Y - Z.
double beta_distance(const RdeSolution& a, const RdeSolution& b, double beta, HolderMode mode = HolderMode::Auto);

struct Perturbation {
    std::vector<double> initial_direction;  // empty means none
    std::vector<double> driver_direction;   // path values at the driver grid points, empty means none
    std::vector<double> magnitudes{1e-1, 1e-2, 1e-3, 1e-4};
};

struct StabilityReport {
    std::vector<double> magnitudes;
    std::vector<double> ratios;
    double sup_ratio = 0.0;
};

/// ||Y - Y~||_beta / (|xi - xi~| + rho_alpha(X, X~)) for each magnitude; 0 when both sides vanish.
StabilityReport stability_probe(const RdeProblem& p, const Perturbation& pert, const SolverConfig& cfg = {});

/// Young ODE dY = f(Y) dt + sigma(Y) d(control) with a piecewise-linear control.
struct YoungProblem {
    SmoothFunction4 drift;
    SmoothFunction4 sigma;  // R^m -> R^{m x d}
    algebra::PiecewiseLinearPath control;
    std::vector<double> initial;
    double q = 1.5;  // variation exponent, 1 <= q < 2
    void validate() const;
};

struct YoungConfig {
    double tol = 1e-6;
    std::size_t base_substeps = 1;
    std::size_t max_refinements = 10;
    /// Skips the refinement loop and uses base_substeps only.
    bool fixed_resolution = false;
    bool check_variation = true;
};

struct YoungSolution {
    std::vector<double> grid;
    std::vector<double> values;  // m per grid point
    std::size_t state_dim = 0;
    std::size_t substeps = 0;
    double error_estimate = 0.0;
    bool converged = false;
    std::span<const double> state(std::size_t k) const { return {values.data() + k * state_dim, state_dim}; }
};

/// Exact discrete q-variation over vertex partitions, to the power 1/q.
double q_variation(const std::vector<double>& grid, std::span<const double> values, std::size_t dim, double q);

/// Young–Euler scheme with substeps per control segment, refined until successive runs agree.
YoungSolution solve_young(const YoungProblem& p, const YoungConfig& cfg = {});

}  // namespace roughdev::rde
