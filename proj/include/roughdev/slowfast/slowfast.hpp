#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "roughdev/algebra/path.hpp"
#include "roughdev/controlled/smooth_function.hpp"
#include "roughdev/gaussian/gaussian.hpp"
#include "roughdev/rde/rde.hpp"

namespace roughdev::slowfast {

using algebra::PiecewiseLinearPath;
using controlled::SmoothFunction4;
using gaussian::CameronMartinControl;

/// Constants of the Lipschitz and dissipativity conditions.
struct AssumptionParams {
    double lipschitz = 1.0;  // L
    double beta1 = 1.0;      // contraction of the frozen fast dynamics
    double beta2 = 1.0;      // coercivity
    double c = 1.0;          // growth constant in the coercivity bound
};

/// dX = f(X, Y) dt + sqrt(eps) sigma(X) dB^H,  dY = F(X, Y) dt / delta + G(X, Y) dW / sqrt(delta).
/// f, F and G act on the stacked state (x, y) in R^{m+n}. sigma is R^m -> R^{m x d}, G is n x e row-major.
struct SlowFastSpec {
    SmoothFunction4 f;
    SmoothFunction4 sigma;
    SmoothFunction4 F;
    SmoothFunction4 G;
    std::size_t m = 1, n = 1, d = 1, e = 1;
    double eps = 0.1;
    double delta = 0.01;
    double hurst = 0.3;
    bool test_mode = false;  // allows any H in (0, 1)
    std::vector<double> x0;
    std::vector<double> y0;
    AssumptionParams params;

    void validate() const;
    double delta_over_eps() const { return delta / eps; }
    /// Scale-separation flag: delta / eps <= 0.1.
    bool delta_small() const { return delta_over_eps() <= 0.1; }
};

/// Linear benchmark f = -x + y, sigma = 1, F = -y + kappa x, G = 1 (m = n = d = e = 1).
/// Its averaged drift is -(1 - kappa) x.
SlowFastSpec ou_benchmark(double eps, double delta, double kappa = 0.0, double hurst = 0.3);

/// Hölder exponents used for lifts of fBM with the given Hurst index.
roughpath::HolderExponents exponents_for_hurst(double hurst);

/// F~^k = F^k + 1/2 sum_{i,j} (dG^{kj}/dy_i) G^{ij}. Values are exact; derivatives come from
/// the finite-difference adapter.
SmoothFunction4 ito_correction(const SmoothFunction4& F, const SmoothFunction4& G, std::size_t m, std::size_t n,
                               std::size_t e);

struct DissipativityCheck {
    bool passed = true;
    std::size_t samples = 0;
    std::size_t violations = 0;
    double worst_contraction = 0.0;  // max of lhs + beta1 |y1 - y2|^2, relative to |y1 - y2|^2
    double worst_coercivity = 0.0;   // max of lhs + beta2 |y|^2 - C |x|^2 - C
};

/// Samples both dissipativity inequalities at random points in a box of the given radius.
DissipativityCheck check_dissipativity(const SlowFastSpec& spec, std::size_t samples = 100, std::uint64_t seed = 7,
                                       double radius = 3.0);

/// Fast component left the cap; the frozen dynamics are likely not dissipative.
class FastBlowUp : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class FastForm { Ito, Stratonovich };

struct FastTrajectory {
    double dt = 0.0;
    std::size_t dim = 0;
    std::vector<double> values;  // dim per point, starting at y0
    std::size_t points() const { return dim ? values.size() / dim : 0; }
    std::span<const double> at(std::size_t k) const { return {values.data() + k * dim, dim}; }
};

/// Frozen fast equation dY = F~(x, Y) dt + G(x, Y) dw by Euler–Maruyama. Stratonovich form integrates
/// dY = F dt + G o dw with the stochastic Heun scheme instead.
FastTrajectory frozen_fast(const SlowFastSpec& spec, std::span<const double> x, std::span<const double> y0,
                           double horizon, double dt, std::mt19937_64& rng, FastForm form = FastForm::Ito,
                           double cap = 1e8);

struct BarFBudget {
    double burn_in = 10.0;
    double horizon = 200.0;  // averaging window after burn-in
    double dt = 1e-2;
    std::size_t batches = 20;
    std::uint64_t seed = 1;
    std::size_t decay_pairs = 8;
};

struct BarFEstimate {
    std::vector<double> value;
    std::vector<double> stderr_;
    bool converged = true;       // false when batch means are strongly correlated (error bars widened)
    double batch_correlation = 0.0;
    double decay_rate = 0.0;     // fitted rate of E|Y^{y1} - Y^{y2}|^2
    bool decay_consistent = true;
};

/// Time average of f(x, Y_s) along the frozen trajectory after burn-in, with batch-means error bars.
BarFEstimate estimate_bar_f(const SlowFastSpec& spec, std::span<const double> x, const BarFBudget& budget = {});

/// Averaged drift x -> int f(x, y) mu^x(dy), estimated with common random numbers and cached per x.
class AveragedModel {
public:
    using Closed = std::function<std::vector<double>(std::span<const double>)>;

    AveragedModel(SlowFastSpec spec, BarFBudget budget = {});
    /// Exact averaged drift supplied by the caller; no estimation.
    static AveragedModel closed_form(SlowFastSpec spec, Closed bar_f, double lipschitz);

    std::vector<double> bar_f(std::span<const double> x) const;
    BarFEstimate estimate(std::span<const double> x) const;
    bool is_closed_form() const { return static_cast<bool>(closed_); }
    const SlowFastSpec& spec() const { return spec_; }
    std::size_t cache_size() const;

    /// Largest |bar_f(x1) - bar_f(x2)| / |x1 - x2| over random pairs near x0.
    double lipschitz_spot_check(std::size_t pairs = 10, std::uint64_t seed = 11, double radius = 2.0);
    double lip_estimate() const { return lip_; }
    /// Passes when the spot-check ratio stays below 1.5 L.
    bool lipschitz_ok() const { return lip_ <= 1.5 * spec_.params.lipschitz; }

    /// bar_f as a map R^m -> R^m with finite-difference derivatives.
    SmoothFunction4 as_function() const;

private:
    struct Cache;
    SlowFastSpec spec_;
    BarFBudget budget_;
    Closed closed_;
    double lip_ = 0.0;
    std::shared_ptr<Cache> cache_;
};

/// Averaged ODE x' = bar_f(x) by classical RK4 on the grid (substeps per interval).
std::vector<double> averaged_solution(const AveragedModel& model, const std::vector<double>& grid,
                                      std::size_t substeps = 4);

/// Macro grid for the slow component and micro steps for the fast one.
struct SlowFastGrid {
    double horizon = 1.0;
    std::size_t macro_steps = 256;
    std::size_t micro_per_macro = 20;

    double macro_dt() const { return horizon / static_cast<double>(macro_steps); }
    double micro_dt() const { return macro_dt() / static_cast<double>(micro_per_macro); }
    std::size_t micro_steps() const { return macro_steps * micro_per_macro; }
    std::vector<double> macro_grid() const;
    /// Fast dt = min(delta / 50, macro dt / 20) rounded down to an integer split of the macro step.
    static SlowFastGrid make(const SlowFastSpec& spec, double horizon, std::size_t macro_steps);
};

/// fBM on the macro grid and BM increments (e per micro step).
struct SlowFastNoise {
    PiecewiseLinearPath fbm;
    std::vector<double> dw;
};

SlowFastNoise sample_noise(const SlowFastSpec& spec, const SlowFastGrid& grid, std::mt19937_64& rng);

enum class SimulationMode { Plain, ControlledLdp, ControlledMdp };

struct SimulationOptions {
    SimulationMode mode = SimulationMode::Plain;
    /// (u, v) with fbm_dim = d and bm_dim = e; required in controlled modes.
    std::optional<CameronMartinControl> ctrl;
    double theta = 0.5;  // MDP default h = eps^{-theta/2}
    double h = 0.0;      // positive value overrides the default h
    double cap = 1e8;
    rde::SolverConfig solver;

    double h_value(double eps) const;
};

struct SlowFastPath {
    SlowFastGrid grid;
    std::size_t m = 0, n = 0;
    std::vector<double> slow;  // m per macro point
    std::vector<double> fast;  // n per micro point
    std::span<const double> slow_at(std::size_t k) const { return {slow.data() + k * m, m}; }
    std::span<const double> fast_at(std::size_t k) const { return {fast.data() + k * n, n}; }
    PiecewiseLinearPath slow_path() const;
};

/// Fast component by Euler–Maruyama on the Itô form with the slow state frozen at the current macro point;
/// slow component by solve_rde per macro step with the drift averaged over that step's micro states.
SlowFastPath simulate_slow_fast(const SlowFastSpec& spec, const SlowFastGrid& grid, const SlowFastNoise& noise,
                                const SimulationOptions& opts = {});

/// Fast dynamics with the slow state frozen at t(Delta) = floor(t / Delta) Delta, reusing the BM increments
/// of the noise. The slow state is the one the fast solver sees (last macro point). Delta >= horizon freezes
/// the initial value. Returns n values per micro point.
std::vector<double> auxiliary_fast(const SlowFastSpec& spec, const SlowFastPath& path, double Delta,
                                   const SlowFastNoise& noise, double cap = 1e8);

/// int_0^T |Y - Y^|^2 dt by left Riemann sum on the micro grid.
double fast_gap_integral(const SlowFastPath& path, std::span<const double> aux);

/// delta^{1/(4 beta)} log(1/delta).
double delta_schedule(double delta, double beta);

/// Nearest block length k * macro dt with k a power of two dividing the macro steps.
double round_delta(double Delta, const SlowFastGrid& grid);

struct KhasminskiiTerms {
    double m1 = 0.0;  // sup |M1|^2
    double m2 = 0.0;  // sup |M2|^2
    double m3 = 0.0;  // eta-Hölder seminorm of M3, squared
    double m4 = 0.0;  // sup |M4|^2
};

/// The four discretization terms along one trajectory (left Riemann sums on the micro grid).
KhasminskiiTerms khasminskii_terms(const SlowFastSpec& spec, const AveragedModel& model, const SlowFastPath& path,
                                   std::span<const double> aux, double Delta, double eta = 0.5);

struct KhasminskiiRow {
    double eps = 0.0, delta = 0.0, Delta = 0.0;
    KhasminskiiTerms mean;
    KhasminskiiTerms stderr_;
    double gap = 0.0;  // mean of int |Y - Y^|^2 dt
    std::size_t runs = 0;
};

struct KhasminskiiConfig {
    std::vector<double> eps;
    double delta_power = 2.0;  // delta = eps^power
    double beta = 0.27;
    double horizon = 1.0;
    std::size_t macro_steps = 256;
    std::size_t runs = 200;
    std::uint64_t seed = 1;
    double eta = 0.5;
    SimulationOptions sim;
};

/// One row per eps with Delta from delta_schedule, rounded to the grid.
std::vector<KhasminskiiRow> khasminskii_report(const SlowFastSpec& base, const AveragedModel& model,
                                               const KhasminskiiConfig& cfg);

}  // namespace roughdev::slowfast
