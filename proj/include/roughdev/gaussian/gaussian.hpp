#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "roughdev/algebra/path.hpp"
#include "roughdev/roughpath/rough_path.hpp"

namespace roughdev::gaussian {

using algebra::PiecewiseLinearPath;
using roughpath::HolderExponents;
using roughpath::RoughPath;

/// Per-trajectory stream: mt19937_64 seeded from (seed, index).
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t index);

struct FbmSpec {
    double hurst = 0.3;
    std::size_t dim = 1;
    std::size_t steps = 256;  // uniform grid on [0, horizon]
    double horizon = 1.0;
    std::uint64_t seed = 0;
    /// Allows any H in (0, 1), including the Brownian case H = 1/2.
    bool test_mode = false;
    void validate() const;
};

/// E[b_t b_s] = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2.
double fbm_covariance(double hurst, double t, double s);

/// Exact sampler via a cached Cholesky factor of the grid covariance. Above 4096 steps
/// it switches to circulant embedding of the increments (flagged approximate).
class FbmSampler {
public:
    explicit FbmSampler(const FbmSpec& spec);
    const FbmSpec& spec() const { return spec_; }
    bool approximate() const { return approximate_; }
    const std::vector<double>& grid() const { return grid_; }
    /// One path; coordinates independent, starting at 0.
    PiecewiseLinearPath sample(std::mt19937_64& rng) const;
    /// Trajectory index under the base seed.
    PiecewiseLinearPath sample(std::uint64_t index) const;

    struct Factor;

private:
    FbmSpec spec_;
    std::vector<double> grid_;
    bool approximate_ = false;
    std::shared_ptr<const Factor> factor_;
};

PiecewiseLinearPath sample_fbm(const FbmSpec& spec, std::uint64_t index = 0);

/// Brownian path on a uniform grid with i.i.d. N(0, dt) increments.
PiecewiseLinearPath sample_bm(std::size_t dim, std::size_t steps, double horizon, std::mt19937_64& rng);

/// Geometric lift: signature of the piecewise-linear interpolation, shuffle-verified.
RoughPath lift_fbm(const PiecewiseLinearPath& path, HolderExponents exponents);

enum class CrossMode { Geometric, ItoCross };

struct MixedLift {
    RoughPath rough;       // over R^{d+e}: fBM coordinates first
    std::size_t fbm_dim = 0;
    std::size_t bm_dim = 0;
    CrossMode mode = CrossMode::Geometric;
};

/// Joint lift of (b^H, w). Geometric mode is the joint piecewise-linear signature. ItoCross mode keeps
/// the pure blocks and sets every mixed word to 0 on single steps, so Chen products give forward sums.
MixedLift lift_mixed(const PiecewiseLinearPath& fbm, const PiecewiseLinearPath& bm, HolderExponents exponents,
                     CrossMode mode = CrossMode::Geometric);

/// Sub-tensor on the given coordinates (in order).
algebra::TruncatedTensor project_block(const algebra::TruncatedTensor& a, std::span<const std::size_t> coords);

/// Volterra kernel of fBM, u = K_H h with ||u||_H = ||h||_{L^2}. H = 1/2 gives K = 1.
class VolterraKernel {
public:
    explicit VolterraKernel(double hurst);
    double hurst() const { return h_; }
    double operator()(double t, double s) const;
    /// int_a^b K(t, s) ds for 0 <= a < b <= t, by tanh-sinh quadrature.
    double cell_integral(double t, double a, double b) const;

private:
    double h_;
    double c_;
    double beta_;
};

/// ĥ_u piecewise constant on cells (d coefficients per cell), v' piecewise constant (e per cell).
struct CameronMartinControl {
    double hurst = 0.3;
    std::vector<double> cells;  // cell boundaries, strictly increasing from 0
    std::size_t fbm_dim = 1;
    std::size_t bm_dim = 0;
    std::vector<double> hu;  // cells-1 rows of fbm_dim
    std::vector<double> vp;  // cells-1 rows of bm_dim

    std::size_t cell_count() const { return cells.size() - 1; }
    /// (||ĥ||^2_{L^2} + ||v'||^2_{L^2}) / 2, exact.
    double norm_sq() const;
    void validate() const;
    static CameronMartinControl zero(double hurst, std::vector<double> cells, std::size_t fbm_dim, std::size_t bm_dim);
};

/// Weights w[k][j] = int_{cell j cap [0, t_k]} K(t_k, s) ds for evaluation times t_k. Cached per (H, cells, times).
std::shared_ptr<const std::vector<double>> kernel_weights(double hurst, const std::vector<double>& cells,
                                                         const std::vector<double>& times);

/// (u, v) at the given times, fBM coordinates first.
PiecewiseLinearPath cm_to_path(const CameronMartinControl& ctrl, const std::vector<double>& times);

/// Geometric lift Θ of the control path on the given times.
RoughPath cm_lift(const CameronMartinControl& ctrl, const std::vector<double>& times, HolderExponents exponents);

/// Translation of a lift by a path h given at the lift's grid points (linear in between).
/// Throws when the result's shuffle defect exceeds 1e-8.
RoughPath translate(const RoughPath& lift, const PiecewiseLinearPath& h);

/// Translation by a Cameron–Martin control evaluated on the lift's grid.
RoughPath translate(const RoughPath& lift, const CameronMartinControl& ctrl);

/// Path through the control's values at the dyadic points k 2^{-m} T, sampled at times.
PiecewiseLinearPath dyadic_approximation(const CameronMartinControl& ctrl, int m, const std::vector<double>& times);

}  // namespace roughdev::gaussian
