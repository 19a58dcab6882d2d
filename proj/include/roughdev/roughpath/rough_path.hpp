#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "roughdev/algebra/path.hpp"
#include "roughdev/algebra/tensor.hpp"

namespace roughdev::roughpath {

using algebra::PiecewiseLinearPath;
using algebra::TruncatedTensor;

/// Hölder exponents: 1/4 < beta < alpha <= 1/3 and 2 alpha + gamma > 1.
struct HolderExponents {
    double alpha = 0.3;
    double beta = 0.27;
    double gamma = 0.49;

    HolderExponents() = default;
    HolderExponents(double alpha, double beta, double gamma);
    void validate() const;
};

enum class GeometricCheck { Verify, Skip, Trusted };

enum class HolderMode { AllPairs, DyadicPairs, Auto };

/// Level-3 rough path on a time grid. Only consecutive blocks are stored.
class RoughPath {
public:
    RoughPath() = default;
    RoughPath(std::vector<double> grid, std::vector<TruncatedTensor> blocks, HolderExponents exponents,
              GeometricCheck check = GeometricCheck::Verify, std::vector<double> origin = {});

    std::size_t dim() const { return dim_; }
    std::size_t points() const { return grid_.size(); }
    std::size_t steps() const { return blocks_.size(); }
    const std::vector<double>& grid() const { return grid_; }
    const std::vector<TruncatedTensor>& blocks() const { return blocks_; }
    const TruncatedTensor& block(std::size_t k) const { return blocks_[k]; }
    const HolderExponents& exponents() const { return exponents_; }
    bool geometric() const { return geometric_; }
    double max_block_defect() const { return max_defect_; }
    const std::vector<double>& origin() const { return origin_; }

    /// Level-1 path value at grid index k (origin plus accumulated increments).
    std::vector<double> value(std::size_t k) const;

    /// Ordered Chen product of blocks between grid indices i <= j.
    TruncatedTensor between(std::size_t i, std::size_t j) const;

    /// Grid index of t (within 1e-12 relative), or throws.
    std::size_t index_of(double t) const;

private:
    std::vector<double> grid_;
    std::vector<TruncatedTensor> blocks_;
    std::vector<double> origin_;
    HolderExponents exponents_;
    std::size_t dim_ = 0;
    bool geometric_ = false;
    double max_defect_ = 0.0;
};

/// Relative tolerance used by the geometric check of blocks.
inline constexpr double kShuffleTolerance = 1e-9;

RoughPath from_signature_path(const PiecewiseLinearPath& path, HolderExponents exponents);

/// Chen reconstruction for times s <= t. Off-grid endpoints split their block
/// along the geodesic exp(theta log block).
TruncatedTensor chen_reconstruct(const RoughPath& rp, double s, double t);

double holder_norm(const RoughPath& rp, int level, HolderMode mode = HolderMode::Auto);
double holder_norm(const RoughPath& rp, int level, double alpha, HolderMode mode = HolderMode::Auto);

/// Hölder norms of levels 1..3 with exponent alpha (level i uses i*alpha).
std::array<double, 3> holder_norms(const RoughPath& rp, double alpha, HolderMode mode = HolderMode::Auto);

/// sum_i ||X^i||_{i alpha}^{1/i}.
/// Discrete exponent-Hölder seminorm of a vector path sampled on grid (values row-major, dim per point).
double holder_seminorm(const std::vector<double>& grid, std::span<const double> values, std::size_t dim,
                       double exponent, HolderMode mode = HolderMode::Auto);

double homogeneous_norm(const RoughPath& rp, HolderMode mode = HolderMode::Auto);

RoughPath dilate(const RoughPath& rp, double lambda);

/// sum_i ||X^i - Y^i||_{i alpha} over all grid pairs.
double rp_distance(const RoughPath& a, const RoughPath& b, HolderMode mode = HolderMode::Auto);

/// Level-1 path of a rough path (values at grid points).
PiecewiseLinearPath level1_path(const RoughPath& rp);

/// Linear resampling of the level-1 path onto a new grid followed by re-lifting.
/// This is an approximation: area inside the old blocks is not preserved.
RoughPath resample_linear(const RoughPath& rp, const std::vector<double>& grid);

/// Restriction to grid indices [i, j].
RoughPath restrict(const RoughPath& rp, std::size_t i, std::size_t j);

/// Translation by a path h sampled at the grid points (row-major, dim per point), linear between them.
/// Block k becomes exp(log X_k + h_{k+1} - h_k); the origin moves by h_0.
RoughPath translate_linear(const RoughPath& rp, std::span<const double> h);

/// Time-adjoined lift on R^{1+d}: coordinate 0 is t, the others carry rp.
RoughPath time_adjoined(const RoughPath& rp);

void write_rough_path(std::ostream& os, const RoughPath& rp);
RoughPath read_rough_path(std::istream& is);

}  // namespace roughdev::roughpath
