#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "roughdev/algebra/tensor.hpp"

namespace roughdev::algebra {

/// Piecewise-linear path through (t_k, x_k) with strictly increasing times.
class PiecewiseLinearPath {
public:
    PiecewiseLinearPath() = default;
    /// values is row-major, one row of length dim per time.
    PiecewiseLinearPath(std::vector<double> times, std::vector<double> values, std::size_t dim);

    std::size_t dim() const { return dim_; }
    std::size_t points() const { return times_.size(); }
    std::size_t segments() const { return times_.size() - 1; }
    const std::vector<double>& times() const { return times_; }
    const std::vector<double>& values() const { return values_; }
    std::span<const double> value(std::size_t k) const { return {values_.data() + k * dim_, dim_}; }
    double start() const { return times_.front(); }
    double end() const { return times_.back(); }

    /// Linear interpolation at t within [start, end].
    std::vector<double> value_at(double t) const;

    /// Index k with times[k] <= t < times[k+1]; the last segment for t == end.
    std::size_t segment_index(double t) const;

private:
    std::vector<double> times_;
    std::vector<double> values_;
    std::size_t dim_ = 0;
};

/// Uniform grid t_k = t0 + k (t1 - t0) / n, k = 0..n.
std::vector<double> uniform_grid(double t0, double t1, std::size_t n);

/// Exact signature over [s, t]; partial segments split by linear interpolation.
TruncatedTensor signature(const PiecewiseLinearPath& path, double s, double t);

/// Pointwise sum of two paths on the same grid.
PiecewiseLinearPath add_paths(const PiecewiseLinearPath& a, const PiecewiseLinearPath& b);

/// Path c * x.
PiecewiseLinearPath scale_path(const PiecewiseLinearPath& x, double c);

/// Concatenates coordinates of paths on the same grid (a first).
PiecewiseLinearPath stack_paths(const PiecewiseLinearPath& a, const PiecewiseLinearPath& b);

}  // namespace roughdev::algebra
