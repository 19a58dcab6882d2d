#include "roughdev/algebra/path.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace roughdev::algebra {

PiecewiseLinearPath::PiecewiseLinearPath(std::vector<double> times, std::vector<double> values, std::size_t dim)
    : times_(std::move(times)), values_(std::move(values)), dim_(dim) {
    if (dim_ == 0) throw std::invalid_argument("path dimension must be positive");
    if (times_.size() < 2) throw std::invalid_argument("path needs at least 2 grid points");
    if (values_.size() != times_.size() * dim_) throw std::invalid_argument("path values size mismatch");
    if (times_.front() < 0.0) throw std::invalid_argument("path times must be nonnegative");
    for (std::size_t k = 1; k < times_.size(); ++k) {
        if (!(times_[k] > times_[k - 1])) throw std::invalid_argument("path times must be strictly increasing");
    }
    for (double v : values_) {
        if (!std::isfinite(v)) throw std::invalid_argument("path values must be finite");
    }
}

std::size_t PiecewiseLinearPath::segment_index(double t) const {
    if (t < times_.front() || t > times_.back()) throw std::invalid_argument("time outside path span");
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    std::size_t k = static_cast<std::size_t>(it - times_.begin());
    if (k == 0) return 0;
    return std::min(k - 1, segments() - 1);
}

std::vector<double> PiecewiseLinearPath::value_at(double t) const {
    const std::size_t k = segment_index(t);
    const double t0 = times_[k], t1 = times_[k + 1];
    const double w = (t - t0) / (t1 - t0);
    std::vector<double> out(dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
        const double a = values_[k * dim_ + i], b = values_[(k + 1) * dim_ + i];
        out[i] = (w == 1.0) ? b : a + w * (b - a);
    }
    return out;
}

std::vector<double> uniform_grid(double t0, double t1, std::size_t n) {
    if (n == 0 || !(t1 > t0)) throw std::invalid_argument("uniform_grid needs n > 0 and t1 > t0");
    std::vector<double> g(n + 1);
    const double h = (t1 - t0) / static_cast<double>(n);
    for (std::size_t k = 0; k <= n; ++k) g[k] = t0 + h * static_cast<double>(k);
    g[n] = t1;
    return g;
}

TruncatedTensor signature(const PiecewiseLinearPath& path, double s, double t) {
    if (s > t) throw std::invalid_argument("signature needs s <= t");
    const std::size_t d = path.dim();
    TruncatedTensor acc = TruncatedTensor::identity(d);
    if (s == t) {
        path.segment_index(s);
        return acc;
    }
    const std::size_t ks = path.segment_index(s);
    const std::size_t kt = path.segment_index(t);
    const auto& times = path.times();
    TruncatedTensor tmp(d);
    std::vector<double> inc(d);
    std::vector<double> left = path.value_at(s);
    for (std::size_t k = ks; k <= kt; ++k) {
        const double b = std::min(times[k + 1], t);
        std::vector<double> right = (b == times[k + 1]) ? std::vector<double>(path.value(k + 1).begin(), path.value(k + 1).end())
                                                        : path.value_at(b);
        for (std::size_t i = 0; i < d; ++i) inc[i] = right[i] - left[i];
        tensor_mul_into(acc, segment_signature(inc), tmp);
        std::swap(acc, tmp);
        left = std::move(right);
    }
    return acc;
}

namespace {

void require_same_grid(const PiecewiseLinearPath& a, const PiecewiseLinearPath& b) {
    if (a.times() != b.times()) throw std::invalid_argument("paths must share the same grid");
}

}  // namespace

PiecewiseLinearPath add_paths(const PiecewiseLinearPath& a, const PiecewiseLinearPath& b) {
    require_same_grid(a, b);
    if (a.dim() != b.dim()) throw std::invalid_argument("path dimension mismatch");
    std::vector<double> v(a.values());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += b.values()[i];
    return {a.times(), std::move(v), a.dim()};
}

PiecewiseLinearPath scale_path(const PiecewiseLinearPath& x, double c) {
    std::vector<double> v(x.values());
    for (double& e : v) e *= c;
    return {x.times(), std::move(v), x.dim()};
}

PiecewiseLinearPath stack_paths(const PiecewiseLinearPath& a, const PiecewiseLinearPath& b) {
    require_same_grid(a, b);
    const std::size_t d = a.dim() + b.dim();
    std::vector<double> v(a.points() * d);
    for (std::size_t k = 0; k < a.points(); ++k) {
        for (std::size_t i = 0; i < a.dim(); ++i) v[k * d + i] = a.value(k)[i];
        for (std::size_t i = 0; i < b.dim(); ++i) v[k * d + a.dim() + i] = b.value(k)[i];
    }
    return {a.times(), std::move(v), d};
}

}  // namespace roughdev::algebra
