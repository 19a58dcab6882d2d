#include "roughdev/roughpath/rough_path.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace roughdev::roughpath {

using algebra::level_norm;
using algebra::tensor_mul_into;

HolderExponents::HolderExponents(double a, double b, double g) : alpha(a), beta(b), gamma(g) { validate(); }

void HolderExponents::validate() const {
    if (!(alpha > 0.25 && alpha <= 1.0 / 3.0)) throw std::invalid_argument("alpha must lie in (1/4, 1/3]");
    if (!(beta > 0.25 && beta < alpha)) throw std::invalid_argument("beta must satisfy 1/4 < beta < alpha");
    if (!(2.0 * alpha + gamma > 1.0)) throw std::invalid_argument("exponents need 2 alpha + gamma > 1");
}

RoughPath::RoughPath(std::vector<double> grid, std::vector<TruncatedTensor> blocks, HolderExponents exponents,
                     GeometricCheck check, std::vector<double> origin)
    : grid_(std::move(grid)), blocks_(std::move(blocks)), origin_(std::move(origin)), exponents_(exponents) {
    if (grid_.size() < 2) throw std::invalid_argument("rough path needs at least 2 grid points");
    if (blocks_.size() + 1 != grid_.size()) throw std::invalid_argument("rough path needs one block per grid step");
    for (std::size_t k = 1; k < grid_.size(); ++k) {
        if (!(grid_[k] > grid_[k - 1])) throw std::invalid_argument("rough path grid must be strictly increasing");
    }
    dim_ = blocks_.front().dim();
    for (const auto& b : blocks_) {
        if (b.dim() != dim_) throw std::invalid_argument("rough path blocks differ in dimension");
        if (b.level0() != 1.0) throw std::invalid_argument("rough path blocks need level0 == 1");
    }
    if (origin_.empty()) origin_.assign(dim_, 0.0);
    if (origin_.size() != dim_) throw std::invalid_argument("rough path origin has wrong dimension");
    if (check == GeometricCheck::Verify) {
        for (const auto& b : blocks_) {
            const double scale = std::max(1.0, algebra::max_abs(b));
            max_defect_ = std::max(max_defect_, algebra::shuffle_defect(b) / scale);
        }
        if (max_defect_ > kShuffleTolerance) {
            std::ostringstream msg;
            msg << "shuffle check failed: relative defect " << max_defect_;
            throw std::runtime_error(msg.str());
        }
        geometric_ = true;
    } else {
        geometric_ = (check == GeometricCheck::Trusted);
    }
}

std::vector<double> RoughPath::value(std::size_t k) const {
    if (k >= grid_.size()) throw std::out_of_range("grid index out of range");
    std::vector<double> v(origin_);
    for (std::size_t j = 0; j < k; ++j) {
        auto l1 = blocks_[j].level1();
        for (std::size_t i = 0; i < dim_; ++i) v[i] += l1[i];
    }
    return v;
}

TruncatedTensor RoughPath::between(std::size_t i, std::size_t j) const {
    if (i > j) throw std::invalid_argument("chen reconstruction needs s <= t");
    if (j >= grid_.size()) throw std::out_of_range("grid index out of range");
    if (j == i) return TruncatedTensor::identity(dim_);
    if (j == i + 1) return blocks_[i];
    TruncatedTensor acc = blocks_[i];
    TruncatedTensor tmp(dim_);
    for (std::size_t k = i + 1; k < j; ++k) {
        tensor_mul_into(acc, blocks_[k], tmp);
        std::swap(acc, tmp);
    }
    return acc;
}

std::size_t RoughPath::index_of(double t) const {
    const double tol = 1e-12 * std::max(1.0, std::abs(grid_.back()));
    auto it = std::lower_bound(grid_.begin(), grid_.end(), t - tol);
    if (it != grid_.end() && std::abs(*it - t) <= tol) return static_cast<std::size_t>(it - grid_.begin());
    throw std::invalid_argument("time is not a grid point");
}

RoughPath from_signature_path(const PiecewiseLinearPath& path, HolderExponents exponents) {
    const std::size_t d = path.dim();
    std::vector<TruncatedTensor> blocks;
    blocks.reserve(path.segments());
    std::vector<double> inc(d);
    for (std::size_t k = 0; k < path.segments(); ++k) {
        for (std::size_t i = 0; i < d; ++i) inc[i] = path.value(k + 1)[i] - path.value(k)[i];
        blocks.push_back(algebra::segment_signature(inc));
    }
    auto o = path.value(0);
    return RoughPath(path.times(), std::move(blocks), exponents, GeometricCheck::Verify,
                     std::vector<double>(o.begin(), o.end()));
}

namespace {

// Locates t: returns (index k, theta) with t = grid[k] + theta (grid[k+1]-grid[k]), theta in [0,1).
std::pair<std::size_t, double> locate(const RoughPath& rp, double t) {
    const auto& g = rp.grid();
    const double tol = 1e-12 * std::max(1.0, std::abs(g.back()));
    if (t < g.front() - tol || t > g.back() + tol) throw std::invalid_argument("time outside rough path span");
    auto it = std::lower_bound(g.begin(), g.end(), t - tol);
    std::size_t k = static_cast<std::size_t>(it - g.begin());
    if (k < g.size() && std::abs(g[k] - t) <= tol) return {k, 0.0};
    k -= 1;
    return {k, (t - g[k]) / (g[k + 1] - g[k])};
}

TruncatedTensor geodesic_power(const TruncatedTensor& block, double theta) {
    TruncatedTensor l = algebra::tensor_log(block);
    l *= theta;
    return algebra::tensor_exp(l);
}

}  // namespace

TruncatedTensor chen_reconstruct(const RoughPath& rp, double s, double t) {
    if (s > t) throw std::invalid_argument("chen reconstruction needs s <= t");
    auto [ks, ths] = locate(rp, s);
    auto [kt, tht] = locate(rp, t);
    if (ths == 0.0 && tht == 0.0) return rp.between(ks, kt);
    if (ks == kt) {
        // both inside the same block
        const TruncatedTensor l = algebra::tensor_log(rp.block(ks));
        TruncatedTensor part = l;
        part *= (tht - ths);
        return algebra::tensor_exp(part);
    }
    TruncatedTensor acc = TruncatedTensor::identity(rp.dim());
    std::size_t first = ks;
    if (ths > 0.0) {
        acc = geodesic_power(rp.block(ks), 1.0 - ths);
        first = ks + 1;
    }
    acc = acc * rp.between(first, kt);
    if (tht > 0.0) acc = acc * geodesic_power(rp.block(kt), tht);
    return acc;
}

namespace {

bool use_dyadic(const RoughPath& rp, HolderMode mode) {
    if (mode == HolderMode::AllPairs) return false;
    if (mode == HolderMode::DyadicPairs) return true;
    return rp.steps() > 4096;
}

// Visits (i, j, X_{ij}) for the selected pairs.
template <class F>
void for_pairs(const RoughPath& rp, bool dyadic, F&& visit) {
    const std::size_t n = rp.steps();
    const std::size_t d = rp.dim();
    if (!dyadic) {
        TruncatedTensor acc(d), tmp(d);
        for (std::size_t i = 0; i < n; ++i) {
            acc = rp.block(i);
            visit(i, i + 1, acc);
            for (std::size_t j = i + 2; j <= n; ++j) {
                tensor_mul_into(acc, rp.block(j - 1), tmp);
                std::swap(acc, tmp);
                visit(i, j, acc);
            }
        }
        return;
    }
    std::vector<TruncatedTensor> level(rp.blocks());
    std::size_t width = 1;
    while (!level.empty()) {
        for (std::size_t k = 0; k < level.size(); ++k) visit(k * width, (k + 1) * width, level[k]);
        std::vector<TruncatedTensor> next;
        for (std::size_t k = 0; k + 1 < level.size(); k += 2) next.push_back(level[k] * level[k + 1]);
        level = std::move(next);
        width *= 2;
    }
}

template <class F>
void for_pair_couples(const RoughPath& a, const RoughPath& b, bool dyadic, F&& visit) {
    const std::size_t n = a.steps();
    const std::size_t d = a.dim();
    if (!dyadic) {
        TruncatedTensor xa(d), xb(d), tmp(d);
        for (std::size_t i = 0; i < n; ++i) {
            xa = a.block(i);
            xb = b.block(i);
            visit(i, i + 1, xa, xb);
            for (std::size_t j = i + 2; j <= n; ++j) {
                tensor_mul_into(xa, a.block(j - 1), tmp);
                std::swap(xa, tmp);
                tensor_mul_into(xb, b.block(j - 1), tmp);
                std::swap(xb, tmp);
                visit(i, j, xa, xb);
            }
        }
        return;
    }
    std::vector<TruncatedTensor> la(a.blocks()), lb(b.blocks());
    std::size_t width = 1;
    while (!la.empty()) {
        for (std::size_t k = 0; k < la.size(); ++k) visit(k * width, (k + 1) * width, la[k], lb[k]);
        std::vector<TruncatedTensor> na, nb;
        for (std::size_t k = 0; k + 1 < la.size(); k += 2) {
            na.push_back(la[k] * la[k + 1]);
            nb.push_back(lb[k] * lb[k + 1]);
        }
        la = std::move(na);
        lb = std::move(nb);
        width *= 2;
    }
}

void require_norm_level(int level) {
    if (level < 1 || level > 3) throw std::invalid_argument("Hölder norm level must be 1, 2 or 3");
}

}  // namespace

std::array<double, 3> holder_norms(const RoughPath& rp, double alpha, HolderMode mode) {
    std::array<double, 3> out{0.0, 0.0, 0.0};
    const auto& g = rp.grid();
    for_pairs(rp, use_dyadic(rp, mode), [&](std::size_t i, std::size_t j, const TruncatedTensor& x) {
        const double p = std::pow(g[j] - g[i], alpha);
        double w = p;
        for (int k = 1; k <= 3; ++k) {
            out[k - 1] = std::max(out[k - 1], level_norm(x, k) / w);
            w *= p;
        }
    });
    return out;
}

double holder_norm(const RoughPath& rp, int level, double alpha, HolderMode mode) {
    require_norm_level(level);
    double out = 0.0;
    const auto& g = rp.grid();
    for_pairs(rp, use_dyadic(rp, mode), [&](std::size_t i, std::size_t j, const TruncatedTensor& x) {
        out = std::max(out, level_norm(x, level) / std::pow(g[j] - g[i], level * alpha));
    });
    return out;
}

double holder_seminorm(const std::vector<double>& grid, std::span<const double> values, std::size_t dim,
                       double exponent, HolderMode mode) {
    if (dim == 0 || values.size() != grid.size() * dim)
        throw std::invalid_argument("Hölder seminorm: values do not match the grid");
    const std::size_t n = grid.size() - 1;
    const bool dyadic = mode == HolderMode::DyadicPairs || (mode == HolderMode::Auto && n > 4096);
    double out = 0.0;
    auto visit = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (std::size_t q = 0; q < dim; ++q) {
            const double d = values[j * dim + q] - values[i * dim + q];
            s += d * d;
        }
        out = std::max(out, std::sqrt(s) / std::pow(grid[j] - grid[i], exponent));
    };
    if (!dyadic) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j <= n; ++j) visit(i, j);
        return out;
    }
    for (std::size_t w = 1; w <= n; w *= 2)
        for (std::size_t i = 0; i + w <= n; i += w) visit(i, i + w);
    return out;
}

double holder_norm(const RoughPath& rp, int level, HolderMode mode) {
    return holder_norm(rp, level, rp.exponents().alpha, mode);
}

double homogeneous_norm(const RoughPath& rp, HolderMode mode) {
    const auto n = holder_norms(rp, rp.exponents().alpha, mode);
    return n[0] + std::sqrt(n[1]) + std::cbrt(n[2]);
}

RoughPath dilate(const RoughPath& rp, double lambda) {
    if (!std::isfinite(lambda)) throw std::invalid_argument("dilation factor must be finite");
    std::vector<TruncatedTensor> blocks;
    blocks.reserve(rp.steps());
    for (const auto& b : rp.blocks()) blocks.push_back(algebra::dilate(b, lambda));
    std::vector<double> origin(rp.origin());
    for (double& o : origin) o *= lambda;
    return RoughPath(rp.grid(), std::move(blocks), rp.exponents(),
                     rp.geometric() ? GeometricCheck::Trusted : GeometricCheck::Skip, std::move(origin));
}

double rp_distance(const RoughPath& a, const RoughPath& b, HolderMode mode) {
    if (a.dim() != b.dim()) throw std::invalid_argument("rough path dimension mismatch");
    if (a.grid() != b.grid()) throw std::invalid_argument("rough paths must share a grid; resample first");
    const double alpha = a.exponents().alpha;
    std::array<double, 3> out{0.0, 0.0, 0.0};
    const auto& g = a.grid();
    for_pair_couples(a, b, use_dyadic(a, mode),
                     [&](std::size_t i, std::size_t j, const TruncatedTensor& xa, const TruncatedTensor& xb) {
                         const double p = std::pow(g[j] - g[i], alpha);
                         double w = p;
                         for (int k = 1; k <= 3; ++k) {
                             auto la = xa.level(k);
                             auto lb = xb.level(k);
                             double s = 0.0;
                             for (std::size_t q = 0; q < la.size(); ++q) s += (la[q] - lb[q]) * (la[q] - lb[q]);
                             out[k - 1] = std::max(out[k - 1], std::sqrt(s) / w);
                             w *= p;
                         }
                     });
    return out[0] + out[1] + out[2];
}

PiecewiseLinearPath level1_path(const RoughPath& rp) {
    const std::size_t d = rp.dim();
    std::vector<double> v(rp.points() * d);
    std::vector<double> cur(rp.origin());
    for (std::size_t i = 0; i < d; ++i) v[i] = cur[i];
    for (std::size_t k = 0; k < rp.steps(); ++k) {
        auto l1 = rp.block(k).level1();
        for (std::size_t i = 0; i < d; ++i) {
            cur[i] += l1[i];
            v[(k + 1) * d + i] = cur[i];
        }
    }
    return {rp.grid(), std::move(v), d};
}

RoughPath resample_linear(const RoughPath& rp, const std::vector<double>& grid) {
    const PiecewiseLinearPath x = level1_path(rp);
    std::vector<double> v;
    v.reserve(grid.size() * rp.dim());
    for (double t : grid) {
        auto p = x.value_at(t);
        v.insert(v.end(), p.begin(), p.end());
    }
    return from_signature_path(PiecewiseLinearPath(grid, std::move(v), rp.dim()), rp.exponents());
}

RoughPath restrict(const RoughPath& rp, std::size_t i, std::size_t j) {
    if (!(i < j) || j >= rp.points()) throw std::invalid_argument("restriction needs i < j within the grid");
    std::vector<double> grid(rp.grid().begin() + static_cast<std::ptrdiff_t>(i),
                             rp.grid().begin() + static_cast<std::ptrdiff_t>(j + 1));
    std::vector<TruncatedTensor> blocks(rp.blocks().begin() + static_cast<std::ptrdiff_t>(i),
                                        rp.blocks().begin() + static_cast<std::ptrdiff_t>(j));
    return RoughPath(std::move(grid), std::move(blocks), rp.exponents(),
                     rp.geometric() ? GeometricCheck::Trusted : GeometricCheck::Skip, rp.value(i));
}

RoughPath translate_linear(const RoughPath& rp, std::span<const double> h) {
    const std::size_t d = rp.dim();
    if (h.size() != rp.points() * d) throw std::invalid_argument("translation path does not match the grid");
    std::vector<TruncatedTensor> blocks;
    blocks.reserve(rp.steps());
    std::vector<double> b(d);
    for (std::size_t k = 0; k < rp.steps(); ++k) {
        for (std::size_t i = 0; i < d; ++i) b[i] = h[(k + 1) * d + i] - h[k * d + i];
        blocks.push_back(algebra::translate_block(rp.block(k), b));
    }
    std::vector<double> origin(rp.origin());
    for (std::size_t i = 0; i < d; ++i) origin[i] += h[i];
    return RoughPath(rp.grid(), std::move(blocks), rp.exponents(),
                     rp.geometric() ? GeometricCheck::Trusted : GeometricCheck::Skip, std::move(origin));
}

RoughPath time_adjoined(const RoughPath& rp) {
    const std::size_t d = rp.dim();
    std::vector<TruncatedTensor> blocks;
    blocks.reserve(rp.steps());
    std::vector<double> b(d + 1, 0.0);
    for (std::size_t k = 0; k < rp.steps(); ++k) {
        b[0] = rp.grid()[k + 1] - rp.grid()[k];
        blocks.push_back(algebra::translate_block(algebra::embed_block(rp.block(k), d + 1, 1), b));
    }
    std::vector<double> origin{rp.grid().front()};
    origin.insert(origin.end(), rp.origin().begin(), rp.origin().end());
    return RoughPath(rp.grid(), std::move(blocks), rp.exponents(),
                     rp.geometric() ? GeometricCheck::Trusted : GeometricCheck::Skip, std::move(origin));
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void write_rough_path(std::ostream& os, const RoughPath& rp) {
    const std::size_t d = rp.dim();
    const auto& ex = rp.exponents();
    os << "# roughpath v1\n";
    os << "dim " << d << "\n";
    os << "points " << rp.points() << "\n";
    os << "exponents " << fmt_double(ex.alpha) << ' ' << fmt_double(ex.beta) << ' ' << fmt_double(ex.gamma) << "\n";
    os << "geometric " << (rp.geometric() ? 1 : 0) << "\n";
    os << "origin";
    for (double o : rp.origin()) os << ' ' << fmt_double(o);
    os << "\n";
    os << "columns t";
    for (std::size_t i = 0; i < d; ++i) os << " X1_" << i;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) os << " X2_" << i << j;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = 0; k < d; ++k) os << " X3_" << i << j << k;
    os << "\n";
    const std::size_t width = d + d * d + d * d * d;
    for (std::size_t r = 0; r < rp.points(); ++r) {
        os << fmt_double(rp.grid()[r]);
        if (r == 0) {
            for (std::size_t q = 0; q < width; ++q) os << " 0";
        } else {
            const auto data = rp.block(r - 1).data();
            for (std::size_t q = 1; q < data.size(); ++q) os << ' ' << fmt_double(data[q]);
        }
        os << "\n";
    }
}

RoughPath read_rough_path(std::istream& is) {
    std::string line, key;
    std::getline(is, line);
    if (line != "# roughpath v1") throw std::invalid_argument("not a roughpath v1 stream");
    std::size_t d = 0, points = 0;
    double a = 0, b = 0, g = 0;
    int geometric = 0;
    is >> key >> d;
    if (key != "dim") throw std::invalid_argument("roughpath stream: expected dim");
    is >> key >> points;
    if (key != "points") throw std::invalid_argument("roughpath stream: expected points");
    is >> key >> a >> b >> g;
    if (key != "exponents") throw std::invalid_argument("roughpath stream: expected exponents");
    is >> key >> geometric;
    if (key != "geometric") throw std::invalid_argument("roughpath stream: expected geometric");
    is >> key;
    if (key != "origin") throw std::invalid_argument("roughpath stream: expected origin");
    std::vector<double> origin(d);
    for (auto& o : origin) is >> o;
    std::getline(is, line);
    std::getline(is, line);
    if (line.rfind("columns", 0) != 0) throw std::invalid_argument("roughpath stream: expected columns");
    const std::size_t width = d + d * d + d * d * d;
    std::vector<double> grid(points);
    std::vector<TruncatedTensor> blocks;
    for (std::size_t r = 0; r < points; ++r) {
        is >> grid[r];
        TruncatedTensor t = TruncatedTensor::identity(d);
        for (std::size_t q = 0; q < width; ++q) is >> t.data()[q + 1];
        if (!is) throw std::invalid_argument("roughpath stream: truncated data");
        if (r > 0) blocks.push_back(std::move(t));
    }
    HolderExponents ex;
    ex.alpha = a;
    ex.beta = b;
    ex.gamma = g;
    return RoughPath(std::move(grid), std::move(blocks), ex, geometric ? GeometricCheck::Verify : GeometricCheck::Skip,
                     std::move(origin));
}

}  // namespace roughdev::roughpath
