#include "roughdev/gaussian/gaussian.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace roughdev::gaussian {

using algebra::TruncatedTensor;

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index & 0xffffffffu), static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

void FbmSpec::validate() const {
    if (test_mode) {
        if (!(hurst > 0.0 && hurst < 1.0)) throw std::invalid_argument("Hurst parameter must lie in (0, 1)");
    } else if (!(hurst > 0.25 && hurst < 1.0 / 3.0)) {
        throw std::invalid_argument("Hurst parameter must lie in (1/4, 1/3)");
    }
    if (dim == 0) throw std::invalid_argument("fBM dimension must be positive");
    if (steps == 0) throw std::invalid_argument("fBM grid needs at least one step");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("horizon must be positive");
}

double fbm_covariance(double hurst, double t, double s) {
    const double h2 = 2.0 * hurst;
    return 0.5 * (std::pow(t, h2) + std::pow(s, h2) - std::pow(std::abs(t - s), h2));
}

struct FbmSampler::Factor {
    Eigen::MatrixXd lower;           // Cholesky factor of the covariance at t_1..t_N
    std::vector<double> sqrt_eigen;  // circulant embedding, sqrt(lambda / M)
};

namespace {

std::mutex cache_mutex;
std::map<std::tuple<double, std::size_t, double>, std::shared_ptr<const FbmSampler::Factor>>* factor_cache() {
    static auto* cache = new std::map<std::tuple<double, std::size_t, double>, std::shared_ptr<const FbmSampler::Factor>>();
    return cache;
}

}  // namespace

FbmSampler::FbmSampler(const FbmSpec& spec) : spec_(spec) {
    spec_.validate();
    grid_ = algebra::uniform_grid(0.0, spec_.horizon, spec_.steps);
    const std::size_t N = spec_.steps;
    approximate_ = N > 4096;
    const auto key = std::make_tuple(spec_.hurst, N, spec_.horizon);
    {
        std::lock_guard<std::mutex> lock(cache_mutex);
        auto it = factor_cache()->find(key);
        if (it != factor_cache()->end()) {
            factor_ = it->second;
            return;
        }
    }
    auto f = std::make_shared<Factor>();
    if (!approximate_) {
        Eigen::MatrixXd cov(N, N);
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                const double c = fbm_covariance(spec_.hurst, grid_[i + 1], grid_[j + 1]);
                cov(i, j) = c;
                cov(j, i) = c;
            }
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("fBM covariance is not numerically positive definite; reduce the grid resolution");
        f->lower = llt.matrixL();
    } else {
        // increments: gamma(k) = dt^{2H} (|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}) / 2
        const double dt = spec_.horizon / static_cast<double>(N);
        const double h2 = 2.0 * spec_.hurst;
        const std::size_t M = 2 * N;
        auto gamma = [&](double k) {
            return 0.5 * std::pow(dt, h2) * (std::pow(std::abs(k + 1.0), h2) - 2.0 * std::pow(std::abs(k), h2) +
                                             std::pow(std::abs(k - 1.0), h2));
        };
        std::vector<std::complex<double>> c(M), lam;
        for (std::size_t k = 0; k <= N; ++k) c[k] = gamma(static_cast<double>(k));
        for (std::size_t k = N + 1; k < M; ++k) c[k] = gamma(static_cast<double>(M - k));
        Eigen::FFT<double> fft;
        fft.fwd(lam, c);
        f->sqrt_eigen.resize(M);
        for (std::size_t k = 0; k < M; ++k)
            f->sqrt_eigen[k] = std::sqrt(std::max(0.0, lam[k].real()) / static_cast<double>(M));
    }
    std::lock_guard<std::mutex> lock(cache_mutex);
    factor_ = factor_cache()->emplace(key, std::move(f)).first->second;
}

PiecewiseLinearPath FbmSampler::sample(std::mt19937_64& rng) const {
    const std::size_t N = spec_.steps, d = spec_.dim;
    std::normal_distribution<double> n01;
    std::vector<double> v((N + 1) * d, 0.0);
    if (!approximate_) {
        Eigen::VectorXd z(N);
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t k = 0; k < N; ++k) z[k] = n01(rng);
            const Eigen::VectorXd b = factor_->lower.triangularView<Eigen::Lower>() * z;
            for (std::size_t k = 0; k < N; ++k) v[(k + 1) * d + i] = b[k];
        }
    } else {
        const std::size_t M = 2 * N;
        Eigen::FFT<double> fft;
        std::vector<std::complex<double>> a(M), x;
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t k = 0; k < M; ++k) {
                const double re = n01(rng), im = n01(rng);
                a[k] = factor_->sqrt_eigen[k] * std::complex<double>(re, im);
            }
            fft.fwd(x, a);
            double acc = 0.0;
            for (std::size_t k = 0; k < N; ++k) {
                acc += x[k].real();
                v[(k + 1) * d + i] = acc;
            }
        }
    }
    return {grid_, std::move(v), d};
}

PiecewiseLinearPath FbmSampler::sample(std::uint64_t index) const {
    auto rng = make_stream(spec_.seed, index);
    return sample(rng);
}

PiecewiseLinearPath sample_fbm(const FbmSpec& spec, std::uint64_t index) { return FbmSampler(spec).sample(index); }

PiecewiseLinearPath sample_bm(std::size_t dim, std::size_t steps, double horizon, std::mt19937_64& rng) {
    if (dim == 0 || steps == 0 || !(horizon > 0.0)) throw std::invalid_argument("invalid Brownian grid");
    std::normal_distribution<double> n01;
    const double sd = std::sqrt(horizon / static_cast<double>(steps));
    std::vector<double> v((steps + 1) * dim, 0.0);
    for (std::size_t k = 1; k <= steps; ++k)
        for (std::size_t i = 0; i < dim; ++i) v[k * dim + i] = v[(k - 1) * dim + i] + sd * n01(rng);
    return {algebra::uniform_grid(0.0, horizon, steps), std::move(v), dim};
}

RoughPath lift_fbm(const PiecewiseLinearPath& path, HolderExponents exponents) {
    RoughPath rp = roughpath::from_signature_path(path, exponents);
    if (!rp.geometric()) throw std::runtime_error("fBM lift failed the shuffle check");
    return rp;
}

MixedLift lift_mixed(const PiecewiseLinearPath& fbm, const PiecewiseLinearPath& bm, HolderExponents exponents,
                     CrossMode mode) {
    if (fbm.times() != bm.times()) throw std::invalid_argument("mixed lift needs a common grid");
    const std::size_t d = fbm.dim(), e = bm.dim();
    const auto joint = algebra::stack_paths(fbm, bm);
    MixedLift out;
    out.fbm_dim = d;
    out.bm_dim = e;
    out.mode = mode;
    if (mode == CrossMode::Geometric) {
        out.rough = lift_fbm(joint, exponents);
        return out;
    }
    const std::size_t D = d + e;
    auto is_fbm = [d](std::size_t i) { return i < d; };
    std::vector<TruncatedTensor> blocks;
    blocks.reserve(joint.points() - 1);
    std::vector<double> inc(D);
    for (std::size_t k = 0; k + 1 < joint.points(); ++k) {
        const auto a = joint.value(k), b = joint.value(k + 1);
        for (std::size_t i = 0; i < D; ++i) inc[i] = b[i] - a[i];
        auto x = algebra::segment_signature(inc);
        for (std::size_t i = 0; i < D; ++i)
            for (std::size_t j = 0; j < D; ++j) {
                if (is_fbm(i) != is_fbm(j)) x.at(i, j) = 0.0;
                for (std::size_t l = 0; l < D; ++l) {
                    const bool pure = is_fbm(i) == is_fbm(j) && is_fbm(j) == is_fbm(l);
                    if (!pure) x.at(i, j, l) = 0.0;
                }
            }
        blocks.push_back(std::move(x));
    }
    std::vector<double> origin(joint.value(0).begin(), joint.value(0).end());
    out.rough = RoughPath(joint.times(), std::move(blocks), exponents, roughpath::GeometricCheck::Skip, std::move(origin));
    return out;
}

TruncatedTensor project_block(const TruncatedTensor& a, std::span<const std::size_t> coords) {
    const std::size_t n = coords.size();
    for (std::size_t c : coords)
        if (c >= a.dim()) throw std::invalid_argument("projection coordinate out of range");
    TruncatedTensor out(n);
    out.level0() = a.level0();
    for (std::size_t i = 0; i < n; ++i) {
        out.at(i) = a.at(coords[i]);
        for (std::size_t j = 0; j < n; ++j) {
            out.at(i, j) = a.at(coords[i], coords[j]);
            for (std::size_t k = 0; k < n; ++k) out.at(i, j, k) = a.at(coords[i], coords[j], coords[k]);
        }
    }
    return out;
}

VolterraKernel::VolterraKernel(double hurst) : h_(hurst) {
    if (!(hurst > 0.0 && hurst <= 0.5)) throw std::invalid_argument("Volterra kernel implemented for H in (0, 1/2]");
    if (hurst == 0.5) {
        c_ = 1.0;
        beta_ = 0.0;
        return;
    }
    beta_ = boost::math::beta(1.0 - 2.0 * hurst, hurst + 0.5);
    c_ = std::sqrt(2.0 * hurst / ((1.0 - 2.0 * hurst) * beta_));
}

double VolterraKernel::operator()(double t, double s) const {
    if (h_ == 0.5) return 1.0;
    if (!(s > 0.0 && s < t)) return 0.0;
    const double e = h_ - 0.5;
    const double first = std::pow(t / s, e) * std::pow(t - s, e);
    const double second = (0.5 - h_) * std::pow(s, e) * beta_ * boost::math::ibetac(1.0 - 2.0 * h_, h_ + 0.5, s / t);
    return c_ * (first + second);
}

double VolterraKernel::cell_integral(double t, double a, double b) const {
    if (!(0.0 <= a && a < b && b <= t * (1.0 + 1e-14))) throw std::invalid_argument("cell must lie inside [0, t]");
    b = std::min(b, t);
    if (h_ == 0.5) return b - a;
    static thread_local boost::math::quadrature::tanh_sinh<double> integrator;
    auto f = [this, t](double s) { return (*this)(t, s); };
    return integrator.integrate(f, a, b, 1e-11);
}

double CameronMartinControl::norm_sq() const {
    validate();
    double s = 0.0;
    for (std::size_t j = 0; j < cell_count(); ++j) {
        const double w = cells[j + 1] - cells[j];
        for (std::size_t i = 0; i < fbm_dim; ++i) s += hu[j * fbm_dim + i] * hu[j * fbm_dim + i] * w;
        for (std::size_t i = 0; i < bm_dim; ++i) s += vp[j * bm_dim + i] * vp[j * bm_dim + i] * w;
    }
    return 0.5 * s;
}

void CameronMartinControl::validate() const {
    if (cells.size() < 2 || cells.front() != 0.0) throw std::invalid_argument("control cells must start at 0");
    for (std::size_t j = 1; j < cells.size(); ++j)
        if (!(cells[j] > cells[j - 1])) throw std::invalid_argument("control cells must be strictly increasing");
    if (hu.size() != cell_count() * fbm_dim || vp.size() != cell_count() * bm_dim)
        throw std::invalid_argument("control coefficients do not match the cells");
    if (fbm_dim > 0) (void)VolterraKernel(hurst);
}

CameronMartinControl CameronMartinControl::zero(double hurst, std::vector<double> cells, std::size_t fbm_dim,
                                                std::size_t bm_dim) {
    CameronMartinControl c;
    c.hurst = hurst;
    c.fbm_dim = fbm_dim;
    c.bm_dim = bm_dim;
    c.hu.assign((cells.size() - 1) * fbm_dim, 0.0);
    c.vp.assign((cells.size() - 1) * bm_dim, 0.0);
    c.cells = std::move(cells);
    c.validate();
    return c;
}

std::shared_ptr<const std::vector<double>> kernel_weights(double hurst, const std::vector<double>& cells,
                                                         const std::vector<double>& times) {
    using Key = std::tuple<double, std::vector<double>, std::vector<double>>;
    static std::mutex mu;
    static auto* cache = new std::map<Key, std::shared_ptr<const std::vector<double>>>();
    Key key{hurst, cells, times};
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache->find(key);
        if (it != cache->end()) return it->second;
    }
    const VolterraKernel K(hurst);
    const std::size_t C = cells.size() - 1;
    auto w = std::make_shared<std::vector<double>>(times.size() * C, 0.0);
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double t = times[k];
        if (t < 0.0 || t > cells.back() * (1.0 + 1e-12)) throw std::invalid_argument("evaluation time outside the control cells");
        for (std::size_t j = 0; j < C && cells[j] < t; ++j)
            (*w)[k * C + j] = K.cell_integral(t, cells[j], std::min(cells[j + 1], t));
    }
    std::lock_guard<std::mutex> lock(mu);
    return cache->emplace(std::move(key), std::move(w)).first->second;
}

PiecewiseLinearPath cm_to_path(const CameronMartinControl& ctrl, const std::vector<double>& times) {
    ctrl.validate();
    const std::size_t d = ctrl.fbm_dim, e = ctrl.bm_dim, D = d + e, C = ctrl.cell_count();
    if (D == 0) throw std::invalid_argument("control has no coordinates");
    std::vector<double> v(times.size() * D, 0.0);
    if (d > 0) {
        const auto w = kernel_weights(ctrl.hurst, ctrl.cells, times);
        for (std::size_t k = 0; k < times.size(); ++k)
            for (std::size_t j = 0; j < C; ++j) {
                const double wk = (*w)[k * C + j];
                if (wk == 0.0) continue;
                for (std::size_t i = 0; i < d; ++i) v[k * D + i] += wk * ctrl.hu[j * d + i];
            }
    }
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double t = times[k];
        if (t < 0.0 || t > ctrl.cells.back() * (1.0 + 1e-12)) throw std::invalid_argument("evaluation time outside the control cells");
        for (std::size_t j = 0; j < C && ctrl.cells[j] < t; ++j) {
            const double len = std::min(ctrl.cells[j + 1], t) - ctrl.cells[j];
            for (std::size_t i = 0; i < e; ++i) v[k * D + d + i] += len * ctrl.vp[j * e + i];
        }
    }
    return {times, std::move(v), D};
}

RoughPath cm_lift(const CameronMartinControl& ctrl, const std::vector<double>& times, HolderExponents exponents) {
    return lift_fbm(cm_to_path(ctrl, times), exponents);
}

RoughPath translate(const RoughPath& lift, const PiecewiseLinearPath& h) {
    if (h.dim() != lift.dim()) throw std::invalid_argument("translation dimension mismatch");
    const auto& g = lift.grid();
    const std::size_t d = lift.dim();
    std::vector<double> hv(g.size() * d);
    if (h.times() == g) {
        hv = h.values();
    } else {
        for (std::size_t k = 0; k < g.size(); ++k) {
            const auto x = h.value_at(g[k]);
            std::copy(x.begin(), x.end(), hv.begin() + static_cast<std::ptrdiff_t>(k * d));
        }
    }
    RoughPath out = roughpath::translate_linear(lift, hv);
    if (lift.geometric()) {
        for (std::size_t k = 0; k < out.steps(); ++k) {
            const auto& b = out.block(k);
            const double tol = 1e-8 * std::max(1.0, algebra::max_abs(b));
            if (algebra::shuffle_defect(b) > tol)
                throw std::runtime_error("translated lift failed the shuffle check at step " + std::to_string(k));
        }
    }
    return out;
}

RoughPath translate(const RoughPath& lift, const CameronMartinControl& ctrl) {
    return translate(lift, cm_to_path(ctrl, lift.grid()));
}

PiecewiseLinearPath dyadic_approximation(const CameronMartinControl& ctrl, int m, const std::vector<double>& times) {
    if (m < 0 || m > 30) throw std::invalid_argument("dyadic level out of range");
    const std::size_t n = std::size_t{1} << m;
    const auto coarse = cm_to_path(ctrl, algebra::uniform_grid(0.0, ctrl.cells.back(), n));
    const std::size_t D = coarse.dim();
    std::vector<double> v(times.size() * D);
    for (std::size_t k = 0; k < times.size(); ++k) {
        const auto x = coarse.value_at(times[k]);
        std::copy(x.begin(), x.end(), v.begin() + static_cast<std::ptrdiff_t>(k * D));
    }
    return {times, std::move(v), D};
}

}  // namespace roughdev::gaussian
