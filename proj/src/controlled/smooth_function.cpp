#include "roughdev/controlled/smooth_function.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace roughdev::controlled {

namespace {

std::size_t ipow(std::size_t b, int e) {
    std::size_t r = 1;
    for (int i = 0; i < e; ++i) r *= b;
    return r;
}

const DerivativeFn& level_fn(const SmoothFunction4& f, int k) {
    switch (k) {
        case 0: return f.eval;
        case 1: return f.grad;
        case 2: return f.hess;
        case 3: return f.third;
        case 4: return f.fourth;
        default: throw std::invalid_argument("derivative order must be in 0..4");
    }
}

}  // namespace

void SmoothFunction4::check_ready() const {
    if (in_dim == 0 || out_dim == 0) throw std::invalid_argument("smooth function needs positive dimensions");
    if (!eval || !grad || !hess || !third || !fourth)
        throw std::invalid_argument("smooth function needs eval, grad, hess, third and fourth");
}

std::vector<double> SmoothFunction4::derivative(int k, std::span<const double> x) const {
    if (x.size() != in_dim) throw std::invalid_argument("smooth function input dimension mismatch");
    const auto& fn = level_fn(*this, k);
    if (!fn) throw std::invalid_argument("smooth function derivative not supplied");
    std::vector<double> out(out_dim * ipow(in_dim, k), 0.0);
    fn(x, out);
    return out;
}

std::vector<double> SmoothFunction4::value(std::span<const double> x) const { return derivative(0, x); }
std::vector<double> SmoothFunction4::gradient(std::span<const double> x) const { return derivative(1, x); }
std::vector<double> SmoothFunction4::hessian(std::span<const double> x) const { return derivative(2, x); }
std::vector<double> SmoothFunction4::third_derivative(std::span<const double> x) const { return derivative(3, x); }
std::vector<double> SmoothFunction4::fourth_derivative(std::span<const double> x) const { return derivative(4, x); }

SmoothFunction4 affine(std::vector<double> a, std::vector<double> b, std::size_t in_dim) {
    if (in_dim == 0 || b.empty() || a.size() != b.size() * in_dim)
        throw std::invalid_argument("affine map needs A of size out x in and b of size out");
    const std::size_t out = b.size();
    auto A = std::make_shared<const std::vector<double>>(std::move(a));
    auto B = std::make_shared<const std::vector<double>>(std::move(b));
    SmoothFunction4 f;
    f.in_dim = in_dim;
    f.out_dim = out;
    f.eval = [A, B, in_dim, out](std::span<const double> x, std::span<double> y) {
        for (std::size_t o = 0; o < out; ++o) {
            double s = (*B)[o];
            for (std::size_t i = 0; i < in_dim; ++i) s += (*A)[o * in_dim + i] * x[i];
            y[o] = s;
        }
    };
    f.grad = [A](std::span<const double>, std::span<double> g) { std::copy(A->begin(), A->end(), g.begin()); };
    auto zero = [](std::span<const double>, std::span<double> z) { std::fill(z.begin(), z.end(), 0.0); };
    f.hess = zero;
    f.third = zero;
    f.fourth = zero;
    double na = 0.0, nb = 0.0;
    for (double v : *A) na = std::max(na, std::abs(v));
    for (double v : *B) nb = std::max(nb, std::abs(v));
    f.bound = nb + 2.0 * na * static_cast<double>(in_dim);
    return f;
}

SmoothFunction4 constant(std::size_t in_dim, std::vector<double> c) {
    const std::size_t out = c.size();
    return affine(std::vector<double>(out * in_dim, 0.0), std::move(c), in_dim);
}

SmoothFunction4 identity_map(std::size_t n) {
    std::vector<double> a(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) a[i * n + i] = 1.0;
    return affine(std::move(a), std::vector<double>(n, 0.0), n);
}

namespace {

double monomial_derivative(const Monomial& m, std::span<const double> x, std::span<const std::size_t> idx) {
    const std::size_t n = x.size();
    int counts[16] = {0};
    std::vector<int> cv;
    int* c = counts;
    if (n > 16) {
        cv.assign(n, 0);
        c = cv.data();
    }
    for (std::size_t i : idx) c[i] += 1;
    double v = m.coef;
    for (std::size_t j = 0; j < n; ++j) {
        const int p = m.powers[j];
        if (c[j] > p) return 0.0;
        for (int q = 0; q < c[j]; ++q) v *= static_cast<double>(p - q);
        const int e = p - c[j];
        if (e > 0) v *= (e == 1) ? x[j] : std::pow(x[j], e);
    }
    return v;
}

double sinusoid_derivative(const Sinusoid& s, std::span<const double> x, std::span<const std::size_t> idx) {
    double arg = s.phase;
    for (std::size_t j = 0; j < x.size(); ++j) arg += s.freq[j] * x[j];
    double v = s.coef;
    for (std::size_t i : idx) v *= s.freq[i];
    switch (idx.size() % 4) {
        case 0: return v * std::sin(arg);
        case 1: return v * std::cos(arg);
        case 2: return -v * std::sin(arg);
        default: return -v * std::cos(arg);
    }
}

}  // namespace

SmoothFunction4 term_function(std::size_t in_dim, std::vector<TermSum> components, double bound) {
    if (in_dim == 0 || components.empty()) throw std::invalid_argument("term function needs dimensions");
    for (const auto& c : components) {
        for (const auto& m : c.monomials) {
            if (m.powers.size() != in_dim) throw std::invalid_argument("monomial powers size mismatch");
            for (int p : m.powers)
                if (p < 0) throw std::invalid_argument("monomial powers must be nonnegative");
        }
        for (const auto& s : c.sinusoids)
            if (s.freq.size() != in_dim) throw std::invalid_argument("sinusoid frequency size mismatch");
    }
    auto comps = std::make_shared<const std::vector<TermSum>>(std::move(components));
    const std::size_t out = comps->size();
    auto make = [comps, in_dim, out](int k) -> DerivativeFn {
        return [comps, in_dim, out, k](std::span<const double> x, std::span<double> y) {
            const std::size_t block = ipow(in_dim, k);
            std::size_t idx[4] = {0, 0, 0, 0};
            for (std::size_t flat = 0; flat < block; ++flat) {
                std::size_t rem = flat;
                for (int l = k - 1; l >= 0; --l) {
                    idx[l] = rem % in_dim;
                    rem /= in_dim;
                }
                std::span<const std::size_t> ix(idx, static_cast<std::size_t>(k));
                for (std::size_t o = 0; o < out; ++o) {
                    double s = 0.0;
                    for (const auto& m : (*comps)[o].monomials) s += monomial_derivative(m, x, ix);
                    for (const auto& q : (*comps)[o].sinusoids) s += sinusoid_derivative(q, x, ix);
                    y[o * block + flat] = s;
                }
            }
        };
    };
    SmoothFunction4 f;
    f.in_dim = in_dim;
    f.out_dim = out;
    f.eval = make(0);
    f.grad = make(1);
    f.hess = make(2);
    f.third = make(3);
    f.fourth = make(4);
    f.bound = bound;
    return f;
}

SmoothFunction4 stack_outputs(const SmoothFunction4& a, const SmoothFunction4& b) {
    if (a.in_dim != b.in_dim) throw std::invalid_argument("stacked maps need the same input dimension");
    const std::size_t n = a.in_dim, ma = a.out_dim, mb = b.out_dim;
    SmoothFunction4 f;
    f.in_dim = n;
    f.out_dim = ma + mb;
    auto make = [a, b, n, ma, mb](int k) -> DerivativeFn {
        return [a, b, n, ma, mb, k](std::span<const double> x, std::span<double> y) {
            const std::size_t block = ipow(n, k);
            level_fn(a, k)(x, y.subspan(0, ma * block));
            level_fn(b, k)(x, y.subspan(ma * block, mb * block));
        };
    };
    f.eval = make(0);
    f.grad = make(1);
    f.hess = make(2);
    f.third = make(3);
    f.fourth = make(4);
    f.bound = a.bound + b.bound;
    f.finite_difference = a.finite_difference || b.finite_difference;
    return f;
}

SmoothFunction4 hstack_columns(const SmoothFunction4& fd, const SmoothFunction4& sigma, std::size_t m, std::size_t d) {
    if (fd.in_dim != m || fd.out_dim != m) throw std::invalid_argument("drift must map R^m to R^m");
    if (sigma.in_dim != m || sigma.out_dim != m * d) throw std::invalid_argument("diffusion must map R^m to R^{m x d}");
    SmoothFunction4 f;
    f.in_dim = m;
    f.out_dim = m * (1 + d);
    auto make = [fd, sigma, m, d](int k) -> DerivativeFn {
        return [fd, sigma, m, d, k](std::span<const double> x, std::span<double> y) {
            const std::size_t block = ipow(m, k);
            thread_local std::vector<double> bf, bs;
            bf.resize(m * block);
            bs.resize(m * d * block);
            level_fn(fd, k)(x, bf);
            level_fn(sigma, k)(x, bs);
            for (std::size_t o = 0; o < m; ++o) {
                std::copy_n(bf.begin() + static_cast<std::ptrdiff_t>(o * block), block,
                            y.begin() + static_cast<std::ptrdiff_t>((o * (1 + d)) * block));
                std::copy_n(bs.begin() + static_cast<std::ptrdiff_t>(o * d * block), d * block,
                            y.begin() + static_cast<std::ptrdiff_t>((o * (1 + d) + 1) * block));
            }
        };
    };
    f.eval = make(0);
    f.grad = make(1);
    f.hess = make(2);
    f.third = make(3);
    f.fourth = make(4);
    f.bound = std::max(fd.bound, sigma.bound);
    f.finite_difference = fd.finite_difference || sigma.finite_difference;
    return f;
}

SmoothFunction4 scaled(const SmoothFunction4& phi, double c) {
    SmoothFunction4 f = phi;
    auto make = [phi, c](int k) -> DerivativeFn {
        return [phi, c, k](std::span<const double> x, std::span<double> y) {
            level_fn(phi, k)(x, y);
            for (double& v : y) v *= c;
        };
    };
    f.eval = make(0);
    f.grad = make(1);
    f.hess = make(2);
    f.third = make(3);
    f.fourth = make(4);
    f.bound = std::abs(c) * phi.bound;
    return f;
}

namespace {

// Extracts the x-block (first m coordinates) of an order-k derivative of a map on R^{m+n}.
void extract_block(std::span<const double> full, std::size_t out, std::size_t mn, std::size_t m, int k,
                   std::span<double> y, double weight, bool accumulate) {
    const std::size_t bfull = ipow(mn, k), bx = ipow(m, k);
    std::size_t idx[4];
    for (std::size_t o = 0; o < out; ++o) {
        for (std::size_t flat = 0; flat < bx; ++flat) {
            std::size_t rem = flat;
            for (int l = k - 1; l >= 0; --l) {
                idx[l] = rem % m;
                rem /= m;
            }
            std::size_t ff = 0;
            for (int l = 0; l < k; ++l) ff = ff * mn + idx[l];
            const double v = weight * full[o * bfull + ff];
            if (accumulate)
                y[o * bx + flat] += v;
            else
                y[o * bx + flat] = v;
        }
    }
}

}  // namespace

SmoothFunction4 average_in_second(const SmoothFunction4& phi, std::size_t m, std::vector<std::vector<double>> ys,
                                  std::vector<double> weights) {
    if (m == 0 || m >= phi.in_dim) throw std::invalid_argument("average_in_second needs 0 < m < input dimension");
    if (ys.empty() || ys.size() != weights.size()) throw std::invalid_argument("average_in_second needs matching ys and weights");
    const std::size_t mn = phi.in_dim;
    for (const auto& y : ys)
        if (y.size() != mn - m) throw std::invalid_argument("average_in_second: y has wrong dimension");
    auto Y = std::make_shared<const std::vector<std::vector<double>>>(std::move(ys));
    auto W = std::make_shared<const std::vector<double>>(std::move(weights));
    SmoothFunction4 f;
    f.in_dim = m;
    f.out_dim = phi.out_dim;
    auto make = [phi, m, mn, Y, W](int k) -> DerivativeFn {
        return [phi, m, mn, Y, W, k](std::span<const double> x, std::span<double> y) {
            std::vector<double> z(mn);
            std::copy(x.begin(), x.end(), z.begin());
            std::vector<double> full(phi.out_dim * ipow(mn, k));
            for (std::size_t q = 0; q < Y->size(); ++q) {
                std::copy((*Y)[q].begin(), (*Y)[q].end(), z.begin() + static_cast<std::ptrdiff_t>(m));
                level_fn(phi, k)(z, full);
                extract_block(full, phi.out_dim, mn, m, k, y, (*W)[q], q > 0);
            }
        };
    };
    f.eval = make(0);
    f.grad = make(1);
    f.hess = make(2);
    f.third = make(3);
    f.fourth = make(4);
    double wsum = 0.0;
    for (double w : *W) wsum += std::abs(w);
    f.bound = wsum * phi.bound;
    f.finite_difference = phi.finite_difference;
    return f;
}

SmoothFunction4 freeze_second(const SmoothFunction4& phi, std::size_t m, std::vector<double> y) {
    return average_in_second(phi, m, {std::move(y)}, {1.0});
}

SmoothFunction4 finite_difference_adapter(DerivativeFn eval, std::size_t in_dim, std::size_t out_dim, double bound,
                                          double step) {
    if (!eval || in_dim == 0 || out_dim == 0) throw std::invalid_argument("finite-difference adapter needs a map");
    auto base = std::make_shared<DerivativeFn>(std::move(eval));
    // order-k derivative by central differences of order k-1
    std::shared_ptr<std::function<void(int, std::span<const double>, std::span<double>)>> rec =
        std::make_shared<std::function<void(int, std::span<const double>, std::span<double>)>>();
    std::weak_ptr<std::function<void(int, std::span<const double>, std::span<double>)>> weak = rec;
    *rec = [base, in_dim, out_dim, step, weak](int k, std::span<const double> x, std::span<double> y) {
        if (k == 0) {
            (*base)(x, y);
            return;
        }
        auto self = weak.lock();
        const std::size_t lower = out_dim * ipow(in_dim, k - 1);
        std::vector<double> xp(x.begin(), x.end()), fp(lower), fm(lower);
        for (std::size_t i = 0; i < in_dim; ++i) {
            const double h = step * std::max(1.0, std::abs(x[i]));
            xp[i] = x[i] + h;
            (*self)(k - 1, xp, fp);
            xp[i] = x[i] - h;
            (*self)(k - 1, xp, fm);
            xp[i] = x[i];
            for (std::size_t q = 0; q < lower; ++q) y[q * in_dim + i] = (fp[q] - fm[q]) / (2.0 * h);
        }
    };
    SmoothFunction4 f;
    f.in_dim = in_dim;
    f.out_dim = out_dim;
    auto make = [rec](int k) -> DerivativeFn {
        return [rec, k](std::span<const double> x, std::span<double> y) { (*rec)(k, x, y); };
    };
    f.eval = make(0);
    f.grad = make(1);
    f.hess = make(2);
    f.third = make(3);
    f.fourth = make(4);
    f.bound = bound;
    f.finite_difference = true;
    return f;
}

double derivative_check(const SmoothFunction4& phi, std::span<const std::vector<double>> points, double step) {
    phi.check_ready();
    const std::size_t n = phi.in_dim;
    double worst = 0.0;
    for (const auto& x : points) {
        for (int k = 1; k <= 4; ++k) {
            const auto exact = phi.derivative(k, x);
            const std::size_t lower = exact.size() / n;
            double scale = 1.0;
            for (double v : exact) scale = std::max(scale, std::abs(v));
            std::vector<double> xp(x);
            for (std::size_t i = 0; i < n; ++i) {
                const double h = step * std::max(1.0, std::abs(x[i]));
                xp[i] = x[i] + h;
                const auto fp = phi.derivative(k - 1, xp);
                xp[i] = x[i] - h;
                const auto fm = phi.derivative(k - 1, xp);
                xp[i] = x[i];
                for (std::size_t q = 0; q < lower; ++q) {
                    const double fd = (fp[q] - fm[q]) / (2.0 * h);
                    worst = std::max(worst, std::abs(fd - exact[q * n + i]) / scale);
                }
            }
        }
    }
    return worst;
}

}  // namespace roughdev::controlled
