#include "roughdev/controlled/controlled_path.hpp"

#include <algorithm>
#include <boost/math/special_functions/zeta.hpp>
#include <cmath>
#include <stdexcept>

namespace roughdev::controlled {

using algebra::TruncatedTensor;

ControlledPath::ControlledPath(std::shared_ptr<const RoughPath> reference, std::size_t value_dim, std::vector<double> y,
                               std::vector<double> ydag, std::vector<double> ydagdag)
    : ref_(std::move(reference)), w_(value_dim), y_(std::move(y)), yd_(std::move(ydag)), ydd_(std::move(ydagdag)) {
    if (!ref_) throw std::invalid_argument("controlled path needs a reference rough path");
    if (w_ == 0) throw std::invalid_argument("controlled path needs a positive value dimension");
    v_ = ref_->dim();
    const std::size_t p = ref_->points();
    if (y_.size() != p * w_ || yd_.size() != p * w_ * v_ || ydd_.size() != p * w_ * v_ * v_)
        throw std::invalid_argument("controlled path arrays do not match the reference grid");
}

namespace {

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

struct RawPath {
    const double* y;
    const double* yd;
    const double* ydd;
};

// Norms over pairs in [i0, i1]; raw arrays are indexed by absolute grid index.
ControlledNorms norms_impl(const RoughPath& ref, std::size_t W, RawPath p, std::size_t i0, std::size_t i1, double eta,
                           SharpConvention conv) {
    const std::size_t V = ref.dim();
    const std::size_t WV = W * V, WVV = W * V * V;
    ControlledNorms n;
    n.initial = norm2({p.y + i0 * W, W}) + norm2({p.yd + i0 * WV, WV}) + norm2({p.ydd + i0 * WVV, WVV});
    const auto& g = ref.grid();
    TruncatedTensor x(V), tmp(V);
    std::vector<double> sharp(W), ss(WV);
    for (std::size_t i = i0; i < i1; ++i) {
        const double* yi = p.y + i * W;
        const double* ydi = p.yd + i * WV;
        const double* yddi = p.ydd + i * WVV;
        x = ref.block(i);
        for (std::size_t j = i + 1; j <= i1; ++j) {
            if (j > i + 1) {
                algebra::tensor_mul_into(x, ref.block(j - 1), tmp);
                std::swap(x, tmp);
            }
            const double* yj = p.y + j * W;
            const double* ydj = p.yd + j * WV;
            const double* yddj = p.ydd + j * WVV;
            const double* ydd_s = (conv == SharpConvention::LeftEndpoint) ? yddi : yddj;
            auto x1 = x.level1();
            auto x2 = x.level2();
            for (std::size_t w = 0; w < W; ++w) {
                double s = yj[w] - yi[w];
                for (std::size_t a = 0; a < V; ++a) s -= ydi[w * V + a] * x1[a];
                for (std::size_t ab = 0; ab < V * V; ++ab) s -= ydd_s[w * V * V + ab] * x2[ab];
                sharp[w] = s;
                for (std::size_t b = 0; b < V; ++b) {
                    double r = ydj[w * V + b] - ydi[w * V + b];
                    for (std::size_t a = 0; a < V; ++a) r -= yddi[(w * V + a) * V + b] * x1[a];
                    ss[w * V + b] = r;
                }
            }
            double dd = 0.0;
            for (std::size_t q = 0; q < WVV; ++q) dd += (yddj[q] - yddi[q]) * (yddj[q] - yddi[q]);
            const double pe = std::pow(g[j] - g[i], eta);
            n.dagdag_holder = std::max(n.dagdag_holder, std::sqrt(dd) / pe);
            n.sharpsharp = std::max(n.sharpsharp, norm2(ss) / (pe * pe));
            n.sharp = std::max(n.sharp, norm2(sharp) / (pe * pe * pe));
        }
    }
    return n;
}

void check_range(const ControlledPath& cp, std::size_t i0, std::size_t i1) {
    if (!(i0 < i1) || i1 >= cp.points()) throw std::invalid_argument("norm range must satisfy i0 < i1 within the grid");
}

}  // namespace

ControlledNorms controlled_norms(const ControlledPath& cp, double eta, std::size_t i0, std::size_t i1,
                                 SharpConvention conv) {
    check_range(cp, i0, i1);
    return norms_impl(cp.reference(), cp.value_dim(),
                      {cp.y_data().data(), cp.ydag_data().data(), cp.ydagdag_data().data()}, i0, i1, eta, conv);
}

double controlled_distance(const ControlledPath& a, const ControlledPath& b, double eta, std::size_t i0,
                           std::size_t i1) {
    if (a.reference_ptr() != b.reference_ptr() && a.reference().grid() != b.reference().grid())
        throw std::invalid_argument("controlled paths need the same reference");
    if (a.value_dim() != b.value_dim()) throw std::invalid_argument("controlled paths differ in value dimension");
    check_range(a, i0, i1);
    auto diff = [](const std::vector<double>& u, const std::vector<double>& v) {
        std::vector<double> d(u.size());
        for (std::size_t q = 0; q < u.size(); ++q) d[q] = u[q] - v[q];
        return d;
    };
    const auto dy = diff(a.y_data(), b.y_data());
    const auto dyd = diff(a.ydag_data(), b.ydag_data());
    const auto dydd = diff(a.ydagdag_data(), b.ydagdag_data());
    return norms_impl(a.reference(), a.value_dim(), {dy.data(), dyd.data(), dydd.data()}, i0, i1, eta,
                      SharpConvention::LeftEndpoint)
        .q_norm();
}

Remainders remainders(const ControlledPath& cp, SharpConvention conv) {
    const RoughPath& ref = cp.reference();
    const std::size_t W = cp.value_dim(), V = cp.driver_dim();
    Remainders r;
    r.sharp.assign(ref.steps() * W, 0.0);
    r.sharpsharp.assign(ref.steps() * W * V, 0.0);
    for (std::size_t k = 0; k < ref.steps(); ++k) {
        const auto& x = ref.block(k);
        auto x1 = x.level1();
        auto x2 = x.level2();
        auto yi = cp.y(k), yj = cp.y(k + 1);
        auto di = cp.ydag(k), dj = cp.ydag(k + 1);
        auto ddi = cp.ydagdag(k);
        auto dds = (conv == SharpConvention::LeftEndpoint) ? cp.ydagdag(k) : cp.ydagdag(k + 1);
        for (std::size_t w = 0; w < W; ++w) {
            double s = yj[w] - yi[w];
            for (std::size_t a = 0; a < V; ++a) s -= di[w * V + a] * x1[a];
            for (std::size_t ab = 0; ab < V * V; ++ab) s -= dds[w * V * V + ab] * x2[ab];
            r.sharp[k * W + w] = s;
            for (std::size_t b = 0; b < V; ++b) {
                double q = dj[w * V + b] - di[w * V + b];
                for (std::size_t a = 0; a < V; ++a) q -= ddi[(w * V + a) * V + b] * x1[a];
                r.sharpsharp[(k * W + w) * V + b] = q;
            }
        }
    }
    r.norms = controlled_norms(cp, ref.exponents().alpha, 0, ref.steps(), conv);
    return r;
}

ControlledPath driver_as_controlled(std::shared_ptr<const RoughPath> rp) {
    const std::size_t V = rp->dim(), P = rp->points();
    std::vector<double> y(P * V), yd(P * V * V, 0.0), ydd(P * V * V * V, 0.0);
    std::vector<double> cur(rp->origin());
    for (std::size_t k = 0; k < P; ++k) {
        if (k > 0) {
            auto l1 = rp->block(k - 1).level1();
            for (std::size_t i = 0; i < V; ++i) cur[i] += l1[i];
        }
        for (std::size_t i = 0; i < V; ++i) {
            y[k * V + i] = cur[i];
            yd[(k * V + i) * V + i] = 1.0;
        }
    }
    return ControlledPath(std::move(rp), V, std::move(y), std::move(yd), std::move(ydd));
}

ControlledPath compose(const SmoothFunction4& phi, const ControlledPath& cp) {
    const std::size_t W = cp.value_dim(), V = cp.driver_dim(), P = cp.points();
    if (phi.in_dim != W) throw std::invalid_argument("compose: function input dimension mismatch");
    const std::size_t O = phi.out_dim;
    std::vector<double> z(P * O), zd(P * O * V, 0.0), zdd(P * O * V * V, 0.0);
    std::vector<double> val(O), gr(O * W), he(O * W * W);
    for (std::size_t k = 0; k < P; ++k) {
        auto y = cp.y(k);
        auto yd = cp.ydag(k);
        auto ydd = cp.ydagdag(k);
        phi.eval(y, val);
        phi.grad(y, gr);
        phi.hess(y, he);
        std::copy(val.begin(), val.end(), z.begin() + static_cast<std::ptrdiff_t>(k * O));
        double* d1 = zd.data() + k * O * V;
        double* d2 = zdd.data() + k * O * V * V;
        for (std::size_t o = 0; o < O; ++o) {
            for (std::size_t w = 0; w < W; ++w) {
                const double g = gr[o * W + w];
                if (g == 0.0) continue;
                for (std::size_t i = 0; i < V; ++i) d1[o * V + i] += g * yd[w * V + i];
                for (std::size_t ij = 0; ij < V * V; ++ij) d2[o * V * V + ij] += g * ydd[w * V * V + ij];
            }
            for (std::size_t w = 0; w < W; ++w) {
                for (std::size_t u = 0; u < W; ++u) {
                    const double h = he[(o * W + w) * W + u];
                    if (h == 0.0) continue;
                    for (std::size_t i = 0; i < V; ++i)
                        for (std::size_t j = 0; j < V; ++j) d2[(o * V + i) * V + j] += h * yd[w * V + i] * yd[u * V + j];
                }
            }
        }
    }
    return ControlledPath(cp.reference_ptr(), O, std::move(z), std::move(zd), std::move(zdd));
}

std::vector<double> integral_germ(const ControlledPath& cp, std::size_t k, const TruncatedTensor& x) {
    const std::size_t V = cp.driver_dim();
    const std::size_t Wo = cp.value_dim() / V;
    auto y = cp.y(k);
    auto yd = cp.ydag(k);
    auto ydd = cp.ydagdag(k);
    auto x1 = x.level1();
    auto x2 = x.level2();
    auto x3 = x.level3();
    std::vector<double> out(Wo, 0.0);
    for (std::size_t o = 0; o < Wo; ++o) {
        double s = 0.0;
        for (std::size_t j = 0; j < V; ++j) {
            const std::size_t w = o * V + j;
            s += y[w] * x1[j];
            for (std::size_t i = 0; i < V; ++i) {
                s += yd[w * V + i] * x2[i * V + j];
                for (std::size_t l = 0; l < V; ++l) s += ydd[(w * V + i) * V + l] * x3[(i * V + l) * V + j];
            }
        }
        out[o] = s;
    }
    return out;
}

ControlledPath rough_integral(const ControlledPath& cp) {
    const std::size_t V = cp.driver_dim(), W = cp.value_dim(), P = cp.points();
    if (W % V != 0) throw std::invalid_argument("rough integral needs an integrand in L(V, W')");
    const std::size_t Wo = W / V;
    const RoughPath& ref = cp.reference();
    std::vector<double> z(P * Wo, 0.0), zd(cp.y_data()), zdd(P * Wo * V * V);
    for (std::size_t k = 0; k + 1 < P; ++k) {
        const auto g = integral_germ(cp, k, ref.block(k));
        for (std::size_t o = 0; o < Wo; ++o) z[(k + 1) * Wo + o] = z[k * Wo + o] + g[o];
    }
    for (std::size_t k = 0; k < P; ++k) {
        auto yd = cp.ydag(k);
        for (std::size_t o = 0; o < Wo; ++o)
            for (std::size_t i = 0; i < V; ++i)
                for (std::size_t j = 0; j < V; ++j) zdd[((k * Wo + o) * V + i) * V + j] = yd[(o * V + j) * V + i];
    }
    return ControlledPath(cp.reference_ptr(), Wo, std::move(z), std::move(zd), std::move(zdd));
}

ControlledPath rough_integral(const ControlledPath& cp, const RoughPath& rp) {
    if (&cp.reference() != &rp) {
        const RoughPath& ref = cp.reference();
        bool same = ref.grid() == rp.grid() && ref.dim() == rp.dim();
        for (std::size_t k = 0; same && k < rp.steps(); ++k)
            same = algebra::max_abs_diff(ref.block(k), rp.block(k)) == 0.0;
        if (!same) throw std::invalid_argument("integrand is not controlled by the given rough path");
    }
    return rough_integral(cp);
}

std::vector<SewingRecord> sewing_diagnostic(const ControlledPath& cp, std::size_t stride) {
    const RoughPath& ref = cp.reference();
    if (stride < 1 || stride > ref.steps()) throw std::invalid_argument("sewing stride out of range");
    const double alpha = ref.exponents().alpha;
    const double theta = 4.0 * alpha;
    const double c = std::pow(2.0, theta) * boost::math::zeta(theta);
    const ControlledPath z = rough_integral(cp);
    const std::size_t Wo = z.value_dim();
    std::vector<SewingRecord> out;
    for (std::size_t i0 = 0; i0 + stride <= ref.steps(); i0 += stride) {
        const std::size_t i1 = i0 + stride;
        const auto x = ref.between(i0, i1);
        const auto g = integral_germ(cp, i0, x);
        double e = 0.0;
        for (std::size_t o = 0; o < Wo; ++o) {
            const double d = z.y(i1)[o] - z.y(i0)[o] - g[o];
            e += d * d;
        }
        SewingRecord r;
        r.i0 = i0;
        r.i1 = i1;
        r.local_error = std::sqrt(e);
        const auto n = controlled_norms(cp, alpha, i0, i1);
        const auto xn = roughpath::holder_norms(roughpath::restrict(ref, i0, i1), alpha, roughpath::HolderMode::AllPairs);
        const double span = ref.grid()[i1] - ref.grid()[i0];
        r.bound = c * std::pow(span, theta) * (n.sharp * xn[0] + n.sharpsharp * xn[1] + n.dagdag_holder * xn[2]);
        out.push_back(r);
    }
    return out;
}

}  // namespace roughdev::controlled
