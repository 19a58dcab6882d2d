#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "roughdev/controlled/controlled_path.hpp"

using namespace roughdev::controlled;
using roughdev::algebra::PiecewiseLinearPath;
using roughdev::algebra::uniform_grid;
using roughdev::roughpath::from_signature_path;
using roughdev::roughpath::HolderExponents;
using roughdev::roughpath::restrict;

namespace {

std::shared_ptr<const RoughPath> smooth_driver(std::size_t n, double T = 1.0) {
    const auto t = uniform_grid(0.0, T, n);
    std::vector<double> v;
    for (double s : t) {
        v.push_back(std::sin(3.0 * s));
        v.push_back(s * s - 0.5 * s);
    }
    return std::make_shared<const RoughPath>(from_signature_path(PiecewiseLinearPath(t, v, 2), HolderExponents()));
}

std::shared_ptr<const RoughPath> scalar_driver(std::size_t n) {
    const auto t = uniform_grid(0.0, 1.0, n);
    std::vector<double> v;
    for (double s : t) v.push_back(std::cos(2.0 * s) + s);
    return std::make_shared<const RoughPath>(from_signature_path(PiecewiseLinearPath(t, v, 1), HolderExponents()));
}

std::shared_ptr<const RoughPath> walk_driver(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    const auto t = uniform_grid(0.0, 1.0, n);
    std::vector<double> v(2 * (n + 1), 0.0);
    for (std::size_t k = 1; k <= n; ++k)
        for (int i = 0; i < 2; ++i) v[2 * k + i] = v[2 * (k - 1) + i] + std::sqrt(1.0 / n) * n01(rng);
    return std::make_shared<const RoughPath>(from_signature_path(PiecewiseLinearPath(t, v, 2), HolderExponents()));
}

// 2 -> 2 map with bounded derivatives
SmoothFunction4 wave() {
    std::vector<TermSum> c(2);
    c[0].sinusoids = {{1.0, {1.0, 0.5}, 0.2}};
    c[0].monomials = {{0.3, {0, 1}}};
    c[1].sinusoids = {{0.7, {-0.4, 1.3}, 0.0}, {0.2, {2.0, 0.0}, 1.0}};
    return term_function(2, std::move(c), 6.0);
}

// 2 -> 4 map, read as L(R^2, R^2)
SmoothFunction4 wave4() {
    std::vector<TermSum> c(4);
    c[0].sinusoids = {{1.0, {1.0, 0.0}, 0.0}};
    c[1].sinusoids = {{0.5, {0.0, 1.0}, 0.3}};
    c[2].sinusoids = {{0.8, {1.0, 1.0}, 1.1}};
    c[3].monomials = {{1.0, {0, 0}}};
    c[3].sinusoids = {{0.1, {2.0, -1.0}, 0.0}};
    return term_function(2, std::move(c), 8.0);
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

ControlledPath slice(const ControlledPath& cp, std::size_t i, std::size_t j) {
    auto ref = std::make_shared<const RoughPath>(restrict(cp.reference(), i, j));
    const std::size_t W = cp.value_dim(), V = cp.driver_dim();
    auto cut = [&](const std::vector<double>& a, std::size_t per) {
        return std::vector<double>(a.begin() + static_cast<std::ptrdiff_t>(i * per),
                                   a.begin() + static_cast<std::ptrdiff_t>((j + 1) * per));
    };
    return ControlledPath(ref, W, cut(cp.y_data(), W), cut(cp.ydag_data(), W * V), cut(cp.ydagdag_data(), W * V * V));
}

}  // namespace

TEST_CASE("term functions pass the derivative chain check") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<std::vector<double>> pts;
    for (int k = 0; k < 10; ++k) pts.push_back({u(rng), u(rng)});
    CHECK(derivative_check(wave(), pts) < 1e-6);
    CHECK(derivative_check(wave4(), pts) < 1e-6);
    const auto fd = finite_difference_adapter(wave().eval, 2, 2, 6.0);
    CHECK(fd.finite_difference);
    const auto g = fd.gradient(pts[0]), ge = wave().gradient(pts[0]);
    CHECK(max_diff(g, ge) < 1e-5);
}

TEST_CASE("trivial remainders") {
    auto rp = smooth_driver(16);
    const std::size_t P = rp->points();
    std::vector<double> y(P * 3, 0.0);
    for (std::size_t k = 0; k < P; ++k) y[3 * k] = 1.5, y[3 * k + 1] = -2.0, y[3 * k + 2] = 0.25;
    const ControlledPath c(rp, 3, y, std::vector<double>(P * 6, 0.0), std::vector<double>(P * 12, 0.0));
    const auto r = remainders(c);
    for (double e : r.sharp) CHECK(e == 0.0);
    for (double e : r.sharpsharp) CHECK(e == 0.0);

    const auto drv = driver_as_controlled(rp);
    const auto rd = remainders(drv);
    for (double e : rd.sharp) CHECK(std::abs(e) < 1e-15);
    for (double e : rd.sharpsharp) CHECK(e == 0.0);
    CHECK(rd.norms.sharp < 1e-13);
}

TEST_CASE("grid mismatch is rejected") {
    auto rp = smooth_driver(8);
    CHECK_THROWS_AS(ControlledPath(rp, 1, std::vector<double>(5, 0.0), std::vector<double>(18, 0.0),
                                   std::vector<double>(36, 0.0)),
                    std::invalid_argument);
    const auto drv = driver_as_controlled(rp);
    const auto other = driver_as_controlled(smooth_driver(16));
    CHECK_THROWS_AS(controlled_distance(drv, other, 0.3, 0, 8), std::invalid_argument);
    CHECK_THROWS_AS(compose(wave4(), driver_as_controlled(scalar_driver(8))), std::invalid_argument);
}

TEST_CASE("remainder norm of a smooth image stays bounded under refinement") {
    std::vector<double> seq;
    for (std::size_t n : {32u, 64u, 128u, 256u}) {
        const auto y = compose(wave(), driver_as_controlled(smooth_driver(n)));
        seq.push_back(remainders(y).norms.sharp);
    }
    for (std::size_t k = 1; k < seq.size(); ++k) {
        CHECK(seq[k] >= seq[k - 1] * (1.0 - 1e-9));
        CHECK(seq[k] <= seq[0] * 1.1);
    }
    CHECK(std::isfinite(seq.back()));
}

TEST_CASE("left and right endpoint conventions") {
    const auto y = compose(wave(), driver_as_controlled(smooth_driver(64)));
    const auto l = remainders(y, SharpConvention::LeftEndpoint);
    const auto r = remainders(y, SharpConvention::RightEndpoint);
    CHECK(std::isfinite(r.norms.sharp));
    CHECK(max_diff(l.sharp, r.sharp) > 0.0);
    CHECK(max_diff(l.sharpsharp, r.sharpsharp) == 0.0);
}

TEST_CASE("composition examples") {
    auto rp = smooth_driver(32);
    const auto y = compose(wave(), driver_as_controlled(rp));
    const auto same = compose(identity_map(2), y);
    CHECK(same.y_data() == y.y_data());
    CHECK(same.ydag_data() == y.ydag_data());
    CHECK(max_diff(same.ydagdag_data(), y.ydagdag_data()) == 0.0);

    const auto c = compose(constant(2, {4.0, -1.0, 2.0}), y);
    CHECK(c.value_dim() == 3);
    for (std::size_t k = 0; k < c.points(); ++k) {
        CHECK(c.y(k)[0] == 4.0);
        CHECK(c.y(k)[2] == 2.0);
    }
    for (double e : c.ydag_data()) CHECK(e == 0.0);
    for (double e : c.ydagdag_data()) CHECK(e == 0.0);
}

TEST_CASE("square of a controlled path") {
    auto rp = scalar_driver(40);
    std::vector<TermSum> s(1);
    s[0].sinusoids = {{1.0, {1.0}, 0.4}};
    const auto y = compose(term_function(1, s, 5.0), driver_as_controlled(rp));
    std::vector<TermSum> sq(1);
    sq[0].monomials = {{1.0, {2}}};
    const auto z = compose(term_function(1, sq, 0.0), y);
    for (std::size_t k = 0; k < y.points(); ++k) {
        const double Y = y.y(k)[0], D = y.ydag(k)[0], DD = y.ydagdag(k)[0];
        CHECK(z.y(k)[0] == doctest::Approx(Y * Y).epsilon(1e-14));
        CHECK(z.ydag(k)[0] == doctest::Approx(2.0 * Y * D).scale(1.0).epsilon(1e-13));
        CHECK(z.ydagdag(k)[0] == doctest::Approx(2.0 * Y * DD + 2.0 * D * D).scale(1.0).epsilon(1e-13));
    }
}

TEST_CASE("composition is locally Lipschitz with a stable constant") {
    std::vector<double> ratios;
    for (std::size_t n : {64u, 128u, 256u}) {
        auto rp = smooth_driver(n);
        const auto a = compose(wave(), driver_as_controlled(rp));
        std::vector<TermSum> pert(2);
        pert[0].sinusoids = {{1.0, {1.0, 0.5}, 0.25}};
        pert[0].monomials = {{0.3, {0, 1}}};
        pert[1].sinusoids = {{0.7, {-0.4, 1.3}, 0.0}, {0.2, {2.0, 0.0}, 1.05}};
        const auto b = compose(term_function(2, pert, 6.0), driver_as_controlled(rp));
        const double din = controlled_distance(a, b, 0.3, 0, n);
        const double dout = controlled_distance(compose(wave(), a), compose(wave(), b), 0.3, 0, n);
        CHECK(din > 0.0);
        ratios.push_back(dout / din);
    }
    for (double r : ratios) CHECK(std::isfinite(r));
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    CHECK(*hi <= 1.25 * *lo);
}

TEST_CASE("integral of a constant") {
    auto rp = smooth_driver(20);
    const std::size_t P = rp->points();
    std::vector<double> y;
    for (std::size_t k = 0; k < P; ++k) y.insert(y.end(), {2.0, -1.0, 0.5, 3.0});
    const ControlledPath c(rp, 4, y, std::vector<double>(P * 8, 0.0), std::vector<double>(P * 16, 0.0));
    const auto z = rough_integral(c, *rp);
    for (std::size_t k = 0; k < P; ++k) {
        const auto x = rp->value(k);
        const double dx0 = x[0] - rp->value(0)[0], dx1 = x[1] - rp->value(0)[1];
        CHECK(z.y(k)[0] == doctest::Approx(2.0 * dx0 - dx1).scale(1.0).epsilon(1e-14));
        CHECK(z.y(k)[1] == doctest::Approx(0.5 * dx0 + 3.0 * dx1).scale(1.0).epsilon(1e-14));
    }
}

TEST_CASE("integral of the driver against itself in one dimension") {
    auto rp = scalar_driver(64);
    const auto drv = driver_as_controlled(rp);
    std::vector<double> shifted(drv.y_data());
    for (double& e : shifted) e -= rp->value(0)[0];
    const auto z = rough_integral(ControlledPath(rp, 1, shifted, drv.ydag_data(), drv.ydagdag_data()), *rp);
    const auto zraw = rough_integral(drv, *rp);
    // Riemann–Stieltjes oracle on the smooth underlying function
    const std::size_t m = 200000;
    double rs = 0.0;
    auto x = [](double s) { return std::cos(2.0 * s) + s; };
    for (std::size_t k = 0; k < m; ++k) {
        const double a = static_cast<double>(k) / m, b = static_cast<double>(k + 1) / m;
        rs += (x(0.5 * (a + b)) - x(0.0)) * (x(b) - x(a));
    }
    const double x0 = rp->value(0)[0], xt = rp->value(64)[0];
    CHECK(z.y(64)[0] == doctest::Approx(0.5 * (xt - x0) * (xt - x0)).epsilon(1e-12));
    CHECK(z.y(64)[0] == doctest::Approx(rs).epsilon(1e-8));
    CHECK(zraw.y(64)[0] == doctest::Approx(0.5 * (xt * xt - x0 * x0)).epsilon(1e-12));
}

TEST_CASE("mismatched reference is rejected by the integral") {
    auto rp = smooth_driver(16);
    const auto integrand = compose(wave4(), driver_as_controlled(rp));
    CHECK_NOTHROW(rough_integral(integrand, *smooth_driver(16)));
    CHECK_THROWS_AS(rough_integral(integrand, *walk_driver(16, 1)), std::invalid_argument);
    CHECK_THROWS_AS(rough_integral(compose(constant(2, {1.0, 2.0, 3.0}), driver_as_controlled(rp))),
                    std::invalid_argument);
}

TEST_CASE("integral remainder identity") {
    for (auto rp : {smooth_driver(64), walk_driver(64, 5)}) {
        const auto integrand = compose(wave4(), driver_as_controlled(rp));
        const auto z = rough_integral(integrand, *rp);
        const auto rz = remainders(z);
        const auto ry = remainders(integrand);
        const std::size_t V = 2, Wo = 2;
        for (std::size_t k = 0; k + 1 < rp->points(); ++k) {
            const auto x = rp->block(k);
            for (std::size_t o = 0; o < Wo; ++o)
                for (std::size_t j = 0; j < V; ++j) {
                    double expect = ry.sharp[k * 4 + o * V + j];
                    for (std::size_t a = 0; a < V; ++a)
                        for (std::size_t b = 0; b < V; ++b)
                            expect += integrand.ydagdag(k)[((o * V + j) * V + a) * V + b] * x.at(a, b);
                    CHECK(std::abs(rz.sharpsharp[k * Wo * V + o * V + j] - expect) < 1e-10);
                }
        }
    }
}

TEST_CASE("sewing bound holds on every coarse pair") {
    for (auto rp : {smooth_driver(256), walk_driver(256, 9)}) {
        const auto integrand = compose(wave4(), driver_as_controlled(rp));
        for (std::size_t stride : {2u, 4u, 16u, 64u, 256u}) {
            std::size_t ok = 0;
            const auto recs = sewing_diagnostic(integrand, stride);
            for (const auto& r : recs) ok += r.local_error <= r.bound;
            CHECK(ok == recs.size());
        }
    }
}

TEST_CASE("integral is linear and additive") {
    auto rp = walk_driver(48, 21);
    const auto a = compose(wave4(), driver_as_controlled(rp));
    const auto b = compose(scaled(wave4(), -0.3), compose(wave(), driver_as_controlled(rp)));
    const double la = 1.7, lb = -2.2;
    std::vector<double> y(a.y_data()), yd(a.ydag_data()), ydd(a.ydagdag_data());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = la * y[i] + lb * b.y_data()[i];
    for (std::size_t i = 0; i < yd.size(); ++i) yd[i] = la * yd[i] + lb * b.ydag_data()[i];
    for (std::size_t i = 0; i < ydd.size(); ++i) ydd[i] = la * ydd[i] + lb * b.ydagdag_data()[i];
    const auto za = rough_integral(a), zb = rough_integral(b);
    const auto zc = rough_integral(ControlledPath(rp, a.value_dim(), y, yd, ydd));
    for (std::size_t k = 0; k < rp->points(); ++k)
        for (std::size_t o = 0; o < 2; ++o)
            CHECK(std::abs(zc.y(k)[o] - la * za.y(k)[o] - lb * zb.y(k)[o]) < 1e-13);

    const std::size_t u = 19, t = 48;
    const auto left = rough_integral(slice(a, 0, u)), right = rough_integral(slice(a, u, t));
    for (std::size_t o = 0; o < 2; ++o)
        CHECK(std::abs(left.y(u)[o] + right.y(t - u)[o] - za.y(t)[o]) < 1e-12);
}
