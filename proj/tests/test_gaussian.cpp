#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "roughdev/gaussian/gaussian.hpp"

using namespace roughdev::gaussian;
using roughdev::algebra::max_abs;
using roughdev::algebra::max_abs_diff;
using roughdev::algebra::segment_signature;
using roughdev::algebra::shuffle_defect;
using roughdev::algebra::TruncatedTensor;
using roughdev::algebra::uniform_grid;
using roughdev::roughpath::from_signature_path;

namespace {

struct Moments {
    double mean = 0.0, var = 0.0, stderr_mean = 0.0;
};

Moments moments(const std::vector<double>& x) {
    Moments m;
    for (double v : x) m.mean += v;
    m.mean /= static_cast<double>(x.size());
    for (double v : x) m.var += (v - m.mean) * (v - m.mean);
    m.var /= static_cast<double>(x.size() - 1);
    m.stderr_mean = std::sqrt(m.var / static_cast<double>(x.size()));
    return m;
}

PiecewiseLinearPath random_pl(std::mt19937_64& rng, std::size_t d, std::size_t n) {
    std::normal_distribution<double> n01;
    std::vector<double> v((n + 1) * d);
    for (double& e : v) e = n01(rng);
    return {uniform_grid(0.0, 1.0, n), v, d};
}

CameronMartinControl random_control(std::mt19937_64& rng, std::size_t d, std::size_t e, std::size_t cells) {
    std::normal_distribution<double> n01;
    auto c = CameronMartinControl::zero(0.3, uniform_grid(0.0, 1.0, cells), d, e);
    for (double& x : c.hu) x = n01(rng);
    for (double& x : c.vp) x = n01(rng);
    return c;
}

}  // namespace

TEST_CASE("spec validation") {
    FbmSpec s;
    CHECK_NOTHROW(s.validate());
    s.hurst = 0.5;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.test_mode = true;
    CHECK_NOTHROW(s.validate());
    s.steps = 0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("Brownian test mode has independent N(0, dt) increments") {
    FbmSpec s;
    s.hurst = 0.5;
    s.test_mode = true;
    s.steps = 16;
    s.seed = 3;
    const FbmSampler sampler(s);
    std::vector<double> a, b, prod;
    for (std::uint64_t i = 0; i < 10000; ++i) {
        const auto p = sampler.sample(i);
        const double x = p.value(5)[0] - p.value(4)[0], y = p.value(11)[0] - p.value(10)[0];
        a.push_back(x * x);
        prod.push_back(x * y);
    }
    const auto ma = moments(a), mp = moments(prod);
    CHECK(std::abs(ma.mean - 1.0 / 16) <= 3.0 * ma.stderr_mean);
    CHECK(std::abs(mp.mean) <= 3.0 * mp.stderr_mean);
}

TEST_CASE("fBM terminal variance") {
    FbmSpec s;
    s.hurst = 0.3;
    s.steps = 64;
    s.seed = 4;
    const FbmSampler sampler(s);
    std::vector<double> v;
    for (std::uint64_t i = 0; i < 10000; ++i) {
        const double b = sampler.sample(i).value(64)[0];
        v.push_back(b * b);
    }
    const auto m = moments(v);
    CHECK(std::abs(m.mean - 1.0) <= 3.0 * m.stderr_mean);
}

TEST_CASE("fBM increment variance at random pairs") {
    for (double H : {0.26, 0.30}) {
        FbmSpec s;
        s.hurst = H;
        s.steps = 100;
        s.dim = 2;
        s.seed = 5;
        const FbmSampler sampler(s);
        std::mt19937_64 rng(6);
        std::uniform_int_distribution<std::size_t> u(0, 100);
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        while (pairs.size() < 5) {
            std::size_t i = u(rng), j = u(rng);
            if (i == j) continue;
            pairs.emplace_back(std::min(i, j), std::max(i, j));
        }
        std::vector<std::vector<double>> sq(5);
        for (std::uint64_t n = 0; n < 10000; ++n) {
            const auto p = sampler.sample(n);
            for (std::size_t q = 0; q < 5; ++q) {
                const double d = p.value(pairs[q].second)[1] - p.value(pairs[q].first)[1];
                sq[q].push_back(d * d);
            }
        }
        for (std::size_t q = 0; q < 5; ++q) {
            const auto m = moments(sq[q]);
            const double target = std::pow((pairs[q].second - pairs[q].first) / 100.0, 2.0 * H);
            CHECK(std::abs(m.mean - target) <= 3.0 * m.stderr_mean);
        }
    }
}

TEST_CASE("circulant sampler above the dense limit") {
    FbmSpec s;
    s.hurst = 0.3;
    s.steps = 8192;
    s.seed = 7;
    const FbmSampler sampler(s);
    CHECK(sampler.approximate());
    std::vector<double> end, inc;
    for (std::uint64_t i = 0; i < 400; ++i) {
        const auto p = sampler.sample(i);
        end.push_back(p.value(8192)[0] * p.value(8192)[0]);
        const double d = p.value(4096)[0] - p.value(2048)[0];
        inc.push_back(d * d);
    }
    const auto me = moments(end), mi = moments(inc);
    CHECK(std::abs(me.mean - 1.0) <= 4.0 * me.stderr_mean);
    CHECK(std::abs(mi.mean - std::pow(0.25, 0.6)) <= 4.0 * mi.stderr_mean);
}

TEST_CASE("streams are reproducible and distinct") {
    FbmSpec s;
    s.steps = 8;
    s.seed = 11;
    const FbmSampler a(s);
    CHECK(a.sample(3).values() == a.sample(3).values());
    CHECK(a.sample(3).values() != a.sample(4).values());
    CHECK(sample_fbm(s, 3).values() == a.sample(3).values());
}

TEST_CASE("fBM lift") {
    const std::vector<double> v{1.0, 2.0};
    const PiecewiseLinearPath line(uniform_grid(0.0, 1.0, 4), {0.0, 0.0, 0.25, 0.5, 0.5, 1.0, 0.75, 1.5, 1.0, 2.0}, 2);
    const auto rp = lift_fbm(line, HolderExponents());
    CHECK(max_abs_diff(rp.between(0, 4), segment_signature(v)) < 1e-14);

    FbmSpec s;
    s.dim = 2;
    s.steps = 64;
    s.seed = 12;
    const FbmSampler sampler(s);
    std::vector<double> area;
    for (std::uint64_t i = 0; i < 2000; ++i) {
        const auto x = lift_fbm(sampler.sample(i), HolderExponents()).between(0, 64);
        area.push_back(0.5 * (x.at(0, 1) - x.at(1, 0)));
    }
    const auto m = moments(area);
    CHECK(std::abs(m.mean) <= 3.0 * m.stderr_mean);
}

TEST_CASE("level-2 lift settles under refinement") {
    FbmSpec s;
    s.dim = 2;
    s.steps = 512;
    s.seed = 13;
    const FbmSampler sampler(s);
    std::vector<std::vector<double>> change(3);
    for (std::uint64_t i = 0; i < 200; ++i) {
        const auto p = sampler.sample(i);
        std::vector<double> lev;
        for (std::size_t stride : {8u, 4u, 2u, 1u}) {
            std::vector<double> t, v;
            for (std::size_t k = 0; k <= 512; k += stride) {
                t.push_back(p.times()[k]);
                v.insert(v.end(), p.value(k).begin(), p.value(k).end());
            }
            lev.push_back(lift_fbm(PiecewiseLinearPath(t, v, 2), HolderExponents()).between(0, t.size() - 1).at(0, 1));
        }
        for (std::size_t r = 0; r < 3; ++r) change[r].push_back(std::abs(lev[r + 1] - lev[r]));
    }
    std::vector<double> med;
    for (auto& c : change) {
        std::sort(c.begin(), c.end());
        med.push_back(0.5 * (c[99] + c[100]));
    }
    CHECK(med[1] < med[0]);
    CHECK(med[2] < med[1]);
}

TEST_CASE("mixed lift") {
    std::mt19937_64 rng(14);
    FbmSpec s;
    s.dim = 2;
    s.steps = 32;
    const auto b = FbmSampler(s).sample(rng);
    const PiecewiseLinearPath zero(b.times(), std::vector<double>(33, 0.0), 1);
    const auto mz = lift_mixed(b, zero, HolderExponents());
    const auto pure = lift_fbm(b, HolderExponents());
    const std::size_t fb[] = {0, 1};
    for (std::size_t k = 0; k < 32; ++k) {
        const auto& x = mz.rough.block(k);
        CHECK(max_abs_diff(project_block(x, fb), pure.block(k)) < 1e-15);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(x.at(i, 2) == 0.0);
            CHECK(x.at(2, i) == 0.0);
        }
    }

    const auto w = sample_bm(1, 32, 1.0, rng);
    const auto geo = lift_mixed(b, w, HolderExponents());
    const auto ito = lift_mixed(b, w, HolderExponents(), CrossMode::ItoCross);
    CHECK(geo.rough.geometric());
    CHECK_FALSE(ito.rough.geometric());
    const std::size_t bw[] = {2};
    const auto joint = lift_fbm(roughdev::algebra::stack_paths(b, w), HolderExponents());
    for (std::size_t i = 0; i < 32; i += 5)
        for (std::size_t j = i + 1; j <= 32; j += 4) {
            const auto x = geo.rough.between(i, j);
            for (std::size_t a = 0; a < 2; ++a)
                CHECK(std::abs(x.at(a, 2) + x.at(2, a) - x.at(a) * x.at(2)) < 1e-10);
            const auto y = ito.rough.between(i, j);
            CHECK(max_abs_diff(project_block(y, fb), project_block(x, fb)) < 1e-12);
            CHECK(max_abs_diff(project_block(y, bw), project_block(joint.between(i, j), bw)) < 1e-12);
            // forward sums
            double fwd = 0.0;
            for (std::size_t k = i; k < j; ++k) fwd += (b.value(k)[0] - b.value(i)[0]) * (w.value(k + 1)[0] - w.value(k)[0]);
            CHECK(std::abs(y.at(0, 2) - fwd) < 1e-12);
        }
    CHECK_THROWS_AS(lift_mixed(b, sample_bm(1, 16, 1.0, rng), HolderExponents()), std::invalid_argument);
}

TEST_CASE("geometric and Itô cross integrals agree in the limit") {
    FbmSpec s;
    s.steps = 256;
    s.seed = 15;
    const FbmSampler sampler(s);
    std::vector<double> vars;
    for (std::size_t stride : {4u, 2u, 1u}) {
        std::vector<double> diff;
        for (std::uint64_t i = 0; i < 500; ++i) {
            const auto b = sampler.sample(i);
            auto rng = make_stream(99, i);
            const auto w = sample_bm(1, 256, 1.0, rng);
            std::vector<double> t, vb, vw;
            for (std::size_t k = 0; k <= 256; k += stride) {
                t.push_back(b.times()[k]);
                vb.push_back(b.value(k)[0]);
                vw.push_back(w.value(k)[0]);
            }
            const PiecewiseLinearPath pb(t, vb, 1), pw(t, vw, 1);
            const std::size_t n = t.size() - 1;
            const auto g = lift_mixed(pb, pw, HolderExponents()).rough.between(0, n);
            const auto it = lift_mixed(pb, pw, HolderExponents(), CrossMode::ItoCross).rough.between(0, n);
            diff.push_back(g.at(0, 1) - it.at(0, 1));
        }
        const auto m = moments(diff);
        CHECK(std::abs(m.mean) <= 3.0 * m.stderr_mean);
        vars.push_back(m.var);
    }
    CHECK(vars[1] < vars[0]);
    CHECK(vars[2] < vars[1]);
}

TEST_CASE("Volterra kernel reproduces the fBM covariance") {
    const VolterraKernel bm(0.5);
    CHECK(bm(0.7, 0.2) == 1.0);
    CHECK(bm.cell_integral(1.0, 0.25, 0.5) == 0.25);
    CHECK_THROWS_AS(VolterraKernel(0.7), std::invalid_argument);
    boost::math::quadrature::tanh_sinh<double> q;
    for (double H : {0.26, 0.3}) {
        const VolterraKernel K(H);
        for (auto [t, s] : {std::pair{1.0, 1.0}, {1.0, 0.4}, {0.8, 0.3}, {0.5, 0.45}}) {
            const double cov = q.integrate([&](double r) { return K(t, r) * K(s, r); }, 0.0, s);
            CHECK(cov == doctest::Approx(fbm_covariance(H, t, s)).epsilon(1e-6));
        }
        double sum = 0.0;
        for (int j = 0; j < 8; ++j) sum += K.cell_integral(1.0, j / 8.0, (j + 1) / 8.0);
        const double whole = q.integrate([&](double r) { return K(1.0, r); }, 0.0, 1.0);
        CHECK(sum == doctest::Approx(whole).epsilon(1e-9));
    }
}

TEST_CASE("Cameron–Martin controls") {
    const auto grid = uniform_grid(0.0, 1.0, 64);
    const auto z = CameronMartinControl::zero(0.3, uniform_grid(0.0, 1.0, 16), 1, 1);
    CHECK(z.norm_sq() == 0.0);
    const auto zp = cm_to_path(z, grid);
    for (double v : zp.values()) CHECK(v == 0.0);
    const auto zl = cm_lift(z, grid, HolderExponents());
    CHECK(max_abs_diff(zl.between(0, 64), TruncatedTensor::identity(2)) == 0.0);

    auto c = CameronMartinControl::zero(0.3, uniform_grid(0.0, 1.0, 16), 0, 1);
    for (double& x : c.vp) x = 1.0;
    CHECK(c.norm_sq() == doctest::Approx(0.5).epsilon(1e-15));
    const auto lift = cm_lift(c, grid, HolderExponents());
    for (std::size_t k = 1; k <= 64; k += 9) {
        CHECK(cm_to_path(c, grid).value(k)[0] == doctest::Approx(grid[k]).epsilon(1e-14));
        CHECK(lift.between(0, k).at(0, 0) == doctest::Approx(0.5 * grid[k] * grid[k]).epsilon(1e-13));
    }

    std::mt19937_64 rng(16);
    const auto r = random_control(rng, 2, 1, 32);
    double l2 = 0.0;
    for (std::size_t j = 0; j < 32; ++j)
        for (std::size_t i = 0; i < 2; ++i) l2 += r.hu[j * 2 + i] * r.hu[j * 2 + i] / 32.0;
    for (std::size_t j = 0; j < 32; ++j) l2 += r.vp[j] * r.vp[j] / 32.0;
    CHECK(r.norm_sq() == doctest::Approx(0.5 * l2).epsilon(1e-14));

    // u is of finite q-variation for q > 1 / (H + 1/2): stable under refinement
    std::vector<double> qv;
    for (std::size_t n : {64u, 128u, 256u}) {
        const auto p = cm_to_path(r, uniform_grid(0.0, 1.0, n));
        std::vector<double> u;
        for (std::size_t k = 0; k <= n; ++k) u.push_back(p.value(k)[0]);
        // exact vertex-partition variation with q = 1.5
        std::vector<double> best(n + 1, 0.0);
        for (std::size_t j = 1; j <= n; ++j)
            for (std::size_t i = 0; i < j; ++i) best[j] = std::max(best[j], best[i] + std::pow(std::abs(u[j] - u[i]), 1.5));
        qv.push_back(std::pow(best[n], 1.0 / 1.5));
    }
    CHECK(std::isfinite(qv[2]));
    CHECK(qv[2] <= 1.02 * qv[1]);
    CHECK(qv[1] <= 1.05 * qv[0]);
    CHECK(std::abs(qv[2] - qv[1]) < std::abs(qv[1] - qv[0]) + 1e-12);

    auto bad = r;
    bad.hu.pop_back();
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("translation matches the signature of the shifted path") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t d = 1 + trial % 3, n = 4 + trial % 29;
        const auto x = random_pl(rng, d, n), h = random_pl(rng, d, n), h2 = random_pl(rng, d, n);
        std::vector<double> sum(x.values()), neg(h.values()), both(h.values());
        for (std::size_t i = 0; i < sum.size(); ++i) {
            sum[i] += h.values()[i];
            neg[i] = -neg[i];
            both[i] += h2.values()[i];
        }
        const auto lx = from_signature_path(x, HolderExponents());
        const auto tr = translate(lx, h);
        const auto direct = from_signature_path(PiecewiseLinearPath(x.times(), sum, d), HolderExponents());
        for (std::size_t i = 0; i < n; i += 3)
            for (std::size_t j = i + 1; j <= n; j += 2) {
                const auto a = tr.between(i, j), b = direct.between(i, j);
                CHECK(max_abs_diff(a, b) <= 1e-9 * std::max(1.0, max_abs(b)));
                CHECK(shuffle_defect(a) <= 1e-8 * std::max(1.0, max_abs(a)));
            }
        const auto back = translate(tr, PiecewiseLinearPath(x.times(), neg, d));
        const auto two = translate(translate(lx, h), h2);
        const auto once = translate(lx, PiecewiseLinearPath(x.times(), both, d));
        for (std::size_t k = 0; k < n; ++k) {
            CHECK(max_abs_diff(back.block(k), lx.block(k)) <= 1e-8);
            CHECK(max_abs_diff(two.block(k), once.block(k)) <= 1e-8 * std::max(1.0, max_abs(once.block(k))));
        }
    }
}

TEST_CASE("translation by a control") {
    std::mt19937_64 rng(18);
    FbmSpec s;
    s.dim = 2;
    s.steps = 64;
    const auto b = FbmSampler(s).sample(rng);
    const auto w = sample_bm(1, 64, 1.0, rng);
    const auto lift = lift_mixed(b, w, HolderExponents()).rough;
    const auto zero = CameronMartinControl::zero(0.3, uniform_grid(0.0, 1.0, 8), 2, 1);
    const auto same = translate(lift, zero);
    for (std::size_t k = 0; k < 64; ++k) CHECK(max_abs_diff(same.block(k), lift.block(k)) < 1e-14);
    const auto ctrl = random_control(rng, 2, 1, 8);
    const auto moved = translate(lift, ctrl);
    const auto path = cm_to_path(ctrl, lift.grid());
    const auto shifted = roughdev::algebra::add_paths(roughdev::algebra::stack_paths(b, w), path);
    const auto direct = lift_fbm(shifted, HolderExponents());
    CHECK(max_abs_diff(moved.between(0, 64), direct.between(0, 64)) < 1e-9);
}

TEST_CASE("dyadic control approximations converge monotonically") {
    std::mt19937_64 rng(19);
    const auto ctrl = random_control(rng, 1, 1, 32);
    const auto grid = uniform_grid(0.0, 1.0, 512);
    const auto target = cm_lift(ctrl, grid, HolderExponents());
    const double rho = 0.3 + 0.49 - 2.0 * 0.01;
    std::vector<double> dist;
    for (int m = 4; m <= 8; ++m) {
        const auto approx = lift_fbm(dyadic_approximation(ctrl, m, grid), HolderExponents());
        double out = 0.0;
        for (std::size_t i = 0; i < 512; i += 2)
            for (std::size_t j = i + 1; j <= 512; j += 3) {
                const auto a = approx.between(i, j), t = target.between(i, j);
                const double span = grid[j] - grid[i];
                for (int lev = 1; lev <= 2; ++lev) {
                    double s = 0.0;
                    auto la = a.level(lev);
                    auto lt = t.level(lev);
                    for (std::size_t q = 0; q < la.size(); ++q) s += (la[q] - lt[q]) * (la[q] - lt[q]);
                    out = std::max(out, std::sqrt(s) / std::pow(span, lev == 1 ? rho : 2.0 * rho));
                }
            }
        dist.push_back(out);
    }
    for (std::size_t k = 1; k < dist.size(); ++k) CHECK(dist[k] < dist[k - 1]);
}
