#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace roughdev::controlled {

/// Writes a derivative array at a point. Layout for an R^n -> R^m map:
/// value m, grad m*n, hess m*n*n, third m*n^3, fourth m*n^4 (output index first, row-major).
using DerivativeFn = std::function<void(std::span<const double> x, std::span<double> out)>;

/// C^4 map with explicit derivatives up to order four.
struct SmoothFunction4 {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    DerivativeFn eval;
    DerivativeFn grad;
    DerivativeFn hess;
    DerivativeFn third;
    DerivativeFn fourth;
    /// Record of ||Phi||_{C^4_b}; for maps with unbounded values the value term is taken over the unit ball.
    double bound = 0.0;
    /// True when derivatives come from the finite-difference adapter (lower accuracy).
    bool finite_difference = false;

    std::vector<double> value(std::span<const double> x) const;
    std::vector<double> gradient(std::span<const double> x) const;
    std::vector<double> hessian(std::span<const double> x) const;
    std::vector<double> third_derivative(std::span<const double> x) const;
    std::vector<double> fourth_derivative(std::span<const double> x) const;
    /// Derivative of order k in 0..4.
    std::vector<double> derivative(int k, std::span<const double> x) const;
    void check_ready() const;
};

/// Phi(x) = A x + b with A row-major out x in.
SmoothFunction4 affine(std::vector<double> a, std::vector<double> b, std::size_t in_dim);

SmoothFunction4 constant(std::size_t in_dim, std::vector<double> c);

SmoothFunction4 identity_map(std::size_t n);

/// Term c * prod_j x_j^{p_j}.
struct Monomial {
    double coef = 0.0;
    std::vector<int> powers;
};

/// Term c * sin(w . x + phase).
struct Sinusoid {
    double coef = 0.0;
    std::vector<double> freq;
    double phase = 0.0;
};

/// One output component: sum of monomial and sinusoid terms.
struct TermSum {
    std::vector<Monomial> monomials;
    std::vector<Sinusoid> sinusoids;
};

/// Each out component is a TermSum of the in coordinates. bound is the supplied C^4_b record.
SmoothFunction4 term_function(std::size_t in_dim, std::vector<TermSum> components, double bound);

/// Output concatenation: rows of a then rows of b.
SmoothFunction4 stack_outputs(const SmoothFunction4& a, const SmoothFunction4& b);

/// [f | sigma] for f: R^m -> R^m and sigma: R^m -> R^{m x d} (flattened o*d + j);
/// output flattened o*(1+d) + j with column 0 taken from f.
SmoothFunction4 hstack_columns(const SmoothFunction4& f, const SmoothFunction4& sigma, std::size_t m, std::size_t d);

/// c * Phi.
SmoothFunction4 scaled(const SmoothFunction4& phi, double c);

/// Weighted mixture x -> sum_k w_k Phi(x, y_k) of a map on R^{m+n}; returns a map on R^m.
SmoothFunction4 average_in_second(const SmoothFunction4& phi, std::size_t m, std::vector<std::vector<double>> ys,
                                  std::vector<double> weights);

/// x -> Phi(x, y) for fixed y; Phi on R^{m+n}.
SmoothFunction4 freeze_second(const SmoothFunction4& phi, std::size_t m, std::vector<double> y);

/// Derivatives by nested central differences of eval. Flagged lower accuracy.
SmoothFunction4 finite_difference_adapter(DerivativeFn eval, std::size_t in_dim, std::size_t out_dim, double bound,
                                          double step = 1e-3);

/// Largest relative mismatch between each derivative level and central differences of the level below.
double derivative_check(const SmoothFunction4& phi, std::span<const std::vector<double>> points, double step = 1e-5);

}  // namespace roughdev::controlled
