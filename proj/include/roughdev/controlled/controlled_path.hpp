#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "roughdev/controlled/smooth_function.hpp"
#include "roughdev/roughpath/rough_path.hpp"

namespace roughdev::controlled {

using roughpath::RoughPath;

/// Which endpoint evaluates Y'' in the Y# remainder.
enum class SharpConvention { LeftEndpoint, RightEndpoint };

/// (Y, Y', Y'') controlled by a reference rough path over V, values in W.
/// Per grid point: Y has W entries, Y' is W x V, Y'' is W x V x V (row-major).
/// Y_{s,t} ~ Y'_s X^1_{s,t} + Y''_s X^2_{s,t}, with Y''[w][i][j] paired with X^2[i][j].
class ControlledPath {
public:
    ControlledPath() = default;
    ControlledPath(std::shared_ptr<const RoughPath> reference, std::size_t value_dim, std::vector<double> y,
                   std::vector<double> ydag, std::vector<double> ydagdag);

    const RoughPath& reference() const { return *ref_; }
    const std::shared_ptr<const RoughPath>& reference_ptr() const { return ref_; }
    std::size_t value_dim() const { return w_; }
    std::size_t driver_dim() const { return v_; }
    std::size_t points() const { return ref_->points(); }

    std::span<const double> y(std::size_t k) const { return {y_.data() + k * w_, w_}; }
    std::span<const double> ydag(std::size_t k) const { return {yd_.data() + k * w_ * v_, w_ * v_}; }
    std::span<const double> ydagdag(std::size_t k) const { return {ydd_.data() + k * w_ * v_ * v_, w_ * v_ * v_}; }
    const std::vector<double>& y_data() const { return y_; }
    const std::vector<double>& ydag_data() const { return yd_; }
    const std::vector<double>& ydagdag_data() const { return ydd_; }

private:
    std::shared_ptr<const RoughPath> ref_;
    std::size_t w_ = 0;
    std::size_t v_ = 0;
    std::vector<double> y_, yd_, ydd_;
};

/// Discrete norms of a controlled path over grid indices [i0, i1].
struct ControlledNorms {
    double sharp = 0.0;        // ||Y#||_{3 eta}
    double sharpsharp = 0.0;   // ||Y##||_{2 eta}
    double dagdag_holder = 0.0;  // ||Y''||_{eta}
    double initial = 0.0;      // |Y_a| + |Y'_a| + |Y''_a|
    double q_norm() const { return initial + dagdag_holder + sharpsharp + sharp; }
};

struct Remainders {
    std::vector<double> sharp;       // per consecutive pair, W entries
    std::vector<double> sharpsharp;  // per consecutive pair, W x V entries
    ControlledNorms norms;           // exponent alpha of the reference, all grid pairs
};

/// Remainders over consecutive pairs and weighted norms over all pairs.
Remainders remainders(const ControlledPath& cp, SharpConvention conv = SharpConvention::LeftEndpoint);

/// Norms over all pairs in [i0, i1] with exponent eta.
ControlledNorms controlled_norms(const ControlledPath& cp, double eta, std::size_t i0, std::size_t i1,
                                 SharpConvention conv = SharpConvention::LeftEndpoint);

/// Controlled-path distance of a and b (same reference) over [i0, i1] with exponent eta.
double controlled_distance(const ControlledPath& a, const ControlledPath& b, double eta, std::size_t i0,
                           std::size_t i1);

/// Y -> sum_i Y'[.][i] X^1[i] etc. with the path Y = X^1_{0,t} itself (Y' = identity).
ControlledPath driver_as_controlled(std::shared_ptr<const RoughPath> rp);

/// (Phi(Y), DPhi Y', DPhi Y'' + D^2Phi<Y', Y'>).
ControlledPath compose(const SmoothFunction4& phi, const ControlledPath& cp);

/// Compensated Riemann sums on the grid for an integrand with values in L(V, W'),
/// flattened as w = o * V + j. Result is controlled with derivatives (Y, Y').
ControlledPath rough_integral(const ControlledPath& integrand);

/// Same, after checking that the integrand is controlled by rp.
ControlledPath rough_integral(const ControlledPath& integrand, const RoughPath& rp);

/// Local germ Y_s X^1 + Y'_s X^2 + Y''_s X^3 for the integrand at grid index k over x = X_{s,t}.
std::vector<double> integral_germ(const ControlledPath& integrand, std::size_t k, const algebra::TruncatedTensor& x);

struct SewingRecord {
    std::size_t i0 = 0, i1 = 0;
    double local_error = 0.0;
    double bound = 0.0;
};

/// Compares the grid integral with the germ on coarse pairs (k*stride, (k+1)*stride) against
/// 2^{4a} zeta(4a) (t-s)^{4a} (||Y#|| ||X^1|| + ||Y##|| ||X^2|| + ||Y''|| ||X^3||), norms over [s,t].
std::vector<SewingRecord> sewing_diagnostic(const ControlledPath& integrand, std::size_t stride);

}  // namespace roughdev::controlled
