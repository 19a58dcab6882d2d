#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace roughdev::algebra {

/// Element of the truncated tensor algebra T^3(V) with dense storage.
/// Layout: [level0 | level1 (d) | level2 (d*d, row-major) | level3 (d*d*d, row-major)].
class TruncatedTensor {
public:
    TruncatedTensor() = default;
    /// Zero element (all levels 0, including level0).
    explicit TruncatedTensor(std::size_t dim);

    static TruncatedTensor identity(std::size_t dim);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return data_.size(); }

    double& level0() { return data_[0]; }
    double level0() const { return data_[0]; }

    std::span<double> level(int k);
    std::span<const double> level(int k) const;
    std::span<double> level1() { return level(1); }
    std::span<const double> level1() const { return level(1); }
    std::span<double> level2() { return level(2); }
    std::span<const double> level2() const { return level(2); }
    std::span<double> level3() { return level(3); }
    std::span<const double> level3() const { return level(3); }

    double& at(std::size_t i) { return data_[1 + i]; }
    double at(std::size_t i) const { return data_[1 + i]; }
    double& at(std::size_t i, std::size_t j) { return data_[1 + dim_ + i * dim_ + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[1 + dim_ + i * dim_ + j]; }
    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[1 + dim_ + dim_ * dim_ + (i * dim_ + j) * dim_ + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[1 + dim_ + dim_ * dim_ + (i * dim_ + j) * dim_ + k];
    }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    TruncatedTensor& operator+=(const TruncatedTensor& o);
    TruncatedTensor& operator-=(const TruncatedTensor& o);
    TruncatedTensor& operator*=(double c);

private:
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

TruncatedTensor operator+(TruncatedTensor a, const TruncatedTensor& b);
TruncatedTensor operator-(TruncatedTensor a, const TruncatedTensor& b);
TruncatedTensor operator*(double c, TruncatedTensor a);

/// Graded truncated product (ab)^k = sum_{i+j=k} a^i (x) b^j, k <= 3.
TruncatedTensor tensor_mul(const TruncatedTensor& a, const TruncatedTensor& b);

/// out = a (x) b; out must not alias a or b.
void tensor_mul_into(const TruncatedTensor& a, const TruncatedTensor& b, TruncatedTensor& out);

TruncatedTensor operator*(const TruncatedTensor& a, const TruncatedTensor& b);

/// Signature of the straight segment with increment v: (1, v, v(x)v/2, v(x)v(x)v/6).
TruncatedTensor segment_signature(std::span<const double> increment);

/// Truncated exponential; requires level0 == 0.
TruncatedTensor tensor_exp(const TruncatedTensor& x);

/// Truncated logarithm; requires level0 == 1.
TruncatedTensor tensor_log(const TruncatedTensor& g);

/// Inverse of an element with level0 == 1.
TruncatedTensor tensor_inverse(const TruncatedTensor& g);

/// Block of the path x + h over one step where h is linear with increment b: exp(log a + b).
/// Exact when the block is a straight segment; always group-like.
TruncatedTensor translate_block(const TruncatedTensor& a, std::span<const double> b);

/// Places the coordinates of a at offset, offset+1, ... inside a dim-dimensional tensor.
TruncatedTensor embed_block(const TruncatedTensor& a, std::size_t dim, std::size_t offset);

/// Scales level k by lambda^k.
TruncatedTensor dilate(const TruncatedTensor& x, double lambda);

/// Max deviation from the level-2 and level-3 shuffle relations.
double shuffle_defect(const TruncatedTensor& x);

/// Euclidean norm of level k.
double level_norm(const TruncatedTensor& x, int k);

/// Max absolute entrywise difference.
double max_abs_diff(const TruncatedTensor& a, const TruncatedTensor& b);

/// Max absolute entry.
double max_abs(const TruncatedTensor& a);

}  // namespace roughdev::algebra
