#include "roughdev/algebra/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace roughdev::algebra {

namespace {

std::size_t storage_size(std::size_t d) { return 1 + d + d * d + d * d * d; }

void require_same_dim(const TruncatedTensor& a, const TruncatedTensor& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("tensor dimension mismatch");
}

}  // namespace

TruncatedTensor::TruncatedTensor(std::size_t dim) : dim_(dim), data_(storage_size(dim), 0.0) {
    if (dim == 0) throw std::invalid_argument("tensor dimension must be positive");
}

TruncatedTensor TruncatedTensor::identity(std::size_t dim) {
    TruncatedTensor t(dim);
    t.data_[0] = 1.0;
    return t;
}

std::span<double> TruncatedTensor::level(int k) {
    const std::size_t d = dim_;
    switch (k) {
        case 0: return {data_.data(), 1};
        case 1: return {data_.data() + 1, d};
        case 2: return {data_.data() + 1 + d, d * d};
        case 3: return {data_.data() + 1 + d + d * d, d * d * d};
        default: throw std::invalid_argument("tensor level must be in 0..3");
    }
}

std::span<const double> TruncatedTensor::level(int k) const {
    return const_cast<TruncatedTensor*>(this)->level(k);
}

TruncatedTensor& TruncatedTensor::operator+=(const TruncatedTensor& o) {
    require_same_dim(*this, o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

TruncatedTensor& TruncatedTensor::operator-=(const TruncatedTensor& o) {
    require_same_dim(*this, o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

TruncatedTensor& TruncatedTensor::operator*=(double c) {
    for (double& v : data_) v *= c;
    return *this;
}

TruncatedTensor operator+(TruncatedTensor a, const TruncatedTensor& b) { return a += b; }
TruncatedTensor operator-(TruncatedTensor a, const TruncatedTensor& b) { return a -= b; }
TruncatedTensor operator*(double c, TruncatedTensor a) { return a *= c; }

void tensor_mul_into(const TruncatedTensor& a, const TruncatedTensor& b, TruncatedTensor& out) {
    require_same_dim(a, b);
    const std::size_t d = a.dim();
    if (out.dim() != d) out = TruncatedTensor(d);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* pc = out.data().data();
    const double a0 = pa[0], b0 = pb[0];
    const double* a1 = pa + 1;
    const double* b1 = pb + 1;
    const double* a2 = a1 + d;
    const double* b2 = b1 + d;
    const double* a3 = a2 + d * d;
    const double* b3 = b2 + d * d;
    double* c1 = pc + 1;
    double* c2 = c1 + d;
    double* c3 = c2 + d * d;

    pc[0] = a0 * b0;
    for (std::size_t i = 0; i < d; ++i) c1[i] = a0 * b1[i] + a1[i] * b0;
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t ij = i * d + j;
            c2[ij] = a0 * b2[ij] + a1[i] * b1[j] + a2[ij] * b0;
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t ij = i * d + j;
            for (std::size_t k = 0; k < d; ++k) {
                const std::size_t ijk = ij * d + k;
                c3[ijk] = a0 * b3[ijk] + a1[i] * b2[j * d + k] + a2[ij] * b1[k] + a3[ijk] * b0;
            }
        }
    }
}

TruncatedTensor tensor_mul(const TruncatedTensor& a, const TruncatedTensor& b) {
    TruncatedTensor out(a.dim());
    tensor_mul_into(a, b, out);
    return out;
}

TruncatedTensor operator*(const TruncatedTensor& a, const TruncatedTensor& b) { return tensor_mul(a, b); }

TruncatedTensor segment_signature(std::span<const double> v) {
    const std::size_t d = v.size();
    TruncatedTensor s(d);
    s.level0() = 1.0;
    for (std::size_t i = 0; i < d; ++i) {
        if (!std::isfinite(v[i])) throw std::invalid_argument("segment increment must be finite");
        s.at(i) = v[i];
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double vij = v[i] * v[j];
            s.at(i, j) = 0.5 * vij;
            for (std::size_t k = 0; k < d; ++k) s.at(i, j, k) = vij * v[k] / 6.0;
        }
    }
    return s;
}

TruncatedTensor tensor_exp(const TruncatedTensor& x) {
    if (x.level0() != 0.0) throw std::invalid_argument("tensor_exp needs level0 == 0");
    const TruncatedTensor x2 = x * x;
    const TruncatedTensor x3 = x2 * x;
    TruncatedTensor out = TruncatedTensor::identity(x.dim());
    out += x;
    out += 0.5 * x2;
    out += (1.0 / 6.0) * x3;
    return out;
}

TruncatedTensor tensor_log(const TruncatedTensor& g) {
    if (g.level0() != 1.0) throw std::invalid_argument("tensor_log needs level0 == 1");
    TruncatedTensor y = g;
    y.level0() = 0.0;
    const TruncatedTensor y2 = y * y;
    const TruncatedTensor y3 = y2 * y;
    TruncatedTensor out = y;
    out -= 0.5 * y2;
    out += (1.0 / 3.0) * y3;
    return out;
}

TruncatedTensor tensor_inverse(const TruncatedTensor& g) {
    if (g.level0() != 1.0) throw std::invalid_argument("tensor_inverse needs level0 == 1");
    TruncatedTensor y = g;
    y.level0() = 0.0;
    const TruncatedTensor y2 = y * y;
    const TruncatedTensor y3 = y2 * y;
    TruncatedTensor out = TruncatedTensor::identity(g.dim());
    out -= y;
    out += y2;
    out -= y3;
    return out;
}

TruncatedTensor dilate(const TruncatedTensor& x, double lambda) {
    TruncatedTensor out = x;
    double f = 1.0;
    for (int k = 1; k <= 3; ++k) {
        f *= lambda;
        for (double& v : out.level(k)) v *= f;
    }
    return out;
}

double shuffle_defect(const TruncatedTensor& x) {
    if (x.level0() != 1.0) throw std::invalid_argument("shuffle_defect needs level0 == 1");
    const std::size_t d = x.dim();
    double defect = 0.0;
    for (std::size_t p = 0; p < d; ++p) {
        for (std::size_t q = 0; q < d; ++q) {
            defect = std::max(defect, std::abs(x.at(p) * x.at(q) - x.at(p, q) - x.at(q, p)));
            for (std::size_t r = 0; r < d; ++r) {
                const double lhs = x.at(p) * x.at(q, r);
                const double rhs = x.at(p, q, r) + x.at(q, p, r) + x.at(q, r, p);
                defect = std::max(defect, std::abs(lhs - rhs));
            }
        }
    }
    return defect;
}

double level_norm(const TruncatedTensor& x, int k) {
    double s = 0.0;
    for (double v : x.level(k)) s += v * v;
    return std::sqrt(s);
}

double max_abs_diff(const TruncatedTensor& a, const TruncatedTensor& b) {
    require_same_dim(a, b);
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

double max_abs(const TruncatedTensor& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

TruncatedTensor translate_block(const TruncatedTensor& a, std::span<const double> b) {
    if (b.size() != a.dim()) throw std::invalid_argument("translation increment dimension mismatch");
    TruncatedTensor l = tensor_log(a);
    auto l1 = l.level(1);
    for (std::size_t i = 0; i < b.size(); ++i) l1[i] += b[i];
    return tensor_exp(l);
}

TruncatedTensor embed_block(const TruncatedTensor& a, std::size_t dim, std::size_t offset) {
    const std::size_t d = a.dim();
    if (offset + d > dim) throw std::invalid_argument("embedding does not fit the target dimension");
    TruncatedTensor out(dim);
    out.level0() = a.level0();
    for (std::size_t i = 0; i < d; ++i) {
        out.at(offset + i) = a.at(i);
        for (std::size_t j = 0; j < d; ++j) {
            out.at(offset + i, offset + j) = a.at(i, j);
            for (std::size_t k = 0; k < d; ++k) out.at(offset + i, offset + j, offset + k) = a.at(i, j, k);
        }
    }
    return out;
}

}  // namespace roughdev::algebra
