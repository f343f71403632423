#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sthawkes/errors.hpp"

namespace sthawkes {

using Index = Eigen::Index;
using Dims3 = std::array<Index, 3>;

/// Dense 3-way array with column-major storage: the first index runs fastest,
/// then the second, then the frontal-slice index. Entry (i, j, k) lives at
/// i + N1 * (j + N2 * k), so frontal slice k is a contiguous N1 x N2
/// column-major matrix.
template <typename Scalar>
class BasicTensor3 {
 public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using SliceMap = Eigen::Map<Matrix>;
    using ConstSliceMap = Eigen::Map<const Matrix>;

    BasicTensor3() = default;

    BasicTensor3(Index n1, Index n2, Index n3, Scalar fill = Scalar(0)) : dims_{n1, n2, n3} {
        if (n1 < 0 || n2 < 0 || n3 < 0) throw DimensionError("tensor dimensions must be nonnegative");
        data_.assign(static_cast<std::size_t>(n1 * n2 * n3), fill);
    }

    explicit BasicTensor3(const Dims3& d, Scalar fill = Scalar(0)) : BasicTensor3(d[0], d[1], d[2], fill) {}

    BasicTensor3(const Dims3& d, std::vector<Scalar> values) : dims_(d), data_(std::move(values)) {
        if (d[0] < 0 || d[1] < 0 || d[2] < 0) throw DimensionError("tensor dimensions must be nonnegative");
        if (static_cast<Index>(data_.size()) != d[0] * d[1] * d[2]) {
            throw DimensionError("value count does not match tensor dimensions");
        }
    }

    Index dim(int axis) const { return dims_[static_cast<std::size_t>(axis)]; }
    const Dims3& dims() const { return dims_; }
    Index size() const { return static_cast<Index>(data_.size()); }
    bool empty() const { return data_.empty(); }

    Index offset(Index i, Index j, Index k) const { return i + dims_[0] * (j + dims_[1] * k); }

    Scalar& operator()(Index i, Index j, Index k) { return data_[static_cast<std::size_t>(offset(i, j, k))]; }
    const Scalar& operator()(Index i, Index j, Index k) const {
        return data_[static_cast<std::size_t>(offset(i, j, k))];
    }

    Scalar& at(Index i, Index j, Index k) {
        check_index(i, j, k);
        return (*this)(i, j, k);
    }
    const Scalar& at(Index i, Index j, Index k) const {
        check_index(i, j, k);
        return (*this)(i, j, k);
    }

    std::span<Scalar> values() { return data_; }
    std::span<const Scalar> values() const { return data_; }
    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }

    /// Frontal slice k (0-based) as an N1 x N2 matrix view.
    SliceMap slice(Index k) { return SliceMap(data_.data() + k * dims_[0] * dims_[1], dims_[0], dims_[1]); }
    ConstSliceMap slice(Index k) const {
        return ConstSliceMap(data_.data() + k * dims_[0] * dims_[1], dims_[0], dims_[1]);
    }

    /// All values as a flat column vector view, in storage order.
    Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> flat() {
        return Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(data_.data(), size());
    }
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> flat() const {
        return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(data_.data(), size());
    }

    void set_zero() { std::fill(data_.begin(), data_.end(), Scalar(0)); }

    BasicTensor3& operator+=(const BasicTensor3& o) {
        require_same_dims(o);
        for (std::size_t n = 0; n < data_.size(); ++n) data_[n] += o.data_[n];
        return *this;
    }
    BasicTensor3& operator-=(const BasicTensor3& o) {
        require_same_dims(o);
        for (std::size_t n = 0; n < data_.size(); ++n) data_[n] -= o.data_[n];
        return *this;
    }
    BasicTensor3& operator*=(Scalar s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

    friend BasicTensor3 operator+(BasicTensor3 a, const BasicTensor3& b) { return a += b; }
    friend BasicTensor3 operator-(BasicTensor3 a, const BasicTensor3& b) { return a -= b; }
    friend BasicTensor3 operator*(BasicTensor3 a, Scalar s) { return a *= s; }
    friend BasicTensor3 operator*(Scalar s, BasicTensor3 a) { return a *= s; }
    friend BasicTensor3 operator-(BasicTensor3 a) { return a *= Scalar(-1); }

    bool operator==(const BasicTensor3& o) const { return dims_ == o.dims_ && data_ == o.data_; }

    double frobenius_norm() const {
        double s = 0.0;
        for (const auto& v : data_) s += std::norm(v);
        return std::sqrt(s);
    }

    void require_same_dims(const BasicTensor3& o) const {
        if (dims_ != o.dims_) throw DimensionError("tensor dimensions disagree: " + dims_string() + " vs " + o.dims_string());
    }

    std::string dims_string() const {
        std::ostringstream os;
        os << dims_[0] << "x" << dims_[1] << "x" << dims_[2];
        return os.str();
    }

 private:
    void check_index(Index i, Index j, Index k) const {
        if (i < 0 || j < 0 || k < 0 || i >= dims_[0] || j >= dims_[1] || k >= dims_[2]) {
            throw DimensionError("tensor index out of range");
        }
    }

    Dims3 dims_{0, 0, 0};
    std::vector<Scalar> data_;
};

using Tensor3 = BasicTensor3<double>;
using ComplexTensor3 = BasicTensor3<std::complex<double>>;

inline double inner(const Tensor3& a, const Tensor3& b) {
    a.require_same_dims(b);
    return a.flat().dot(b.flat());
}

inline double frobenius_distance(const Tensor3& a, const Tensor3& b) {
    a.require_same_dims(b);
    return (a.flat() - b.flat()).norm();
}

/// Writes the text form: a `tensor3 N1 N2 N3` line, then the values in storage
/// order, one frontal-slice column per line.
inline void write_tensor_text(std::ostream& os, const Tensor3& t) {
    os << "tensor3 " << t.dim(0) << ' ' << t.dim(1) << ' ' << t.dim(2) << '\n';
    os.precision(17);
    const Index n1 = t.dim(0);
    for (Index n = 0; n < t.size(); ++n) {
        os << t.values()[static_cast<std::size_t>(n)];
        os << ((n1 > 0 && (n + 1) % n1 == 0) ? '\n' : ' ');
    }
}

inline Tensor3 read_tensor_text(std::istream& is) {
    std::string tag;
    Index n1 = 0, n2 = 0, n3 = 0;
    if (!(is >> tag) || tag != "tensor3") throw InputError("expected 'tensor3' header");
    if (!(is >> n1 >> n2 >> n3) || n1 < 0 || n2 < 0 || n3 < 0) throw InputError("bad tensor3 dimensions");
    std::vector<double> vals(static_cast<std::size_t>(n1 * n2 * n3));
    for (auto& v : vals) {
        if (!(is >> v)) throw InputError("tensor3 body ended early");
    }
    return Tensor3({n1, n2, n3}, std::move(vals));
}

}  // namespace sthawkes
