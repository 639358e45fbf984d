#pragma once

// Dense N-way tensors and the multilinear algebra used by the samplers.
//
// Storage follows the first-index-fastest vectorization map: entry
// [i_1, ..., i_N] (0-based here) lives at flat offset
//     i_1 + I_1 * (i_2 + I_2 * (i_3 + ...)).
// A matrix stored column-major is the N = 2 case of the same map, so an
// Eigen::MatrixXd and a 2-way Tensor share one layout and every Kronecker
// identity below holds on raw buffers.

#include "baytensor/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace baytensor {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Dims = std::vector<std::size_t>;

inline std::size_t product(std::span<const std::size_t> dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string dims_to_string(std::span<const std::size_t> dims) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
    os << ')';
    return os.str();
}

class Tensor {
public:
    Tensor() = default;

    /// Zero-filled tensor.
    explicit Tensor(Dims dims) : dims_(std::move(dims)) {
        check_extents();
        data_.assign(product(dims_), 0.0);
    }

    Tensor(Dims dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data)) {
        check_extents();
        if (data_.size() != product(dims_))
            throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match dims " +
                             dims_to_string(dims_));
    }

    /// 2-way tensor sharing the matrix's column-major layout.
    static Tensor from_matrix(const Matrix& m) {
        return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                      std::vector<double>(m.data(), m.data() + m.size()));
    }

    const Dims& dims() const noexcept { return dims_; }
    std::size_t dim(std::size_t mode) const { return dims_.at(mode); }
    std::size_t order() const noexcept { return dims_.size(); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    double* raw() noexcept { return data_.data(); }
    const double* raw() const noexcept { return data_.data(); }

    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    /// Flat offset of a 0-based multi-index.
    std::size_t offset(std::span<const std::size_t> idx) const {
        if (idx.size() != dims_.size()) throw ShapeError("index arity does not match tensor order");
        std::size_t off = 0;
        std::size_t stride = 1;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            if (idx[k] >= dims_[k]) throw ShapeError("tensor index out of range");
            off += idx[k] * stride;
            stride *= dims_[k];
        }
        return off;
    }

    double& at(std::initializer_list<std::size_t> idx) { return data_[offset({idx.begin(), idx.size()})]; }
    double at(std::initializer_list<std::size_t> idx) const { return data_[offset({idx.begin(), idx.size()})]; }
    double& at(std::span<const std::size_t> idx) { return data_[offset(idx)]; }
    double at(std::span<const std::size_t> idx) const { return data_[offset(idx)]; }

    Eigen::Map<Vector> vec() { return {data_.data(), static_cast<Eigen::Index>(data_.size())}; }
    Eigen::Map<const Vector> vec() const { return {data_.data(), static_cast<Eigen::Index>(data_.size())}; }

    /// View of the buffer as a rows x cols column-major matrix; rows * cols must equal size().
    Eigen::Map<const Matrix> as_matrix(std::size_t rows, std::size_t cols) const {
        if (rows * cols != data_.size()) throw ShapeError("matrix view does not cover tensor buffer");
        return {data_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
    }
    Eigen::Map<Matrix> as_matrix(std::size_t rows, std::size_t cols) {
        if (rows * cols != data_.size()) throw ShapeError("matrix view does not cover tensor buffer");
        return {data_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
    }

    /// Same buffer, new extents of equal total size.
    Tensor reshaped(Dims dims) const& { return Tensor(std::move(dims), data_); }
    Tensor reshaped(Dims dims) && { return Tensor(std::move(dims), std::move(data_)); }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    void check_extents() const {
        for (std::size_t d : dims_)
            if (d == 0) throw ShapeError("tensor extents must be positive, got " + dims_to_string(dims_));
    }

    Dims dims_;
    std::vector<double> data_{0.0};
};

/// Row/column mode split for a general matricization. Mode order inside each
/// list is significant: the first listed mode varies fastest.
struct IndexPartition {
    std::vector<std::size_t> row_modes;
    std::vector<std::size_t> col_modes;

    void validate(std::size_t order) const {
        std::vector<int> seen(order, 0);
        for (const auto* list : {&row_modes, &col_modes})
            for (std::size_t m : *list) {
                if (m >= order) throw ShapeError("partition names mode " + std::to_string(m) + " of an order-" +
                                                 std::to_string(order) + " tensor");
                if (seen[m]++) throw ShapeError("partition repeats mode " + std::to_string(m));
            }
        if (row_modes.size() + col_modes.size() != order) throw ShapeError("partition does not cover every mode");
    }

    /// Mode-n unfolding: rows = {n}, cols = remaining modes ascending.
    static IndexPartition mode_n(std::size_t n, std::size_t order) {
        IndexPartition p{{n}, {}};
        for (std::size_t k = 0; k < order; ++k)
            if (k != n) p.col_modes.push_back(k);
        return p;
    }
};

inline Vector vectorize(const Tensor& t) { return t.vec(); }

/// Entry-preserving reindexing: result mode i is input mode perm[i].
inline Tensor permute_modes(const Tensor& t, std::span<const std::size_t> perm) {
    const std::size_t n = t.order();
    if (perm.size() != n) throw ShapeError("permutation length does not match tensor order");
    std::vector<int> seen(n, 0);
    for (std::size_t p : perm)
        if (p >= n || seen[p]++) throw ShapeError("invalid mode permutation");

    Dims in_strides(n);
    for (std::size_t k = 0, s = 1; k < n; ++k) {
        in_strides[k] = s;
        s *= t.dim(k);
    }
    Dims out_dims(n);
    Dims step(n);  // input stride of each output mode
    for (std::size_t i = 0; i < n; ++i) {
        out_dims[i] = t.dim(perm[i]);
        step[i] = in_strides[perm[i]];
    }
    Tensor out(out_dims);
    if (n == 0) {
        out[0] = t[0];
        return out;
    }

    // Odometer over output indices, innermost mode unrolled.
    Dims idx(n, 0);
    const std::size_t inner = out_dims[0];
    const std::size_t inner_step = step[0];
    const double* src = t.raw();
    double* dst = out.raw();
    std::size_t in_off = 0;
    for (std::size_t o = 0; o < out.size(); o += inner) {
        for (std::size_t i = 0; i < inner; ++i) dst[o + i] = src[in_off + i * inner_step];
        for (std::size_t k = 1; k < n; ++k) {
            in_off += step[k];
            if (++idx[k] < out_dims[k]) break;
            in_off -= step[k] * out_dims[k];
            idx[k] = 0;
        }
    }
    return out;
}

inline Tensor permute_modes(const Tensor& t, std::initializer_list<std::size_t> perm) {
    return permute_modes(t, std::span<const std::size_t>(perm.begin(), perm.size()));
}

inline std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm) {
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv.at(perm[i]) = i;
    return inv;
}

inline Matrix matricize(const Tensor& t, const IndexPartition& p) {
    p.validate(t.order());
    std::vector<std::size_t> perm(p.row_modes);
    perm.insert(perm.end(), p.col_modes.begin(), p.col_modes.end());
    std::size_t rows = 1;
    for (std::size_t m : p.row_modes) rows *= t.dim(m);
    const std::size_t cols = t.size() / rows;
    return permute_modes(t, perm).as_matrix(rows, cols);
}

inline Matrix matricize_mode(const Tensor& t, std::size_t n) {
    return matricize(t, IndexPartition::mode_n(n, t.order()));
}

inline Tensor unmatricize(const Matrix& m, const Dims& dims, const IndexPartition& p) {
    p.validate(dims.size());
    Dims permuted_dims;
    std::size_t rows = 1;
    std::size_t cols = 1;
    for (std::size_t r : p.row_modes) {
        permuted_dims.push_back(dims[r]);
        rows *= dims[r];
    }
    for (std::size_t c : p.col_modes) {
        permuted_dims.push_back(dims[c]);
        cols *= dims[c];
    }
    if (static_cast<std::size_t>(m.rows()) != rows || static_cast<std::size_t>(m.cols()) != cols)
        throw ShapeError("matrix " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         " is inconsistent with dims " + dims_to_string(dims) + " under the partition");
    Tensor staged(permuted_dims, std::vector<double>(m.data(), m.data() + m.size()));
    std::vector<std::size_t> perm(p.row_modes);
    perm.insert(perm.end(), p.col_modes.begin(), p.col_modes.end());
    return permute_modes(staged, inverse_permutation(perm));
}

/// A (x) B with block (i, j) equal to a_ij * B.
inline Matrix kronecker(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// Kronecker product of a list taken in reverse: mats[K-1] (x) ... (x) mats[0].
/// This is the ordering that matches first-index-fastest unfoldings.
inline Matrix kronecker_reversed(std::span<const Matrix> mats) {
    Matrix out = Matrix::Ones(1, 1);
    for (const Matrix& m : mats) out = kronecker(m, out);
    return out;
}

/// t x_n u: replaces extent I_n by u.rows().
inline Tensor mode_n_product(const Tensor& t, const Matrix& u, std::size_t n) {
    if (n >= t.order()) throw ShapeError("mode index out of range in mode_n_product");
    if (static_cast<std::size_t>(u.cols()) != t.dim(n))
        throw ShapeError("mode-" + std::to_string(n) + " product: matrix has " + std::to_string(u.cols()) +
                         " columns but tensor extent is " + std::to_string(t.dim(n)));
    std::size_t left = 1;
    for (std::size_t k = 0; k < n; ++k) left *= t.dim(k);
    std::size_t right = 1;
    for (std::size_t k = n + 1; k < t.order(); ++k) right *= t.dim(k);
    const auto in_n = static_cast<Eigen::Index>(t.dim(n));
    const auto out_n = u.rows();
    const auto l = static_cast<Eigen::Index>(left);

    Dims out_dims = t.dims();
    out_dims[n] = static_cast<std::size_t>(out_n);
    Tensor out(out_dims);
    for (std::size_t k = 0; k < right; ++k) {
        Eigen::Map<const Matrix> slab(t.raw() + k * left * in_n, l, in_n);
        Eigen::Map<Matrix> dst(out.raw() + k * left * out_n, l, out_n);
        dst.noalias() = slab * u.transpose();
    }
    return out;
}

/// <x, y>_l: contracts the last l modes of x with the first l modes of y.
inline Tensor contracted_product(const Tensor& x, const Tensor& y, std::size_t l) {
    if (l > x.order() || l > y.order()) throw ShapeError("contraction order exceeds tensor order");
    for (std::size_t k = 0; k < l; ++k)
        if (x.dim(x.order() - l + k) != y.dim(k))
            throw ShapeError("contraction mismatch: x dims " + dims_to_string(x.dims()) + ", y dims " +
                             dims_to_string(y.dims()));
    Dims out_dims(x.dims().begin(), x.dims().end() - static_cast<std::ptrdiff_t>(l));
    out_dims.insert(out_dims.end(), y.dims().begin() + static_cast<std::ptrdiff_t>(l), y.dims().end());
    std::size_t inner = 1;
    for (std::size_t k = 0; k < l; ++k) inner *= y.dim(k);
    const std::size_t lead = x.size() / inner;
    const std::size_t trail = y.size() / inner;
    Tensor out(out_dims);
    out.as_matrix(lead, trail).noalias() = x.as_matrix(lead, inner) * y.as_matrix(inner, trail);
    return out;
}

/// [[g; A_1, ..., A_N]] = g x_1 A_1 x_2 ... x_N A_N.
inline Tensor tucker_assemble(const Tensor& g, std::span<const Matrix> factors) {
    if (factors.size() != g.order())
        throw ShapeError("tucker_assemble needs one factor per core mode (" + std::to_string(g.order()) + "), got " +
                         std::to_string(factors.size()));
    Tensor out = g;
    for (std::size_t n = 0; n < factors.size(); ++n) out = mode_n_product(out, factors[n], n);
    return out;
}

inline double frobenius_norm_sq(const Tensor& t) { return t.vec().squaredNorm(); }

inline Tensor operator-(const Tensor& a, const Tensor& b) {
    if (a.dims() != b.dims()) throw ShapeError("tensor difference of mismatched dims");
    Tensor out(a.dims());
    out.vec() = a.vec() - b.vec();
    return out;
}

}  // namespace baytensor
