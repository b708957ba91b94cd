#pragma once

#include <string>

#include "bdce/linalg.hpp"

namespace bdce {

/// Dense third-order complex tensor, stored flat in column-major order
/// (first index fastest). The k-th frontal slice (fixed third index) is a
/// dim1 x dim2 matrix exposed as an Eigen map over contiguous storage.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(Index d1, Index d2, Index d3)
      : d1_(d1), d2_(d2), d3_(d3), data_(ComplexVector::Zero(d1 * d2 * d3)) {
    if (d1 < 1 || d2 < 1 || d3 < 1)
      throw dimension_error("Tensor3: dimensions must be positive");
  }

  Index dim1() const { return d1_; }
  Index dim2() const { return d2_; }
  Index dim3() const { return d3_; }
  Index size() const { return data_.size(); }

  Complex& operator()(Index i, Index j, Index k) {
    return data_(i + j * d1_ + k * d1_ * d2_);
  }
  Complex operator()(Index i, Index j, Index k) const {
    return data_(i + j * d1_ + k * d1_ * d2_);
  }

  Eigen::Map<ComplexMatrix> slice(Index k) {
    check_slice(k);
    return {data_.data() + k * d1_ * d2_, d1_, d2_};
  }
  Eigen::Map<const ComplexMatrix> slice(Index k) const {
    check_slice(k);
    return {data_.data() + k * d1_ * d2_, d1_, d2_};
  }

  void set_slice(Index k, const ComplexMatrix& m) {
    check_slice(k);
    if (m.rows() != d1_ || m.cols() != d2_)
      throw dimension_error("Tensor3::set_slice: shape mismatch");
    slice(k) = m;
  }

  double squared_norm() const { return data_.squaredNorm(); }
  double norm() const { return data_.norm(); }

 private:
  void check_slice(Index k) const {
    if (k < 0 || k >= d3_)
      throw dimension_error("Tensor3: slice index " + std::to_string(k) +
                            " out of range");
  }

  Index d1_ = 0, d2_ = 0, d3_ = 0;
  ComplexVector data_;
};

/// n-mode unfolding, n in {1, 2, 3}:
///   mode 1: dim1 x (dim2*dim3), frontal slices side by side;
///   mode 2: dim2 x (dim1*dim3), transposed frontal slices side by side;
///   mode 3: dim3 x (dim1*dim2), row k = vec(slice k)^T.
inline ComplexMatrix unfold(const Tensor3& t, int mode) {
  const Index i = t.dim1(), j = t.dim2(), k = t.dim3();
  switch (mode) {
    case 1: {
      ComplexMatrix out(i, j * k);
      for (Index s = 0; s < k; ++s) out.middleCols(s * j, j) = t.slice(s);
      return out;
    }
    case 2: {
      ComplexMatrix out(j, i * k);
      for (Index s = 0; s < k; ++s)
        out.middleCols(s * i, i) = t.slice(s).transpose();
      return out;
    }
    case 3: {
      ComplexMatrix out(k, i * j);
      for (Index s = 0; s < k; ++s)
        out.row(s) = vec(t.slice(s)).transpose();
      return out;
    }
    default:
      throw dimension_error("unfold: mode must be 1, 2 or 3");
  }
}

/// Inverse of unfold: fold(unfold(t, n), n, dims(t)) == t.
inline Tensor3 fold(const ComplexMatrix& m, int mode, Index d1, Index d2,
                    Index d3) {
  const auto expect = [&](Index rows, Index cols) {
    if (m.rows() != rows || m.cols() != cols)
      throw dimension_error("fold: matrix " + std::to_string(m.rows()) + "x" +
                            std::to_string(m.cols()) +
                            " inconsistent with target dimensions");
  };
  Tensor3 t(d1, d2, d3);
  switch (mode) {
    case 1:
      expect(d1, d2 * d3);
      for (Index s = 0; s < d3; ++s) t.slice(s) = m.middleCols(s * d2, d2);
      return t;
    case 2:
      expect(d2, d1 * d3);
      for (Index s = 0; s < d3; ++s)
        t.slice(s) = m.middleCols(s * d1, d1).transpose();
      return t;
    case 3:
      expect(d3, d1 * d2);
      for (Index s = 0; s < d3; ++s)
        t.slice(s) = unvec(m.row(s).transpose(), d1, d2);
      return t;
    default:
      throw dimension_error("fold: mode must be 1, 2 or 3");
  }
}

/// n-mode product: pre-multiplies the n-mode unfolding by `a` and folds back,
/// so unfold(result, n) = a * unfold(t, n).
inline Tensor3 n_mode_product(const Tensor3& t, const ComplexMatrix& a,
                              int mode) {
  Index dims[3] = {t.dim1(), t.dim2(), t.dim3()};
  if (mode < 1 || mode > 3)
    throw dimension_error("n_mode_product: mode must be 1, 2 or 3");
  if (a.cols() != dims[mode - 1])
    throw dimension_error("n_mode_product: matrix columns do not match mode " +
                          std::to_string(mode));
  dims[mode - 1] = a.rows();
  return fold(a * unfold(t, mode), mode, dims[0], dims[1], dims[2]);
}

}  // namespace bdce
