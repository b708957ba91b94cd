#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <complex>
#include <limits>
#include <string>

#include "bdce/errors.hpp"

namespace bdce {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using Index = Eigen::Index;

/// Stacks the columns of `m` on top of each other.
inline ComplexVector vec(const ComplexMatrix& m) {
  return Eigen::Map<const ComplexVector>(m.data(), m.size());
}

/// Inverse of vec: reshapes a length rows*cols vector into rows x cols,
/// column by column.
inline ComplexMatrix unvec(const ComplexVector& v, Index rows, Index cols) {
  if (v.size() != rows * cols) {
    throw dimension_error("unvec: vector length " + std::to_string(v.size()) +
                          " does not match " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  }
  return Eigen::Map<const ComplexMatrix>(v.data(), rows, cols);
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Column-block-wise Kronecker product [A^(1) (x) B^(1), ..., A^(Q) (x) B^(Q)],
/// where A^(q) and B^(q) are the q-th column blocks of a and b. Block widths
/// are a.cols()/q_blocks and b.cols()/q_blocks; for unit-width blocks this is
/// the Khatri-Rao (column-wise Kronecker) product.
inline ComplexMatrix block_kron(const ComplexMatrix& a, const ComplexMatrix& b,
                                Index q_blocks) {
  if (q_blocks < 1 || a.cols() % q_blocks != 0 || b.cols() % q_blocks != 0) {
    throw dimension_error(
        "block_kron: column counts " + std::to_string(a.cols()) + ", " +
        std::to_string(b.cols()) + " not divisible into " +
        std::to_string(q_blocks) + " blocks");
  }
  const Index la = a.cols() / q_blocks;
  const Index lb = b.cols() / q_blocks;
  ComplexMatrix out(a.rows() * b.rows(), la * lb * q_blocks);
  for (Index q = 0; q < q_blocks; ++q) {
    out.middleCols(q * la * lb, la * lb) =
        kron(a.middleCols(q * la, la), b.middleCols(q * lb, lb));
  }
  return out;
}

/// Permutation relating the n-mode unfoldings (n = 1, 2) of the full
/// block-diagonal training tensor to the group-block-diagonal unfolding:
/// S_n = unfold(S, n) * P. It reorders column groups from
/// (block, group, element) order to (group, block, element) order.
inline ComplexMatrix unfolding_permutation(Index nbar, Index q, Index k) {
  const Index n = nbar * q * k;
  ComplexMatrix p = ComplexMatrix::Zero(n, n);
  for (Index kk = 0; kk < k; ++kk)
    for (Index qq = 0; qq < q; ++qq)
      for (Index e = 0; e < nbar; ++e)
        p((kk * q + qq) * nbar + e, (qq * k + kk) * nbar + e) = 1.0;
  return p;
}

/// Moore-Penrose pseudo-inverse. Singular values below
/// max(rows, cols) * eps * sigma_max are truncated.
inline ComplexMatrix pinv(const ComplexMatrix& m) {
  if (m.size() == 0) return ComplexMatrix(m.cols(), m.rows());
  Eigen::JacobiSVD<ComplexMatrix> svd(m,
                                      Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double tol = static_cast<double>(std::max(m.rows(), m.cols())) *
                     std::numeric_limits<double>::epsilon() * sv(0);
  Eigen::VectorXd inv_sv = Eigen::VectorXd::Zero(sv.size());
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) inv_sv(i) = 1.0 / sv(i);
  return svd.matrixV() * inv_sv.asDiagonal() *
         svd.matrixU().adjoint();
}

struct RankOneFactors {
  ComplexVector u;
  double sigma = 0.0;
  ComplexVector v;
};

/// Dominant singular triple (u, sigma, v): sigma*u*v^H is the best rank-one
/// approximation of `m` in Frobenius norm. The phase is fixed so that the
/// first nonzero entry of u is real nonnegative.
inline RankOneFactors rank_one_approx(const ComplexMatrix& m) {
  if (m.size() == 0 || m.norm() == 0.0) {
    throw degenerate_input_error("rank_one_approx: zero matrix");
  }
  Eigen::JacobiSVD<ComplexMatrix> svd(m,
                                      Eigen::ComputeThinU | Eigen::ComputeThinV);
  RankOneFactors out;
  out.sigma = svd.singularValues()(0);
  out.u = svd.matrixU().col(0);
  out.v = svd.matrixV().col(0);
  const double nonzero = 1e-12 * out.u.cwiseAbs().maxCoeff();
  for (Index i = 0; i < out.u.size(); ++i) {
    const double mag = std::abs(out.u(i));
    if (mag > nonzero) {
      // u*e^{-i arg} and v*e^{-i arg} leave sigma*u*v^H unchanged.
      const Complex phase = std::conj(out.u(i)) / mag;
      out.u *= phase;
      out.v *= phase;
      break;
    }
  }
  return out;
}

/// Rearranges a (m_r*m_t) x nbar^2 block so that an exact Kronecker product
/// H (x) G maps to the rank-one matrix vec(G) vec(H)^T. Output is
/// (m_r*nbar) x (m_t*nbar).
inline ComplexMatrix kron_rearrange(const ComplexMatrix& zq, Index m_r,
                                    Index m_t, Index nbar) {
  if (zq.rows() != m_r * m_t || zq.cols() != nbar * nbar) {
    throw dimension_error("kron_rearrange: expected " +
                          std::to_string(m_r * m_t) + "x" +
                          std::to_string(nbar * nbar) + ", got " +
                          std::to_string(zq.rows()) + "x" +
                          std::to_string(zq.cols()));
  }
  ComplexMatrix out(m_r * nbar, m_t * nbar);
  for (Index n1 = 0; n1 < nbar; ++n1)
    for (Index n2 = 0; n2 < nbar; ++n2)
      for (Index mt = 0; mt < m_t; ++mt)
        for (Index mr = 0; mr < m_r; ++mr)
          out(mr + n2 * m_r, mt + n1 * m_t) = zq(mr + mt * m_r, n2 + n1 * nbar);
  return out;
}

}  // namespace bdce
