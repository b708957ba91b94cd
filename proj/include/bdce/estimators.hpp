#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "bdce/channel.hpp"
#include "bdce/design.hpp"
#include "bdce/linalg.hpp"
#include "bdce/tensor3.hpp"

namespace bdce {

/// Channel estimates. The combined-channel estimate t_hat is always present;
/// per-channel estimates and the iteration trace are filled by the estimators
/// that produce them. When both per-channel estimates are present,
/// t_hat = block_kron(h_hat, g_hat, Q) holds by construction, and the
/// residual history is non-increasing.
struct EstimationResult {
  std::optional<ComplexMatrix> h_hat;  // M_T x N
  std::optional<ComplexMatrix> g_hat;  // M_R x N
  ComplexMatrix t_hat;                 // (M_R*M_T) x (Nbar^2*Q)
  int iterations = 0;
  std::vector<double> residuals;
  // Per-group scale factors applied by resolve_scaling (g multiplied by
  // scale_g, h by scale_h, with scale_g * scale_h = 1).
  std::vector<Complex> scale_g, scale_h;
};

/// How the iterative estimator assembles its per-iteration LS systems. Both
/// forms produce the same matrix; the full form multiplies by the dense
/// block-diagonal slices, the block form skips their zero blocks.
enum class BtalsUpdateForm { FullTensor, BlockKron };

struct BtalsOptions {
  double eta = 1e-6;
  int max_iters = 200;
  std::uint64_t init_seed = 0;
  // Optional explicit initialization for the transmitter-side iterate
  // (replaces the random draw; used by tests).
  std::optional<ComplexMatrix> init_h;
  BtalsUpdateForm form = BtalsUpdateForm::FullTensor;
};

namespace detail {

inline void require(bool ok, const ValidationReport& rep) {
  if (!ok) throw config_error(rep);
}

/// Minimum-norm least-squares solution X of X * system ~= rhs, i.e.
/// rhs * pinv(system), computed through a rank-revealing complete orthogonal
/// decomposition instead of a full SVD.
inline ComplexMatrix right_pinv_solve(const ComplexMatrix& system,
                                      const ComplexMatrix& rhs) {
  Eigen::CompleteOrthogonalDecomposition<ComplexMatrix> cod(
      system.transpose());
  return cod.solve(rhs.transpose()).transpose();
}

}  // namespace detail

/// Combined-channel estimate (S3^+ * Y_(3))^T shared by the baseline and the
/// Kronecker-factorization estimator. Orthogonal designs use the matched
/// filter (Nbar/K) * S3^H instead of a general pseudo-inverse.
inline ComplexMatrix ls_combined_estimate(const ReceivedPilots& pilots,
                                          const TrainingDesign& design) {
  const ComplexMatrix y3 = unfold(pilots.y, 3);
  if (design.orthogonal_s3()) {
    const double scale =
        static_cast<double>(design.nbar()) / design.blocks();
    return (scale * (design.s3().adjoint() * y3)).transpose();
  }
  return (pinv(design.s3()) * y3).transpose();
}

/// Baseline least-squares estimate of the combined channel. Requires
/// K >= Nbar^2*Q; produces no per-channel estimates.
inline EstimationResult estimate_ls(const ReceivedPilots& pilots,
                                    const TrainingDesign& design) {
  ValidationReport rep =
      validate_identifiability(design, static_cast<int>(pilots.y.dim2()),
                               static_cast<int>(pilots.y.dim1()),
                               Algorithm::Ls);
  detail::require(rep.pass, rep);
  EstimationResult out;
  out.t_hat = ls_combined_estimate(pilots, design);
  return out;
}

/// Closed-form decoupled estimate: the LS filtering stage followed by Q
/// independent rank-one factorizations of the rearranged per-group blocks.
/// The dominant singular value is split evenly between the two factors so the
/// rebuilt combined channel is the best per-group rank-one reconstruction.
inline EstimationResult estimate_btkf(const ReceivedPilots& pilots,
                                      const TrainingDesign& design) {
  const int m_r = static_cast<int>(pilots.y.dim1());
  const int m_t = static_cast<int>(pilots.y.dim2());
  ValidationReport rep =
      validate_identifiability(design, m_t, m_r, Algorithm::Btkf);
  detail::require(rep.pass, rep);

  const int nbar = design.nbar();
  const int q = design.groups();
  const ComplexMatrix z = ls_combined_estimate(pilots, design);

  EstimationResult out;
  out.g_hat = ComplexMatrix(m_r, nbar * q);
  out.h_hat = ComplexMatrix(m_t, nbar * q);
  for (int qq = 0; qq < q; ++qq) {
    const ComplexMatrix zq = z.middleCols(qq * nbar * nbar, nbar * nbar);
    const ComplexMatrix rearranged = kron_rearrange(zq, m_r, m_t, nbar);
    const RankOneFactors r = rank_one_approx(rearranged);
    const double root = std::sqrt(r.sigma);
    out.g_hat->middleCols(qq * nbar, nbar) =
        unvec(root * r.u, m_r, nbar);
    out.h_hat->middleCols(qq * nbar, nbar) =
        unvec(root * r.v.conjugate(), m_t, nbar);
  }
  out.t_hat = block_kron(*out.h_hat, *out.g_hat, q);
  return out;
}

namespace detail {

/// LS system matrix for the receiver-side update: column block k is the k-th
/// training slice times H^T. With FullTensor the dense N x N block-diagonal
/// slice multiplies the whole H^T; with BlockKron each group block multiplies
/// its own channel block and the zero blocks are skipped.
inline ComplexMatrix g_update_system(const TrainingDesign& design,
                                     const std::vector<ComplexMatrix>& slices,
                                     const ComplexMatrix& h,
                                     BtalsUpdateForm form) {
  const Index n = design.elements();
  const Index nbar = design.nbar();
  const Index k_total = design.blocks();
  const Index m_t = h.rows();
  ComplexMatrix sys(n, k_total * m_t);
  if (form == BtalsUpdateForm::FullTensor) {
    const ComplexMatrix ht = h.transpose();
    for (Index k = 0; k < k_total; ++k)
      sys.middleCols(k * m_t, m_t) = slices[k] * ht;
  } else {
    for (Index k = 0; k < k_total; ++k)
      for (int qq = 0; qq < design.groups(); ++qq)
        sys.block(qq * nbar, k * m_t, nbar, m_t) =
            design.group(qq).slice(k) *
            h.middleCols(qq * nbar, nbar).transpose();
  }
  return sys;
}

inline ComplexMatrix h_update_system(const TrainingDesign& design,
                                     const std::vector<ComplexMatrix>& slices,
                                     const ComplexMatrix& g,
                                     BtalsUpdateForm form) {
  const Index n = design.elements();
  const Index nbar = design.nbar();
  const Index k_total = design.blocks();
  const Index m_r = g.rows();
  ComplexMatrix sys(n, k_total * m_r);
  if (form == BtalsUpdateForm::FullTensor) {
    const ComplexMatrix gt = g.transpose();
    for (Index k = 0; k < k_total; ++k)
      sys.middleCols(k * m_r, m_r) = slices[k].transpose() * gt;
  } else {
    for (Index k = 0; k < k_total; ++k)
      for (int qq = 0; qq < design.groups(); ++qq)
        sys.block(qq * nbar, k * m_r, nbar, m_r) =
            design.group(qq).slice(k).transpose() *
            g.middleCols(qq * nbar, nbar).transpose();
  }
  return sys;
}

}  // namespace detail

/// Iterative decoupled estimation by alternating least squares on the 1- and
/// 2-mode unfoldings. Stops when the normalized fit changes by at most eta
/// between iterations or max_iters is reached.
inline EstimationResult estimate_btals(const ReceivedPilots& pilots,
                                       const TrainingDesign& design,
                                       const BtalsOptions& opts = {}) {
  const int m_r = static_cast<int>(pilots.y.dim1());
  const int m_t = static_cast<int>(pilots.y.dim2());
  ValidationReport rep =
      validate_identifiability(design, m_t, m_r, Algorithm::Btals);
  detail::require(rep.pass, rep);
  if (opts.eta < 0.0 || opts.max_iters < 1)
    throw std::invalid_argument("estimate_btals: eta must be nonnegative and "
                                "max_iters positive");

  const int n = design.elements();
  const int q = design.groups();
  const ComplexMatrix y1 = unfold(pilots.y, 1);
  const ComplexMatrix y2 = unfold(pilots.y, 2);
  const ComplexMatrix y3 = unfold(pilots.y, 3);
  const double y3_power = y3.squaredNorm();

  std::vector<ComplexMatrix> slices;
  if (opts.form == BtalsUpdateForm::FullTensor) {
    slices.reserve(design.blocks());
    for (int k = 0; k < design.blocks(); ++k)
      slices.push_back(design.scattering_matrix(k));
  }

  ComplexMatrix h(m_t, n);
  if (opts.init_h) {
    if (opts.init_h->rows() != m_t || opts.init_h->cols() != n)
      throw dimension_error("estimate_btals: init_h shape mismatch");
    h = *opts.init_h;
  } else {
    RandomStream rng(opts.init_seed);
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < m_t; ++i) h(i, j) = rng.complex_normal();
  }

  EstimationResult out;
  ComplexMatrix g(m_r, n);
  double previous = std::numeric_limits<double>::infinity();
  for (int iter = 1; iter <= opts.max_iters; ++iter) {
    g = detail::right_pinv_solve(
        detail::g_update_system(design, slices, h, opts.form), y1);
    h = detail::right_pinv_solve(
        detail::h_update_system(design, slices, g, opts.form), y2);

    out.t_hat = block_kron(h, g, q);
    const double residual =
        (y3 - design.s3() * out.t_hat.transpose()).squaredNorm() / y3_power;
    if (!std::isfinite(residual))
      throw numerical_error("estimate_btals: non-finite residual");
    out.residuals.push_back(residual);
    out.iterations = iter;
    if (std::abs(residual - previous) <= opts.eta) break;
    previous = residual;
  }
  out.h_hat = std::move(h);
  out.g_hat = std::move(g);
  return out;
}

/// Fits one complex scalar per group between the estimated and true
/// receiver-side channels, moves it onto the estimates (g scaled by the fit,
/// h by its inverse) and records the applied scales. The combined channel is
/// unchanged up to roundoff.
inline EstimationResult resolve_scaling(EstimationResult result,
                                        const ChannelPair& truth) {
  if (!result.h_hat || !result.g_hat)
    throw std::invalid_argument("resolve_scaling: per-channel estimates "
                                "required");
  const int nbar = truth.nbar;
  result.scale_g.resize(truth.q);
  result.scale_h.resize(truth.q);
  for (int qq = 0; qq < truth.q; ++qq) {
    const ComplexVector est = vec(result.g_hat->middleCols(qq * nbar, nbar));
    const ComplexVector ref = vec(truth.g_block(qq));
    const double energy = est.squaredNorm();
    if (energy == 0.0)
      throw degenerate_input_error("resolve_scaling: zero-norm estimate");
    const Complex alpha = est.dot(ref) / energy;
    if (alpha == Complex(0.0))
      throw degenerate_input_error("resolve_scaling: orthogonal estimate");
    result.g_hat->middleCols(qq * nbar, nbar) *= alpha;
    result.h_hat->middleCols(qq * nbar, nbar) *= 1.0 / alpha;
    result.scale_g[qq] = alpha;
    result.scale_h[qq] = 1.0 / alpha;
  }
  result.t_hat = block_kron(*result.h_hat, *result.g_hat, truth.q);
  return result;
}

}  // namespace bdce
