#pragma once

#include <cmath>
#include <limits>

#include "bdce/design.hpp"
#include "bdce/linalg.hpp"
#include "bdce/rng.hpp"
#include "bdce/tensor3.hpp"

namespace bdce {

/// Ground-truth transmitter-side and receiver-side channels with the group
/// geometry needed to address their per-group column blocks.
struct ChannelPair {
  ComplexMatrix h;  // M_T x N
  ComplexMatrix g;  // M_R x N
  int nbar = 1;
  int q = 1;

  auto h_block(int qq) const { return h.middleCols(qq * nbar, nbar); }
  auto g_block(int qq) const { return g.middleCols(qq * nbar, nbar); }
};

/// Noisy received-pilot tensor (M_R x M_T x K) plus noise bookkeeping.
struct ReceivedPilots {
  Tensor3 y;
  double snr_db = std::numeric_limits<double>::infinity();
  std::uint64_t noise_seed = 0;
  double noiseless_power = 0.0;  // squared Frobenius norm without noise
};

/// Draws i.i.d. CN(0, 1) channels from a seeded stream. The same seed always
/// reproduces the same pair.
inline ChannelPair draw_channels(int m_t, int m_r, int nbar, int q,
                                 std::uint64_t seed) {
  if (m_t < 1 || m_r < 1 || nbar < 1 || q < 1)
    throw dimension_error("draw_channels: counts must be positive");
  const int n = nbar * q;
  RandomStream rng(seed);
  ChannelPair ch;
  ch.nbar = nbar;
  ch.q = q;
  ch.h.resize(m_t, n);
  ch.g.resize(m_r, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < m_t; ++i) ch.h(i, j) = rng.complex_normal();
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < m_r; ++i) ch.g(i, j) = rng.complex_normal();
  return ch;
}

/// Combined block-Kronecker channel [H^(1) (x) G^(1), ..., H^(Q) (x) G^(Q)],
/// of shape (M_R*M_T) x (Nbar^2*Q). Invariant under the per-group scaling
/// ambiguity (a*H^(q), G^(q)/a).
inline ComplexMatrix combined_channel(const ChannelPair& ch) {
  return block_kron(ch.h, ch.g, ch.q);
}

namespace detail {

inline Tensor3 noiseless_pilots(const TrainingDesign& design,
                                const ChannelPair& ch) {
  const int m_r = static_cast<int>(ch.g.rows());
  const int m_t = static_cast<int>(ch.h.rows());
  Tensor3 y(m_r, m_t, design.blocks());
  for (int k = 0; k < design.blocks(); ++k) {
    ComplexMatrix slice = ComplexMatrix::Zero(m_r, m_t);
    for (int qq = 0; qq < design.groups(); ++qq)
      slice += ch.g_block(qq) * design.group(qq).slice(k) *
               ch.h_block(qq).transpose();
    y.set_slice(k, slice);
  }
  return y;
}

inline void check_geometry(const TrainingDesign& design,
                           const ChannelPair& ch) {
  if (design.nbar() != ch.nbar || design.groups() != ch.q ||
      ch.h.cols() != design.elements() || ch.g.cols() != design.elements())
    throw dimension_error("pilot synthesis: design and channel geometry "
                          "disagree");
}

}  // namespace detail

/// Synthesizes the post-matched-filter received pilots: the sum over groups of
/// the group training tensor multiplied along modes 1 and 2 by the group
/// channels, plus white CN(0, sigma^2) noise scaled so that
/// E||noise||^2 = ||noiseless||^2 * 10^(-snr_db/10). An infinite snr_db
/// disables the noise entirely.
inline ReceivedPilots synthesize_pilots(const TrainingDesign& design,
                                        const ChannelPair& ch, double snr_db,
                                        std::uint64_t seed) {
  detail::check_geometry(design, ch);
  ReceivedPilots out;
  out.y = detail::noiseless_pilots(design, ch);
  out.snr_db = snr_db;
  out.noise_seed = seed;
  out.noiseless_power = out.y.squared_norm();
  if (!std::isinf(snr_db)) {
    const double entries = static_cast<double>(out.y.size());
    const double sigma = std::sqrt(out.noiseless_power /
                                   (entries * std::pow(10.0, snr_db / 10.0)));
    RandomStream rng(seed);
    for (Index k = 0; k < out.y.dim3(); ++k)
      for (Index j = 0; j < out.y.dim2(); ++j)
        for (Index i = 0; i < out.y.dim1(); ++i)
          out.y(i, j, k) += sigma * rng.complex_normal();
  }
  return out;
}

/// Orthogonal pilot matrix: the first m_t rows of a t-point DFT, satisfying
/// X X^H = t * I.
inline ComplexMatrix orthogonal_pilots(int m_t, int t) {
  if (t < m_t) throw dimension_error("orthogonal_pilots: need t >= m_t");
  ComplexMatrix x(m_t, t);
  for (int c = 0; c < t; ++c)
    for (int r = 0; r < m_t; ++r)
      x(r, c) = std::polar(
          1.0, -2.0 * std::numbers::pi * static_cast<double>(r) * c / t);
  return x;
}

/// Simulates the pre-filter pilot phase: per block, the receiver sees
/// G S_k H^T X plus noise over t slots, then matched-filters with X^H / c
/// where X X^H = c I. Noiseless output equals synthesize_pilots exactly; with
/// unitary pilots the noise statistics also match the direct path.
inline ReceivedPilots synthesize_prefilter_pilots(const TrainingDesign& design,
                                                  const ChannelPair& ch,
                                                  const ComplexMatrix& x,
                                                  double snr_db,
                                                  std::uint64_t seed) {
  detail::check_geometry(design, ch);
  const int m_t = static_cast<int>(ch.h.rows());
  const int m_r = static_cast<int>(ch.g.rows());
  const Index t = x.cols();
  if (x.rows() != m_t || t < m_t)
    throw dimension_error("prefilter pilots: X must be M_T x T with T >= M_T");
  ComplexMatrix gram = x * x.adjoint();
  const double c = gram.real().trace() / static_cast<double>(m_t);
  if (c <= 0.0 ||
      (gram - c * ComplexMatrix::Identity(m_t, m_t)).cwiseAbs().maxCoeff() >
          1e-10 * c)
    throw std::invalid_argument("prefilter pilots: X X^H must be a positive "
                                "multiple of the identity");

  Tensor3 y0 = detail::noiseless_pilots(design, ch);
  const int k_total = design.blocks();

  ReceivedPilots out;
  out.y = Tensor3(m_r, m_t, k_total);
  out.snr_db = snr_db;
  out.noise_seed = seed;

  double prefilter_power = 0.0;
  std::vector<ComplexMatrix> slots(k_total);
  for (int k = 0; k < k_total; ++k) {
    slots[k] = y0.slice(k) * x;
    prefilter_power += slots[k].squaredNorm();
  }
  if (!std::isinf(snr_db)) {
    const double entries = static_cast<double>(m_r) * t * k_total;
    const double sigma = std::sqrt(prefilter_power /
                                   (entries * std::pow(10.0, snr_db / 10.0)));
    RandomStream rng(seed);
    for (int k = 0; k < k_total; ++k)
      for (Index j = 0; j < t; ++j)
        for (Index i = 0; i < m_r; ++i)
          slots[k](i, j) += sigma * rng.complex_normal();
  }
  for (int k = 0; k < k_total; ++k)
    out.y.set_slice(k, slots[k] * x.adjoint() / c);
  out.noiseless_power = y0.squared_norm();
  return out;
}

}  // namespace bdce
