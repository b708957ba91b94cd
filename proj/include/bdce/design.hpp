#pragma once

#include <cmath>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bdce/linalg.hpp"
#include "bdce/rng.hpp"
#include "bdce/tensor3.hpp"

namespace bdce {

enum class ThetaKind { Hadamard, Dft };

enum class Algorithm { Ls, Btkf, Btals };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Ls: return "ls";
    case Algorithm::Btkf: return "btkf";
    case Algorithm::Btals: return "btals";
  }
  return "?";
}

/// Geometry and construction parameters of a training design:
/// Q groups of Nbar elements each, K = K1*K2 training blocks built from K1
/// base slices scaled by a K2 x Q unit-modulus matrix, optionally decorrelated
/// by seeded per-group phase rotations.
struct DesignConfig {
  int nbar = 1;
  int q = 1;
  int k1 = 1;
  int k2 = 1;
  ThetaKind theta = ThetaKind::Dft;
  bool rotated = false;
  std::uint64_t seed = 0;

  int blocks() const { return k1 * k2; }
  int elements() const { return nbar * q; }

  void validate() const {
    if (nbar < 1 || q < 1 || k1 < 1 || k2 < 1)
      throw dimension_error("DesignConfig: counts must be positive");
    if (k1 > nbar * nbar)
      throw dimension_error("DesignConfig: K1 must not exceed Nbar^2");
  }

  /// Splits a total block count K into K1*K2. Prefers K2 = Q when that keeps
  /// K1 within Nbar^2; otherwise uses the largest admissible divisor of K.
  static DesignConfig from_total_blocks(int nbar, int q, int k,
                                        ThetaKind theta = ThetaKind::Dft,
                                        bool rotated = false,
                                        std::uint64_t seed = 0) {
    if (k < 1) throw dimension_error("DesignConfig: K must be positive");
    DesignConfig cfg;
    cfg.nbar = nbar;
    cfg.q = q;
    cfg.theta = theta;
    cfg.rotated = rotated;
    cfg.seed = seed;
    if (k % q == 0 && k / q <= nbar * nbar) {
      cfg.k2 = q;
      cfg.k1 = k / q;
    } else {
      int k1 = 1;
      for (int d = std::min(nbar * nbar, k); d >= 1; --d)
        if (k % d == 0) {
          k1 = d;
          break;
        }
      cfg.k1 = k1;
      cfg.k2 = k / k1;
    }
    cfg.validate();
    return cfg;
  }
};

/// Base tensor of K1 unitary slices. Slice a*Nbar + b is the unitary DFT
/// matrix with rows cyclically shifted by a and columns by b; entry (i, j) is
/// exp(-2*pi*i*(i+a)*(j+b)/Nbar)/sqrt(Nbar). Over the full grid K1 = Nbar^2
/// the vectorized slices are mutually orthogonal with squared norm Nbar, so
/// the 3-mode unfolding satisfies Z3^H Z3 = Nbar * I.
inline Tensor3 build_base_tensor(int nbar, int k1) {
  if (nbar < 1 || k1 < 1) throw dimension_error("build_base_tensor: bad counts");
  if (k1 > nbar * nbar)
    throw dimension_error("build_base_tensor: K1 exceeds Nbar^2");
  const double scale = 1.0 / std::sqrt(static_cast<double>(nbar));
  Tensor3 z(nbar, nbar, k1);
  for (int s = 0; s < k1; ++s) {
    const int a = s / nbar;
    const int b = s % nbar;
    for (int j = 0; j < nbar; ++j)
      for (int i = 0; i < nbar; ++i) {
        const double angle = -2.0 * std::numbers::pi *
                             static_cast<double>((i + a) * (j + b)) / nbar;
        z(i, j, s) = std::polar(scale, angle);
      }
  }
  return z;
}

namespace detail {

inline bool is_prime(int n) {
  if (n < 2) return false;
  for (int d = 2; d * d <= n; ++d)
    if (n % d == 0) return false;
  return true;
}

inline int legendre_symbol(int a, int p) {
  a %= p;
  if (a < 0) a += p;
  if (a == 0) return 0;
  // a^((p-1)/2) mod p by square-and-multiply.
  long long result = 1, base = a;
  int e = (p - 1) / 2;
  while (e > 0) {
    if (e & 1) result = result * base % p;
    base = base * base % p;
    e >>= 1;
  }
  return result == 1 ? 1 : -1;
}

/// Hadamard matrix of order n, when one is constructible by Sylvester
/// doubling or the quadratic-residue (Paley I) construction.
inline std::optional<Eigen::MatrixXd> hadamard(int n) {
  if (n == 1) return Eigen::MatrixXd::Ones(1, 1);
  if (n == 2) {
    Eigen::MatrixXd h(2, 2);
    h << 1, 1, 1, -1;
    return h;
  }
  if (n % 4 != 0) return std::nullopt;
  if (n % 2 == 0) {
    if (auto half = hadamard(n / 2)) {
      Eigen::MatrixXd h(n, n);
      h.topLeftCorner(n / 2, n / 2) = *half;
      h.topRightCorner(n / 2, n / 2) = *half;
      h.bottomLeftCorner(n / 2, n / 2) = *half;
      h.bottomRightCorner(n / 2, n / 2) = -*half;
      return h;
    }
  }
  const int p = n - 1;
  if (is_prime(p) && p % 4 == 3) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    h.row(0).setOnes();
    h.col(0).setConstant(-1.0);
    h(0, 0) = 1.0;
    for (int i = 1; i < n; ++i)
      for (int j = 1; j < n; ++j)
        h(i, j) = (i == j) ? 1.0 : legendre_symbol(j - i, p);
    return h;
  }
  return std::nullopt;
}

}  // namespace detail

/// K2 x Q scaling matrix: the top-left corner of a max(K2, Q)-order Hadamard
/// or DFT matrix. All entries are unit modulus; with K2 >= Q the columns are
/// orthogonal, Theta^H Theta = K2 * I.
inline ComplexMatrix build_theta(int k2, int q, ThetaKind kind) {
  if (k2 < 1 || q < 1) throw dimension_error("build_theta: bad counts");
  const int order = std::max(k2, q);
  ComplexMatrix full(order, order);
  if (kind == ThetaKind::Hadamard) {
    auto h = detail::hadamard(order);
    if (!h) {
      throw std::invalid_argument(
          "build_theta: no Hadamard matrix of order " + std::to_string(order) +
          " is constructible here; use the DFT kind instead");
    }
    full = h->cast<Complex>();
  } else {
    for (int c = 0; c < order; ++c)
      for (int r = 0; r < order; ++r)
        full(r, c) = std::polar(
            1.0, -2.0 * std::numbers::pi * static_cast<double>(r) * c / order);
  }
  return full.topLeftCorner(k2, q);
}

/// Two-sided diagonal phase rotation D * slice * D^* with D = diag(w_row).
/// Preserves unitarity of the slice.
inline ComplexMatrix apply_random_rotation(const ComplexMatrix& slice,
                                           const ComplexVector& w_row) {
  if (slice.rows() != slice.cols() || w_row.size() != slice.rows())
    throw dimension_error("apply_random_rotation: shape mismatch");
  for (Index i = 0; i < w_row.size(); ++i)
    if (std::abs(std::abs(w_row(i)) - 1.0) > 1e-9)
      throw std::invalid_argument(
          "apply_random_rotation: rotation entries must be unit modulus");
  return w_row.asDiagonal() * slice * w_row.conjugate().asDiagonal();
}

/// The per-group training tensors S^(q) plus cached unfoldings.
///
/// S1 and S2 are the group-block-diagonal 1- and 2-mode unfoldings
/// (Nbar*Q x Nbar*K*Q); S3 is the compact 3-mode unfolding (K x Nbar^2*Q)
/// whose row k, block q is vec(S^(q) slice k)^T. Immutable after
/// construction.
class TrainingDesign {
 public:
  static TrainingDesign build(const DesignConfig& cfg) {
    cfg.validate();
    const int k_total = cfg.blocks();
    Tensor3 z = build_base_tensor(cfg.nbar, cfg.k1);
    ComplexMatrix theta = build_theta(cfg.k2, cfg.q, cfg.theta);

    std::vector<ComplexMatrix> rotations(cfg.q);
    for (int qq = 0; qq < cfg.q; ++qq) {
      rotations[qq] = ComplexMatrix::Ones(k_total, cfg.nbar);
      if (cfg.rotated) {
        RandomStream rng(derive_seed(cfg.seed, {0x726f74, std::uint64_t(qq)}));
        for (int k = 0; k < k_total; ++k)
          for (int e = 1; e < cfg.nbar; ++e)
            rotations[qq](k, e) =
                std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
      }
    }

    std::vector<Tensor3> groups;
    groups.reserve(cfg.q);
    for (int qq = 0; qq < cfg.q; ++qq) {
      Tensor3 s(cfg.nbar, cfg.nbar, k_total);
      for (int k2i = 0; k2i < cfg.k2; ++k2i)
        for (int k1i = 0; k1i < cfg.k1; ++k1i) {
          const int k = k2i * cfg.k1 + k1i;
          ComplexMatrix slice = theta(k2i, qq) * z.slice(k1i);
          if (cfg.rotated)
            slice = apply_random_rotation(slice, rotations[qq].row(k));
          s.set_slice(k, slice);
        }
      groups.push_back(std::move(s));
    }

    TrainingDesign d(cfg, std::move(groups), std::move(rotations));
    if (!cfg.rotated) {
      // Unrotated designs factor through the base tensor, so the unfoldings
      // can be assembled from Kronecker products with the Theta columns.
      const ComplexMatrix z1 = unfold(z, 1);
      const ComplexMatrix z2 = unfold(z, 2);
      const ComplexMatrix z3 = unfold(z, 3);
      const Index nbar = cfg.nbar;
      const Index nq = nbar * cfg.q;
      d.s1_ = ComplexMatrix::Zero(nq, nbar * k_total * cfg.q);
      d.s2_ = ComplexMatrix::Zero(nq, nbar * k_total * cfg.q);
      for (int qq = 0; qq < cfg.q; ++qq) {
        const ComplexMatrix theta_row = theta.col(qq).transpose();
        d.s1_.block(qq * nbar, qq * nbar * k_total, nbar, nbar * k_total) =
            kron(theta_row, z1);
        d.s2_.block(qq * nbar, qq * nbar * k_total, nbar, nbar * k_total) =
            kron(theta_row, z2);
      }
      d.s3_ = kron(theta, z3);
    } else {
      d.assemble_unfoldings();
    }
    d.orthogonal_s3_ =
        !cfg.rotated && cfg.k1 == cfg.nbar * cfg.nbar && cfg.k2 >= cfg.q;
    return d;
  }

  /// Assembles a design directly from per-group slice tensors. Used for
  /// cross-checking the factored cache assembly and for building designs with
  /// externally supplied slices (e.g. permuted group order).
  static TrainingDesign from_group_slices(const DesignConfig& cfg,
                                          std::vector<Tensor3> groups,
                                          std::vector<ComplexMatrix> rotations =
                                              {}) {
    cfg.validate();
    if (static_cast<int>(groups.size()) != cfg.q)
      throw dimension_error("from_group_slices: expected Q group tensors");
    for (const Tensor3& g : groups)
      if (g.dim1() != cfg.nbar || g.dim2() != cfg.nbar ||
          g.dim3() != cfg.blocks())
        throw dimension_error("from_group_slices: group tensor shape mismatch");
    if (rotations.empty())
      rotations.assign(cfg.q,
                       ComplexMatrix::Ones(cfg.blocks(), cfg.nbar));
    TrainingDesign d(cfg, std::move(groups), std::move(rotations));
    d.assemble_unfoldings();
    d.orthogonal_s3_ = false;
    return d;
  }

  const DesignConfig& config() const { return cfg_; }
  int nbar() const { return cfg_.nbar; }
  int groups() const { return cfg_.q; }
  int blocks() const { return cfg_.blocks(); }
  int elements() const { return cfg_.elements(); }

  const Tensor3& group(int qq) const { return groups_.at(qq); }
  const ComplexMatrix& rotation(int qq) const { return rotations_.at(qq); }
  const ComplexMatrix& s1() const { return s1_; }
  const ComplexMatrix& s2() const { return s2_; }
  const ComplexMatrix& s3() const { return s3_; }

  /// True when S3^H S3 = (K/Nbar) I holds by construction, enabling matched
  /// filtering instead of a pseudo-inverse.
  bool orthogonal_s3() const { return orthogonal_s3_; }

  /// Full N x N block-diagonal scattering matrix of training block k.
  ComplexMatrix scattering_matrix(int k) const {
    if (k < 0 || k >= blocks())
      throw dimension_error("scattering_matrix: block index out of range");
    const Index nbar = cfg_.nbar;
    ComplexMatrix s = ComplexMatrix::Zero(elements(), elements());
    for (int qq = 0; qq < cfg_.q; ++qq)
      s.block(qq * nbar, qq * nbar, nbar, nbar) = groups_[qq].slice(k);
    return s;
  }

 private:
  TrainingDesign(DesignConfig cfg, std::vector<Tensor3> groups,
                 std::vector<ComplexMatrix> rotations)
      : cfg_(cfg), groups_(std::move(groups)), rotations_(std::move(rotations)) {}

  void assemble_unfoldings() {
    const Index nbar = cfg_.nbar;
    const Index k_total = cfg_.blocks();
    const Index nq = nbar * cfg_.q;
    s1_ = ComplexMatrix::Zero(nq, nbar * k_total * cfg_.q);
    s2_ = ComplexMatrix::Zero(nq, nbar * k_total * cfg_.q);
    s3_ = ComplexMatrix::Zero(k_total, nbar * nbar * cfg_.q);
    for (int qq = 0; qq < cfg_.q; ++qq)
      for (Index k = 0; k < k_total; ++k) {
        const ComplexMatrix slice = groups_[qq].slice(k);
        s1_.block(qq * nbar, (qq * k_total + k) * nbar, nbar, nbar) = slice;
        s2_.block(qq * nbar, (qq * k_total + k) * nbar, nbar, nbar) =
            slice.transpose();
        s3_.block(k, qq * nbar * nbar, 1, nbar * nbar) =
            vec(slice).transpose();
      }
  }

  DesignConfig cfg_;
  std::vector<Tensor3> groups_;
  std::vector<ComplexMatrix> rotations_;
  ComplexMatrix s1_, s2_, s3_;
  bool orthogonal_s3_ = false;
};

/// True iff some group has two frontal slices that are complex-scalar
/// multiples of each other, decided on normalized inner products with a
/// 1e-10 tolerance.
inline bool has_proportional_slices(const TrainingDesign& design) {
  for (int qq = 0; qq < design.groups(); ++qq) {
    const Tensor3& g = design.group(qq);
    for (Index k = 0; k < g.dim3(); ++k)
      for (Index k2 = k + 1; k2 < g.dim3(); ++k2) {
        const ComplexVector a = vec(g.slice(k));
        const ComplexVector b = vec(g.slice(k2));
        if (std::abs(a.dot(b)) >= (1.0 - 1e-10) * a.norm() * b.norm())
          return true;
      }
  }
  return false;
}

namespace detail {

/// Proportionality over the full block-diagonal slices. Relevant for the
/// diagonal (Nbar = 1) case, where every pair of 1x1 group slices is trivially
/// proportional but the stacked diagonal training vectors need not be.
inline bool full_slices_proportional(const TrainingDesign& design) {
  const Index k_total = design.blocks();
  std::vector<ComplexVector> vecs(k_total);
  for (Index k = 0; k < k_total; ++k)
    vecs[k] = vec(design.scattering_matrix(static_cast<int>(k)));
  for (Index k = 0; k < k_total; ++k)
    for (Index k2 = k + 1; k2 < k_total; ++k2)
      if (std::abs(vecs[k].dot(vecs[k2])) >=
          (1.0 - 1e-10) * vecs[k].norm() * vecs[k2].norm())
        return true;
  return false;
}

inline Index numerical_row_rank(const ComplexMatrix& m) {
  Eigen::JacobiSVD<ComplexMatrix> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  const double tol = static_cast<double>(std::max(m.rows(), m.cols())) *
                     std::numeric_limits<double>::epsilon() * sv(0);
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++rank;
  return rank;
}

}  // namespace detail

struct ValidationReport {
  Algorithm algorithm = Algorithm::Ls;
  bool pass = true;
  std::vector<std::string> violations;

  std::string summary() const {
    if (pass) return to_string(algorithm) + ": pass";
    std::string s = to_string(algorithm) + ": fail";
    for (const auto& v : violations) s += "; " + v;
    return s;
  }
};

/// Configuration rejected by the identifiability validator.
class config_error : public std::runtime_error {
 public:
  explicit config_error(ValidationReport rep)
      : std::runtime_error(rep.summary()), report(std::move(rep)) {}
  ValidationReport report;
};

/// Checks the identifiability requirements of an estimator against a concrete
/// training design. Failures are reported, not thrown.
inline ValidationReport validate_identifiability(const TrainingDesign& design,
                                                 int m_t, int m_r,
                                                 Algorithm algorithm) {
  const DesignConfig& cfg = design.config();
  ValidationReport rep;
  rep.algorithm = algorithm;
  const int k = cfg.blocks();
  const int n = cfg.elements();
  const int needed = cfg.nbar * cfg.nbar * cfg.q;
  if (algorithm == Algorithm::Ls || algorithm == Algorithm::Btkf) {
    if (k < needed)
      rep.violations.push_back("K >= Nbar^2*Q violated (K=" +
                               std::to_string(k) + ", Nbar^2*Q=" +
                               std::to_string(needed) + ")");
  } else {
    if (k * m_t < n)
      rep.violations.push_back("K*M_T >= N violated (K*M_T=" +
                               std::to_string(k * m_t) + ", N=" +
                               std::to_string(n) + ")");
    if (k * m_r < n)
      rep.violations.push_back("K*M_R >= N violated (K*M_R=" +
                               std::to_string(k * m_r) + ", N=" +
                               std::to_string(n) + ")");
    if (k < 3) rep.violations.push_back("K >= 3 violated (K=" +
                                        std::to_string(k) + ")");
    const bool proportional = cfg.nbar == 1
                                  ? detail::full_slices_proportional(design)
                                  : has_proportional_slices(design);
    if (proportional)
      rep.violations.push_back(
          "training tensor has proportional frontal slices");
    if (detail::numerical_row_rank(design.s1()) < n)
      rep.violations.push_back("S1 is row-rank deficient");
    if (detail::numerical_row_rank(design.s2()) < n)
      rep.violations.push_back("S2 is row-rank deficient");
  }
  rep.pass = rep.violations.empty();
  return rep;
}

/// Configuration-level variant: builds the design the configuration describes
/// and validates that.
inline ValidationReport validate_identifiability(const DesignConfig& cfg,
                                                 int m_t, int m_r,
                                                 Algorithm algorithm) {
  if (algorithm == Algorithm::Ls || algorithm == Algorithm::Btkf) {
    // The filter-based conditions are arithmetic; no design is needed.
    ValidationReport rep;
    rep.algorithm = algorithm;
    const int k = cfg.blocks();
    const int needed = cfg.nbar * cfg.nbar * cfg.q;
    if (k < needed)
      rep.violations.push_back("K >= Nbar^2*Q violated (K=" +
                               std::to_string(k) + ", Nbar^2*Q=" +
                               std::to_string(needed) + ")");
    rep.pass = rep.violations.empty();
    return rep;
  }
  return validate_identifiability(TrainingDesign::build(cfg), m_t, m_r,
                                  algorithm);
}

/// Writes a design as a small key = value text file. Slices are regenerated
/// on import from the configuration and seed, never serialized raw.
inline void save_design(const DesignConfig& cfg, std::ostream& os) {
  os << "# training design\n";
  os << "nbar = " << cfg.nbar << "\n";
  os << "q = " << cfg.q << "\n";
  os << "k1 = " << cfg.k1 << "\n";
  os << "k2 = " << cfg.k2 << "\n";
  os << "theta = " << (cfg.theta == ThetaKind::Dft ? "dft" : "hadamard")
     << "\n";
  os << "rotated = " << (cfg.rotated ? "true" : "false") << "\n";
  if (cfg.rotated) os << "seed = " << cfg.seed << "\n";
}

inline DesignConfig load_design(std::istream& is) {
  DesignConfig cfg;
  bool have_nbar = false, have_q = false, have_k1 = false, have_k2 = false;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key, eq, value;
    if (!(ls >> key)) continue;
    if (!(ls >> eq >> value) || eq != "=")
      throw std::invalid_argument("design file line " + std::to_string(lineno) +
                                  ": expected 'key = value'");
    if (key == "nbar") { cfg.nbar = std::stoi(value); have_nbar = true; }
    else if (key == "q") { cfg.q = std::stoi(value); have_q = true; }
    else if (key == "k1") { cfg.k1 = std::stoi(value); have_k1 = true; }
    else if (key == "k2") { cfg.k2 = std::stoi(value); have_k2 = true; }
    else if (key == "theta") {
      if (value == "dft") cfg.theta = ThetaKind::Dft;
      else if (value == "hadamard") cfg.theta = ThetaKind::Hadamard;
      else throw std::invalid_argument("design file: unknown theta kind '" +
                                       value + "'");
    } else if (key == "rotated") {
      if (value == "true") cfg.rotated = true;
      else if (value == "false") cfg.rotated = false;
      else throw std::invalid_argument("design file: rotated must be "
                                       "true or false");
    } else if (key == "seed") {
      cfg.seed = std::stoull(value);
    } else {
      throw std::invalid_argument("design file: unknown key '" + key + "'");
    }
  }
  if (!have_nbar || !have_q || !have_k1 || !have_k2)
    throw std::invalid_argument("design file: nbar, q, k1 and k2 are required");
  cfg.validate();
  return cfg;
}

}  // namespace bdce
