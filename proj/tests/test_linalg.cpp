#include <catch2/catch.hpp>

#include "bdce/linalg.hpp"
#include "bdce/rng.hpp"

using namespace bdce;

namespace {

ComplexMatrix random_matrix(Index rows, Index cols, RandomStream& rng) {
  ComplexMatrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.complex_normal();
  return m;
}

// Independent dominant-triple oracle: power iteration on M^H M for the right
// singular vector, then sigma and u from it. Only the reconstruction
// sigma*u*v^H is compared, so the free phase does not matter.
ComplexMatrix power_iteration_rank_one(const ComplexMatrix& m) {
  ComplexVector v = ComplexVector::Ones(m.cols());
  v /= v.norm();
  for (int it = 0; it < 2000; ++it) {
    ComplexVector w = m.adjoint() * (m * v);
    v = w / w.norm();
  }
  ComplexVector mv = m * v;
  const double sigma = mv.norm();
  ComplexVector u = mv / sigma;
  return sigma * u * v.adjoint();
}

}  // namespace

TEST_CASE("vec stacks columns") {
  ComplexMatrix m(2, 2);
  m << 1.0, 3.0, 2.0, 4.0;
  ComplexVector v = vec(m);
  REQUIRE(v.size() == 4);
  CHECK(v(0) == Complex(1.0));
  CHECK(v(1) == Complex(2.0));
  CHECK(v(2) == Complex(3.0));
  CHECK(v(3) == Complex(4.0));

  ComplexMatrix scalar(1, 1);
  scalar(0, 0) = Complex(2.5, -1.0);
  CHECK(vec(scalar)(0) == Complex(2.5, -1.0));
}

TEST_CASE("unvec inverts vec") {
  ComplexVector v(4);
  v << 1.0, 2.0, 3.0, 4.0;
  ComplexMatrix m = unvec(v, 2, 2);
  CHECK(m(0, 0) == Complex(1.0));
  CHECK(m(1, 0) == Complex(2.0));
  CHECK(m(0, 1) == Complex(3.0));
  CHECK(m(1, 1) == Complex(4.0));

  // Column-vector reshape is the identity.
  CHECK(unvec(v, 4, 1).col(0) == v);

  ComplexVector bad(3);
  bad << 1.0, 2.0, 3.0;
  CHECK_THROWS_AS(unvec(bad, 2, 2), dimension_error);

  RandomStream rng(11);
  ComplexMatrix r = random_matrix(3, 2, rng);
  CHECK(unvec(vec(r), 3, 2) == r);
}

TEST_CASE("kron basics") {
  RandomStream rng(17);
  ComplexMatrix a = random_matrix(3, 2, rng);
  CHECK(kron(a, ComplexMatrix::Identity(1, 1)) == a);

  ComplexMatrix col1(2, 1), col2(2, 1);
  col1 << 1.0, 2.0;
  col2 << 1.0, 0.0;
  ComplexMatrix k = kron(col1, col2);
  REQUIRE(k.rows() == 4);
  CHECK(k(0, 0) == Complex(1.0));
  CHECK(k(1, 0) == Complex(0.0));
  CHECK(k(2, 0) == Complex(2.0));
  CHECK(k(3, 0) == Complex(0.0));
}

TEST_CASE("vec of a triple product factors through kron") {
  RandomStream rng(23);
  for (int rep = 0; rep < 20; ++rep) {
    ComplexMatrix a = random_matrix(2, 2, rng);
    ComplexMatrix b = random_matrix(2, 2, rng);
    ComplexMatrix c = random_matrix(2, 2, rng);
    ComplexVector lhs = vec(ComplexMatrix(a * b * c));
    ComplexVector rhs = kron(c.transpose(), a) * vec(b);
    CHECK((lhs - rhs).norm() <= 1e-12 * rhs.norm());
  }
  // Non-square shapes as well.
  ComplexMatrix a = random_matrix(3, 2, rng);
  ComplexMatrix b = random_matrix(2, 4, rng);
  ComplexMatrix c = random_matrix(4, 5, rng);
  ComplexVector lhs = vec(ComplexMatrix(a * b * c));
  ComplexVector rhs = kron(c.transpose(), a) * vec(b);
  CHECK((lhs - rhs).norm() <= 1e-12 * rhs.norm());
}

TEST_CASE("block_kron") {
  RandomStream rng(31);

  SECTION("single block equals kron") {
    ComplexMatrix h = random_matrix(2, 3, rng);
    ComplexMatrix g = random_matrix(2, 3, rng);
    CHECK(block_kron(h, g, 1) == kron(h, g));
  }

  SECTION("unit-width blocks give the Khatri-Rao product") {
    ComplexMatrix h = random_matrix(2, 3, rng);
    ComplexMatrix g = random_matrix(2, 3, rng);
    ComplexMatrix w = block_kron(h, g, 3);
    REQUIRE(w.cols() == 3);
    for (Index q = 0; q < 3; ++q) {
      ComplexMatrix expected = kron(h.col(q), g.col(q));
      CHECK((w.col(q) - expected.col(0)).norm() == 0.0);
    }
  }

  SECTION("per-block oracle") {
    const Index m_t = 2, m_r = 2, nbar = 2, q = 2;
    ComplexMatrix h = random_matrix(m_t, nbar * q, rng);
    ComplexMatrix g = random_matrix(m_r, nbar * q, rng);
    ComplexMatrix w = block_kron(h, g, q);
    REQUIRE(w.rows() == m_t * m_r);
    REQUIRE(w.cols() == nbar * nbar * q);
    for (Index qq = 0; qq < q; ++qq) {
      ComplexMatrix expected = kron(h.middleCols(qq * nbar, nbar),
                                    g.middleCols(qq * nbar, nbar));
      CHECK((w.middleCols(qq * nbar * nbar, nbar * nbar) - expected).norm() ==
            0.0);
    }
  }

  SECTION("indivisible column counts") {
    ComplexMatrix h = random_matrix(2, 3, rng);
    ComplexMatrix g = random_matrix(2, 3, rng);
    CHECK_THROWS_AS(block_kron(h, g, 2), dimension_error);
  }
}

TEST_CASE("unfolding_permutation") {
  SECTION("trivial case is the identity") {
    CHECK(unfolding_permutation(3, 1, 1) == ComplexMatrix::Identity(3, 3));
  }

  SECTION("two groups, two blocks exchanges the middle coordinates") {
    ComplexMatrix p = unfolding_permutation(1, 2, 2);
    ComplexMatrix expected(4, 4);
    expected << 1, 0, 0, 0,
                0, 0, 1, 0,
                0, 1, 0, 0,
                0, 0, 0, 1;
    CHECK(p == expected);
  }

  SECTION("is a 0/1 permutation matrix") {
    ComplexMatrix p = unfolding_permutation(3, 2, 4);
    const Index n = 24;
    REQUIRE(p.rows() == n);
    REQUIRE(p.cols() == n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        const double a = std::abs(p(i, j));
        CHECK((a == 0.0 || a == 1.0));
      }
    CHECK((p * p.adjoint() - ComplexMatrix::Identity(n, n)).norm() == 0.0);
    CHECK((p.adjoint() * p - ComplexMatrix::Identity(n, n)).norm() == 0.0);
  }
}

TEST_CASE("pinv") {
  SECTION("identity") {
    ComplexMatrix i5 = ComplexMatrix::Identity(5, 5);
    CHECK((pinv(i5) - i5).norm() <= 1e-14);
  }

  SECTION("column-orthogonal matrix") {
    // M with M^H M = c I has pinv (1/c) M^H.
    RandomStream rng(41);
    ComplexMatrix a = random_matrix(5, 3, rng);
    Eigen::HouseholderQR<ComplexMatrix> qr(a);
    ComplexMatrix qfull = qr.householderQ();
    ComplexMatrix m = 2.0 * qfull.leftCols(3);  // M^H M = 4 I
    CHECK((pinv(m) - 0.25 * m.adjoint()).norm() <= 1e-12);
  }

  SECTION("Penrose identities, rank-deficient and full rank") {
    RandomStream rng(43);
    ComplexMatrix deficient =
        random_matrix(4, 2, rng) * random_matrix(2, 3, rng);
    ComplexMatrix full = random_matrix(3, 4, rng);
    for (const ComplexMatrix& m : {deficient, full}) {
      ComplexMatrix p = pinv(m);
      const double scale = m.norm();
      CHECK((m * p * m - m).norm() <= 1e-10 * scale);
      CHECK((p * m * p - p).norm() <= 1e-10 * p.norm());
      CHECK(((m * p).adjoint() - m * p).norm() <= 1e-10);
      CHECK(((p * m).adjoint() - p * m).norm() <= 1e-10);
    }
  }

  SECTION("zero matrix maps to zero") {
    ComplexMatrix z = ComplexMatrix::Zero(3, 2);
    CHECK(pinv(z).norm() == 0.0);
  }
}

TEST_CASE("rank_one_approx") {
  RandomStream rng(47);

  SECTION("exact rank-one input") {
    ComplexVector g(3), h(2);
    g << Complex(1, 1), Complex(0, -2), Complex(0.5, 0);
    h << Complex(2, 0), Complex(-1, 1);
    ComplexMatrix m = g * h.transpose();
    auto r = rank_one_approx(m);
    CHECK(r.sigma == Approx(g.norm() * h.norm()).epsilon(1e-12));
    // u parallel to g, v parallel to conj(h).
    CHECK(std::abs(r.u.dot(g)) == Approx(g.norm()).epsilon(1e-12));
    CHECK(std::abs(r.v.dot(h.conjugate())) == Approx(h.norm()).epsilon(1e-12));
    CHECK((m - r.sigma * r.u * r.v.adjoint()).norm() <= 1e-12 * m.norm());
  }

  SECTION("degenerate spectrum: only sigma and the residual are pinned") {
    ComplexMatrix i2 = ComplexMatrix::Identity(2, 2);
    auto r = rank_one_approx(i2);
    CHECK(r.sigma == Approx(1.0).epsilon(1e-12));
    CHECK((i2 - r.sigma * r.u * r.v.adjoint()).norm() ==
          Approx(1.0).epsilon(1e-10));
  }

  SECTION("matches an independent power-iteration oracle") {
    for (int rep = 0; rep < 10; ++rep) {
      ComplexMatrix m = random_matrix(3, 3, rng);
      auto r = rank_one_approx(m);
      ComplexMatrix oracle = power_iteration_rank_one(m);
      CHECK((r.sigma * r.u * r.v.adjoint() - oracle).norm() <=
            1e-10 * m.norm());
    }
  }

  SECTION("phase convention: first nonzero entry of u is real nonnegative") {
    for (int rep = 0; rep < 10; ++rep) {
      ComplexMatrix m = random_matrix(4, 3, rng);
      auto r = rank_one_approx(m);
      CHECK(r.u(0).imag() == Approx(0.0).margin(1e-12));
      CHECK(r.u(0).real() >= 0.0);
    }
  }

  SECTION("residual equals the tail singular energy") {
    for (int rep = 0; rep < 10; ++rep) {
      ComplexMatrix m = random_matrix(4, 6, rng);
      auto r = rank_one_approx(m);
      Eigen::JacobiSVD<ComplexMatrix> svd(m);
      double tail = 0.0;
      for (Index i = 1; i < svd.singularValues().size(); ++i)
        tail += svd.singularValues()(i) * svd.singularValues()(i);
      const double resid = (m - r.sigma * r.u * r.v.adjoint()).squaredNorm();
      CHECK(resid == Approx(tail).margin(1e-10 * m.squaredNorm()));
    }
  }

  SECTION("zero matrix is rejected") {
    CHECK_THROWS_AS(rank_one_approx(ComplexMatrix::Zero(2, 2)),
                    degenerate_input_error);
  }
}

TEST_CASE("kron_rearrange") {
  RandomStream rng(53);

  SECTION("exact Kronecker products become exact rank-one matrices") {
    for (int rep = 0; rep < 10; ++rep) {
      ComplexMatrix h = random_matrix(2, 2, rng);
      ComplexMatrix g = random_matrix(2, 2, rng);
      ComplexMatrix rearranged = kron_rearrange(kron(h, g), 2, 2, 2);
      ComplexMatrix expected = vec(g) * vec(h).transpose();
      CHECK((rearranged - expected).norm() <= 1e-12 * expected.norm());
      Eigen::JacobiSVD<ComplexMatrix> svd(rearranged);
      CHECK(svd.singularValues()(1) <= 1e-12 * svd.singularValues()(0));
    }
  }

  SECTION("scalar case is the identity map") {
    ComplexMatrix m(1, 1);
    m(0, 0) = Complex(3, -4);
    CHECK(kron_rearrange(m, 1, 1, 1) == m);
  }

  SECTION("brute-force index-loop round trip") {
    const Index m_r = 2, m_t = 3, nbar = 2;
    ComplexMatrix h = random_matrix(m_t, nbar, rng);
    ComplexMatrix g = random_matrix(m_r, nbar, rng);
    ComplexMatrix rearranged = vec(g) * vec(h).transpose();
    // Invert the index map entry by entry and compare with kron(h, g).
    ComplexMatrix rebuilt(m_r * m_t, nbar * nbar);
    for (Index n1 = 0; n1 < nbar; ++n1)
      for (Index n2 = 0; n2 < nbar; ++n2)
        for (Index mt = 0; mt < m_t; ++mt)
          for (Index mr = 0; mr < m_r; ++mr)
            rebuilt(mr + mt * m_r, n2 + n1 * nbar) =
                rearranged(mr + n2 * m_r, mt + n1 * m_t);
    CHECK((rebuilt - kron(h, g)).norm() == 0.0);
  }

  SECTION("shape mismatch") {
    CHECK_THROWS_AS(kron_rearrange(ComplexMatrix::Ones(4, 3), 2, 2, 2),
                    dimension_error);
  }
}
