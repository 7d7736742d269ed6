#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "esfem/linalg.hpp"

using namespace esfem;
using namespace esfem::linalg;

namespace {

SparseMatrixCSR dense_to_csr(const MatX& a) {
  std::vector<Triplet> ts;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      if (a(i, j) != 0.0) ts.push_back({i, j, a(i, j)});
  return SparseMatrixCSR::from_triplets(int(a.rows()), int(a.cols()), ts);
}

// Test-only direct solver: Gaussian elimination with partial pivoting,
// independent of the CG path it checks.
VecX gaussian_elimination(MatX a, VecX b) {
  const int n = int(a.rows());
  for (int k = 0; k < n; ++k) {
    int pivot = k;
    for (int i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(pivot, k))) pivot = i;
    a.row(k).swap(a.row(pivot));
    std::swap(b[k], b[pivot]);
    for (int i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      a.row(i).tail(n - k) -= f * a.row(k).tail(n - k);
      b[i] -= f * b[k];
    }
  }
  VecX x(n);
  for (int i = n - 1; i >= 0; --i)
    x[i] = (b[i] - a.row(i).tail(n - 1 - i).dot(x.tail(n - 1 - i))) / a(i, i);
  return x;
}

MatX random_spd(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  MatX b(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) b(i, j) = uni(rng);
  return b.transpose() * b + MatX::Identity(n, n);
}

} // namespace

TEST_CASE("triplet construction sorts, merges and validates") {
  const auto m = SparseMatrixCSR::from_triplets(
      2, 2, {{1, 1, 4.0}, {0, 0, 1.0}, {1, 1, -1.0}, {0, 1, 2.0}});
  CHECK(m.values().size() == 3);
  CHECK(m.coeff(0, 0) == 1.0);
  CHECK(m.coeff(0, 1) == 2.0);
  CHECK(m.coeff(1, 1) == 3.0);
  CHECK(m.coeff(1, 0) == 0.0);
  // column indices strictly increasing within each row
  for (int r = 0; r < m.rows(); ++r)
    for (int p = m.row_offsets()[r] + 1; p < m.row_offsets()[r + 1]; ++p)
      CHECK(m.col_indices()[p - 1] < m.col_indices()[p]);
  CHECK(m.row_offsets().back() == int(m.values().size()));
  CHECK_THROWS_AS(SparseMatrixCSR::from_triplets(1, 1, {{0, 1, 1.0}}),
                  std::invalid_argument);
}

TEST_CASE("spmv") {
  const auto id = SparseMatrixCSR::identity(4);
  VecX x(4);
  x << 1, -2, 3, 0.5;
  CHECK((spmv(id, x) - x).norm() == 0.0);

  const SparseMatrixCSR zero(3, 4);
  VecX y(4);
  y << 1, 1, 1, 1;
  CHECK(spmv(zero, y).norm() == 0.0);

  MatX a(2, 2);
  a << 2, 1, 0, 3;
  VecX ones(2);
  ones << 1, 1;
  const VecX r = spmv(dense_to_csr(a), ones);
  CHECK(r[0] == 3.0);
  CHECK(r[1] == 3.0);

  CHECK_THROWS_AS(spmv(id, y.head(3).eval()), std::invalid_argument);
}

TEST_CASE("spmv linearity") {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const MatX a = random_spd(30, 7);
  const auto m = dense_to_csr(a);
  for (int rep = 0; rep < 20; ++rep) {
    VecX x(30), y(30);
    for (int i = 0; i < 30; ++i) {
      x[i] = uni(rng);
      y[i] = uni(rng);
    }
    const VecX lhs = spmv(m, (x + y).eval());
    const VecX rhs = spmv(m, x) + spmv(m, y);
    CHECK((lhs - rhs).norm() <= 1e-13 * (lhs.norm() + 1.0));
  }
}

TEST_CASE("cg on the identity converges in one iteration") {
  const auto id = SparseMatrixCSR::identity(5);
  VecX b(5);
  b << 3, -1, 0.5, 2, 7;
  const auto res = cg_solve(id, b);
  CHECK(res.iterations == 1);
  CHECK((res.x - b).norm() < 1e-14);
}

TEST_CASE("cg on a diagonal matrix") {
  std::vector<Triplet> ts;
  for (int i = 0; i < 5; ++i) ts.push_back({i, i, double(i + 1)});
  const auto d = SparseMatrixCSR::from_triplets(5, 5, ts);
  const auto res = cg_solve(d, VecX::Ones(5));
  for (int i = 0; i < 5; ++i)
    CHECK(res.x[i] == doctest::Approx(1.0 / (i + 1)).epsilon(1e-14));
}

TEST_CASE("cg on a random SPD system") {
  const MatX a = random_spd(50, 2026);
  const auto m = dense_to_csr(a);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  VecX b(50);
  for (int i = 0; i < 50; ++i) b[i] = uni(rng);
  const auto res = cg_solve(m, b, 1e-12);
  CHECK((spmv(m, res.x) - b).norm() <= 1e-12 * b.norm());
  // deterministic iteration count for fixed inputs
  CHECK(cg_solve(m, b, 1e-12).iterations == res.iterations);
}

TEST_CASE("cg matches Gaussian elimination") {
  for (int n : {20, 80, 200}) {
    const MatX a = random_spd(n, 100 + n);
    VecX b(n);
    std::mt19937 rng(n);
    std::uniform_real_distribution<double> uni(-2.0, 2.0);
    for (int i = 0; i < n; ++i) b[i] = uni(rng);
    const VecX x_cg = cg_solve(dense_to_csr(a), b, 1e-13).x;
    const VecX x_ge = gaussian_elimination(a, b);
    CHECK((x_cg - x_ge).norm() <= 1e-10 * x_ge.norm());
  }
}

TEST_CASE("cg error paths") {
  // zero diagonal -> Jacobi preconditioner fails
  const auto off = SparseMatrixCSR::from_triplets(2, 2, {{0, 1, 1.0}, {1, 0, 1.0}});
  CHECK_THROWS_AS(cg_solve(off, VecX::Ones(2)), CgFailure);

  // indefinite search direction detected
  MatX ind = MatX::Identity(2, 2);
  ind(1, 1) = -2.0;
  VecX e2 = VecX::Zero(2);
  e2[1] = 1.0;
  CHECK_THROWS_AS(cg_solve(dense_to_csr(ind), e2), CgFailure);

  // non-convergence carries the final residual
  const MatX a = random_spd(40, 11);
  try {
    cg_solve(dense_to_csr(a), VecX::Ones(40), 1e-15, 1);
    CHECK(false);
  } catch (const CgFailure& e) {
    CHECK(e.relative_residual > 0.0);
    CHECK(e.iterations == 1);
  }

  CHECK(cg_solve(dense_to_csr(a), VecX::Zero(40)).x.norm() == 0.0);
}

TEST_CASE("scale_add merges patterns") {
  const auto a = SparseMatrixCSR::from_triplets(2, 2, {{0, 0, 1.0}, {1, 1, 2.0}});
  const auto b = SparseMatrixCSR::from_triplets(2, 2, {{0, 1, 3.0}, {1, 1, 1.0}});
  const auto c = scale_add(2.0, a, -1.0, b);
  CHECK(c.coeff(0, 0) == 2.0);
  CHECK(c.coeff(0, 1) == -3.0);
  CHECK(c.coeff(1, 1) == 3.0);
}

TEST_CASE("dual norm") {
  const auto id = SparseMatrixCSR::identity(3);
  const SparseMatrixCSR zero(3, 3);
  CHECK(dual_norm(id, zero, VecX::Zero(3)) == 0.0);

  VecX e1 = VecX::Zero(3);
  e1[0] = 1.0;
  CHECK(dual_norm(id, zero, e1) == doctest::Approx(1.0).epsilon(1e-12));

  const auto two = scale_add(2.0, id, 0.0, id);
  CHECK(dual_norm(two, zero, e1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("symmetry check") {
  const MatX a = random_spd(10, 3);
  CHECK(is_symmetric(dense_to_csr(a)));
  MatX ns = a;
  ns(0, 1) += 1.0;
  CHECK(!is_symmetric(dense_to_csr(ns)));
}
