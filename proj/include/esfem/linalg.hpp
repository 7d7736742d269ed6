#pragma once

// Sparse linear algebra used by the assembly and time stepping layers:
// CSR matrices (viewable as Eigen sparse maps), a deterministic sparse
// matrix-vector product, Jacobi-preconditioned conjugate gradients and the
// dual norm ||w||_* = sqrt(w'(S+M)^{-1} w) with w = M r.

#include <stdexcept>
#include <vector>

#include <Eigen/SparseCore>

#include "esfem/types.hpp"

namespace esfem::linalg {

struct Triplet {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

class SparseMatrixCSR {
public:
  SparseMatrixCSR() = default;
  SparseMatrixCSR(int nrows, int ncols); // all-zero matrix

  // Stable-sorts by (row, col) and sums duplicates in insertion order, so
  // the stored values are independent of how callers schedule their work.
  static SparseMatrixCSR from_triplets(int nrows, int ncols,
                                       std::vector<Triplet> triplets);
  static SparseMatrixCSR identity(int n);

  int rows() const { return nrows_; }
  int cols() const { return ncols_; }
  const std::vector<int>& row_offsets() const { return row_offsets_; }
  const std::vector<int>& col_indices() const { return col_indices_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  double coeff(int row, int col) const; // 0 if not stored

  using EigenMap = Eigen::Map<const Eigen::SparseMatrix<double, Eigen::RowMajor, int>>;
  EigenMap eigen_map() const;

private:
  int nrows_ = 0;
  int ncols_ = 0;
  std::vector<int> row_offsets_ = {0};
  std::vector<int> col_indices_;
  std::vector<double> values_;
};

// y = A x; fixed summation order within each row.
VecX spmv(const SparseMatrixCSR& a, const VecX& x);

// alpha*A + beta*B with the union sparsity pattern.
SparseMatrixCSR scale_add(double alpha, const SparseMatrixCSR& a, double beta,
                          const SparseMatrixCSR& b);

inline SparseMatrixCSR add(const SparseMatrixCSR& a, const SparseMatrixCSR& b) {
  return scale_add(1.0, a, 1.0, b);
}

bool is_symmetric(const SparseMatrixCSR& a, double tol = 1e-12);

struct CgFailure : std::runtime_error {
  CgFailure(const std::string& what, double residual, int iters)
      : std::runtime_error(what), relative_residual(residual),
        iterations(iters) {}
  double relative_residual;
  int iterations;
};

struct CgResult {
  VecX x;
  int iterations = 0;
  double relative_residual = 0.0;
};

// Jacobi-preconditioned conjugate gradients for SPD systems; converged when
// ||Ax-b|| <= tol ||b|| (verified against the true residual).  Throws
// CgFailure on non-convergence and on zero diagonal entries.
// max_iter < 0 selects 10n + 200.
CgResult cg_solve(const SparseMatrixCSR& a, const VecX& b, double tol = 1e-12,
                  int max_iter = -1);

// sqrt(w'(S+M)^{-1} w) for w = M r, inner solve by cg_solve at `tol`.
double dual_norm(const SparseMatrixCSR& mass, const SparseMatrixCSR& stiffness,
                 const VecX& r, double tol = 1e-12);

} // namespace esfem::linalg
