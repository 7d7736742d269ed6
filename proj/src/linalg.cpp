#include "esfem/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace esfem::linalg {

SparseMatrixCSR::SparseMatrixCSR(int nrows, int ncols)
    : nrows_(nrows), ncols_(ncols), row_offsets_(nrows + 1, 0) {
  if (nrows < 0 || ncols < 0)
    throw std::invalid_argument("SparseMatrixCSR: negative dimension");
}

SparseMatrixCSR SparseMatrixCSR::from_triplets(int nrows, int ncols,
                                               std::vector<Triplet> triplets) {
  SparseMatrixCSR m(nrows, ncols);
  for (const auto& t : triplets)
    if (t.row < 0 || t.row >= nrows || t.col < 0 || t.col >= ncols)
      throw std::invalid_argument("from_triplets: index out of range");
  std::stable_sort(triplets.begin(), triplets.end(),
                   [](const Triplet& a, const Triplet& b) {
                     return a.row != b.row ? a.row < b.row : a.col < b.col;
                   });
  m.col_indices_.reserve(triplets.size());
  m.values_.reserve(triplets.size());
  for (std::size_t i = 0; i < triplets.size();) {
    const int r = triplets[i].row, c = triplets[i].col;
    double sum = 0.0;
    for (; i < triplets.size() && triplets[i].row == r && triplets[i].col == c;
         ++i)
      sum += triplets[i].value;
    m.col_indices_.push_back(c);
    m.values_.push_back(sum);
    ++m.row_offsets_[r + 1];
  }
  for (int r = 0; r < nrows; ++r) m.row_offsets_[r + 1] += m.row_offsets_[r];
  return m;
}

SparseMatrixCSR SparseMatrixCSR::identity(int n) {
  SparseMatrixCSR m(n, n);
  m.col_indices_.resize(n);
  m.values_.assign(n, 1.0);
  for (int i = 0; i < n; ++i) {
    m.col_indices_[i] = i;
    m.row_offsets_[i + 1] = i + 1;
  }
  return m;
}

double SparseMatrixCSR::coeff(int row, int col) const {
  if (row < 0 || row >= nrows_ || col < 0 || col >= ncols_)
    throw std::out_of_range("SparseMatrixCSR::coeff: index out of range");
  const auto begin = col_indices_.begin() + row_offsets_[row];
  const auto end = col_indices_.begin() + row_offsets_[row + 1];
  const auto it = std::lower_bound(begin, end, col);
  if (it == end || *it != col) return 0.0;
  return values_[static_cast<std::size_t>(it - col_indices_.begin())];
}

SparseMatrixCSR::EigenMap SparseMatrixCSR::eigen_map() const {
  return EigenMap(nrows_, ncols_, static_cast<int>(values_.size()),
                  row_offsets_.data(), col_indices_.data(), values_.data());
}

VecX spmv(const SparseMatrixCSR& a, const VecX& x) {
  if (x.size() != a.cols())
    throw std::invalid_argument("spmv: dimension mismatch");
  VecX y = VecX::Zero(a.rows());
  const auto& offsets = a.row_offsets();
  const auto& cols = a.col_indices();
  const auto& vals = a.values();
  for (int r = 0; r < a.rows(); ++r) {
    double sum = 0.0;
    for (int p = offsets[r]; p < offsets[r + 1]; ++p)
      sum += vals[p] * x[cols[p]];
    y[r] = sum;
  }
  return y;
}

SparseMatrixCSR scale_add(double alpha, const SparseMatrixCSR& a, double beta,
                          const SparseMatrixCSR& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("scale_add: dimension mismatch");
  std::vector<Triplet> ts;
  ts.reserve(a.values().size() + b.values().size());
  for (int r = 0; r < a.rows(); ++r) {
    int pa = a.row_offsets()[r], ea = a.row_offsets()[r + 1];
    int pb = b.row_offsets()[r], eb = b.row_offsets()[r + 1];
    while (pa < ea || pb < eb) {
      const int ca = pa < ea ? a.col_indices()[pa] : a.cols();
      const int cb = pb < eb ? b.col_indices()[pb] : b.cols();
      if (ca < cb) {
        ts.push_back({r, ca, alpha * a.values()[pa++]});
      } else if (cb < ca) {
        ts.push_back({r, cb, beta * b.values()[pb++]});
      } else {
        ts.push_back({r, ca, alpha * a.values()[pa++] + beta * b.values()[pb++]});
      }
    }
  }
  return SparseMatrixCSR::from_triplets(a.rows(), a.cols(), std::move(ts));
}

bool is_symmetric(const SparseMatrixCSR& a, double tol) {
  if (a.rows() != a.cols()) return false;
  for (int r = 0; r < a.rows(); ++r)
    for (int p = a.row_offsets()[r]; p < a.row_offsets()[r + 1]; ++p) {
      const int c = a.col_indices()[p];
      if (std::abs(a.values()[p] - a.coeff(c, r)) > tol) return false;
    }
  return true;
}

CgResult cg_solve(const SparseMatrixCSR& a, const VecX& b, double tol,
                  int max_iter) {
  const int n = a.rows();
  if (a.cols() != n) throw std::invalid_argument("cg_solve: matrix not square");
  if (b.size() != n) throw std::invalid_argument("cg_solve: dimension mismatch");
  if (!b.allFinite())
    throw std::invalid_argument("cg_solve: right-hand side not finite");
  if (max_iter < 0) max_iter = 10 * n + 200;

  VecX diag(n);
  for (int r = 0; r < n; ++r) {
    const double d = a.coeff(r, r);
    if (d == 0.0)
      throw CgFailure("cg_solve: zero diagonal entry (Jacobi preconditioner)",
                      1.0, 0);
    diag[r] = d;
  }

  const double bnorm = b.norm();
  CgResult result;
  result.x = VecX::Zero(n);
  if (bnorm == 0.0) return result;

  VecX r = b;
  VecX z = r.cwiseQuotient(diag);
  VecX p = z;
  double rz = r.dot(z);
  double rel = r.norm() / bnorm;

  for (int it = 1; it <= max_iter; ++it) {
    const VecX ap = spmv(a, p);
    const double pap = p.dot(ap);
    if (!(pap > 0.0))
      throw CgFailure("cg_solve: matrix is not positive definite", rel, it);
    const double alpha = rz / pap;
    result.x += alpha * p;
    r -= alpha * ap;
    rel = r.norm() / bnorm;
    result.iterations = it;
    if (rel <= tol) {
      // Guard against drift of the recursive residual.
      const VecX true_r = b - spmv(a, result.x);
      const double true_rel = true_r.norm() / bnorm;
      if (true_rel <= tol) {
        result.relative_residual = true_rel;
        return result;
      }
      r = true_r;
      rel = true_rel;
    }
    z = r.cwiseQuotient(diag);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  throw CgFailure("cg_solve: no convergence within max_iter", rel, max_iter);
}

double dual_norm(const SparseMatrixCSR& mass, const SparseMatrixCSR& stiffness,
                 const VecX& r, double tol) {
  const VecX w = spmv(mass, r);
  if (w.norm() == 0.0) return 0.0;
  const SparseMatrixCSR k = add(stiffness, mass);
  const VecX y = cg_solve(k, w, tol).x;
  const double sq = w.dot(y);
  if (sq < -1e-12 * w.squaredNorm())
    throw std::runtime_error("dual_norm: negative quadratic form");
  return std::sqrt(std::max(sq, 0.0));
}

} // namespace esfem::linalg
