#include "esfem/assembly.hpp"

#include <algorithm>
#include <cmath>

namespace esfem::assembly {

const QuadratureRule& midpoint_rule() {
  static const QuadratureRule rule{
      {{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}},
      {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0},
      2};
  return rule;
}

const QuadratureRule& degree4_rule() {
  // Two symmetric orbits (Dunavant degree 4).
  const double a1 = 0.81684757298045851;
  const double b1 = 0.091576213509770743;
  const double w1 = 0.10995174365532187;
  const double a2 = 0.10810301816807022;
  const double b2 = 0.44594849091596489;
  const double w2 = 0.22338158967801147;
  static const QuadratureRule rule{{{a1, b1, b1},
                                    {b1, a1, b1},
                                    {b1, b1, a1},
                                    {a2, b2, b2},
                                    {b2, a2, b2},
                                    {b2, b2, a2}},
                                   {w1, w1, w1, w2, w2, w2},
                                   4};
  return rule;
}

P1Element p1_element(const Vec3& p0, const Vec3& p1, const Vec3& p2) {
  P1Element g;
  const Vec3 cross = (p1 - p0).cross(p2 - p0);
  const double doubled = cross.norm();
  if (!(doubled > 0.0))
    throw std::runtime_error("assembly: degenerate triangle");
  g.area = 0.5 * doubled;
  const Vec3 n = cross / doubled;
  g.gradients[0] = n.cross(p2 - p1) / doubled;
  g.gradients[1] = n.cross(p0 - p2) / doubled;
  g.gradients[2] = n.cross(p1 - p0) / doubled;
  return g;
}

namespace {

// Exact integral of chi_i chi_j over a flat triangle is |E|/12 (2 - d_ij ... )
// i.e. |E|/12 * [[2,1,1],[1,2,1],[1,1,2]].
void add_mass_block(double area, double factor, double block[3][3]) {
  const double off = factor * area / 12.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) block[i][j] += (i == j ? 2.0 : 1.0) * off;
}

} // namespace

OperatorAssembler::OperatorAssembler(std::vector<std::array<int, 3>> triangles,
                                     int vertex_count)
    : triangles_(std::move(triangles)), vertex_count_(vertex_count) {
  for (const auto& t : triangles_)
    for (int v : t)
      if (v < 0 || v >= vertex_count_)
        throw std::invalid_argument("OperatorAssembler: vertex index out of range");
  std::vector<linalg::Triplet> ts;
  ts.reserve(9 * triangles_.size());
  for (const auto& t : triangles_)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) ts.push_back({t[i], t[j], 0.0});
  pattern_ = SparseMatrixCSR::from_triplets(vertex_count_, vertex_count_,
                                            std::move(ts));
  scatter_.resize(triangles_.size());
  const auto& offsets = pattern_.row_offsets();
  const auto& cols = pattern_.col_indices();
  for (std::size_t e = 0; e < triangles_.size(); ++e) {
    const auto& t = triangles_[e];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const auto begin = cols.begin() + offsets[t[i]];
        const auto end = cols.begin() + offsets[t[i] + 1];
        const auto it = std::lower_bound(begin, end, t[j]);
        scatter_[e][3 * i + j] = static_cast<int>(it - cols.begin());
      }
  }
}

template <typename ElementKernel>
SparseMatrixCSR OperatorAssembler::assemble(const std::vector<Vec3>& positions,
                                            ElementKernel&& kernel) const {
  if (static_cast<int>(positions.size()) != vertex_count_)
    throw std::invalid_argument("OperatorAssembler: position count mismatch");
  SparseMatrixCSR out = pattern_;
  auto& vals = out.values();
  std::fill(vals.begin(), vals.end(), 0.0);
  double block[3][3];
  for (std::size_t e = 0; e < triangles_.size(); ++e) {
    const auto& t = triangles_[e];
    for (auto& row : block) row[0] = row[1] = row[2] = 0.0;
    kernel(e, positions[t[0]], positions[t[1]], positions[t[2]], block);
    const auto& idx = scatter_[e];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) vals[idx[3 * i + j]] += block[i][j];
  }
  return out;
}

SparseMatrixCSR OperatorAssembler::mass(const std::vector<Vec3>& positions) const {
  return assemble(positions, [](std::size_t, const Vec3& p0, const Vec3& p1,
                                const Vec3& p2, double block[3][3]) {
    const double area = mesh::triangle_area(p0, p1, p2);
    if (!(area > 0.0)) throw std::runtime_error("assembly: degenerate triangle");
    add_mass_block(area, 1.0, block);
  });
}

SparseMatrixCSR OperatorAssembler::stiffness_linear(
    const std::vector<Vec3>& positions) const {
  return assemble(positions, [](std::size_t, const Vec3& p0, const Vec3& p1,
                                const Vec3& p2, double block[3][3]) {
    const P1Element g = p1_element(p0, p1, p2);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        block[i][j] += g.area * g.gradients[i].dot(g.gradients[j]);
  });
}

SparseMatrixCSR OperatorAssembler::stiffness_nonlinear(
    const std::vector<Vec3>& positions, const VecX& alpha,
    const geometry::Nonlinearity& nl, const QuadratureRule& rule) const {
  if (alpha.size() != vertex_count_)
    throw std::invalid_argument("stiffness_nonlinear: alpha length mismatch");
  return assemble(positions, [&](std::size_t e, const Vec3& p0, const Vec3& p1,
                                 const Vec3& p2, double block[3][3]) {
    const P1Element g = p1_element(p0, p1, p2);
    const auto& t = triangles_[e];
    // A(U_h) evaluated at quadrature points of the P1 interpolant.
    double coeff = 0.0;
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const auto& bc = rule.points[q];
      const double u =
          bc[0] * alpha[t[0]] + bc[1] * alpha[t[1]] + bc[2] * alpha[t[2]];
      coeff += rule.weights[q] * nl.value(u);
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        block[i][j] += coeff * g.area * g.gradients[i].dot(g.gradients[j]);
  });
}

SparseMatrixCSR OperatorAssembler::newton_correction(
    const std::vector<Vec3>& positions, const VecX& alpha,
    const geometry::Nonlinearity& nl, const QuadratureRule& rule) const {
  if (alpha.size() != vertex_count_)
    throw std::invalid_argument("newton_correction: alpha length mismatch");
  return assemble(positions, [&](std::size_t e, const Vec3& p0, const Vec3& p1,
                                 const Vec3& p2, double block[3][3]) {
    const P1Element g = p1_element(p0, p1, p2);
    const auto& t = triangles_[e];
    const Vec3 grad_u = alpha[t[0]] * g.gradients[0] + alpha[t[1]] * g.gradients[1] +
                        alpha[t[2]] * g.gradients[2];
    // N_kj = int A'(U_h) chi_j (grad U_h . grad chi_k); rows k test, cols j.
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const auto& bc = rule.points[q];
      const double u =
          bc[0] * alpha[t[0]] + bc[1] * alpha[t[1]] + bc[2] * alpha[t[2]];
      const double w = rule.weights[q] * g.area * nl.derivative(u);
      for (int k = 0; k < 3; ++k) {
        const double dir = grad_u.dot(g.gradients[k]);
        for (int j = 0; j < 3; ++j) block[k][j] += w * bc[j] * dir;
      }
    }
  });
}

SparseMatrixCSR OperatorAssembler::gform(
    const std::vector<Vec3>& positions,
    const std::vector<Vec3>& nodal_velocity) const {
  if (static_cast<int>(nodal_velocity.size()) != vertex_count_)
    throw std::invalid_argument("gform: velocity length mismatch");
  return assemble(positions, [&](std::size_t e, const Vec3& p0, const Vec3& p1,
                                 const Vec3& p2, double block[3][3]) {
    const P1Element g = p1_element(p0, p1, p2);
    const auto& t = triangles_[e];
    // Element-wise constant divergence of the P1-interpolated velocity.
    const double div = nodal_velocity[t[0]].dot(g.gradients[0]) +
                       nodal_velocity[t[1]].dot(g.gradients[1]) +
                       nodal_velocity[t[2]].dot(g.gradients[2]);
    add_mass_block(g.area, div, block);
  });
}

VecX OperatorAssembler::load(const std::vector<Vec3>& positions,
                             const PointFunction& f, double t,
                             const QuadratureRule& rule,
                             const PointMap* lift) const {
  if (static_cast<int>(positions.size()) != vertex_count_)
    throw std::invalid_argument("load: position count mismatch");
  VecX b = VecX::Zero(vertex_count_);
  for (const auto& tri : triangles_) {
    const Vec3& p0 = positions[tri[0]];
    const Vec3& p1 = positions[tri[1]];
    const Vec3& p2 = positions[tri[2]];
    const double area = mesh::triangle_area(p0, p1, p2);
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const auto& bc = rule.points[q];
      Vec3 x = bc[0] * p0 + bc[1] * p1 + bc[2] * p2;
      if (lift) x = (*lift)(x);
      const double fw = rule.weights[q] * area * f(x, t);
      b[tri[0]] += fw * bc[0];
      b[tri[1]] += fw * bc[1];
      b[tri[2]] += fw * bc[2];
    }
  }
  return b;
}

SparseMatrixCSR assemble_mass(const mesh::TriMesh& m) {
  return OperatorAssembler(m).mass(m.vertices);
}

SparseMatrixCSR assemble_stiffness_linear(const mesh::TriMesh& m) {
  return OperatorAssembler(m).stiffness_linear(m.vertices);
}

SparseMatrixCSR assemble_stiffness_nonlinear(const mesh::TriMesh& m,
                                             const VecX& alpha,
                                             const geometry::Nonlinearity& nl,
                                             const QuadratureRule& rule) {
  return OperatorAssembler(m).stiffness_nonlinear(m.vertices, alpha, nl, rule);
}

SparseMatrixCSR assemble_newton_correction(const mesh::TriMesh& m,
                                           const VecX& alpha,
                                           const geometry::Nonlinearity& nl,
                                           const QuadratureRule& rule) {
  return OperatorAssembler(m).newton_correction(m.vertices, alpha, nl, rule);
}

SparseMatrixCSR assemble_gform(const mesh::TriMesh& m,
                               const std::vector<Vec3>& nodal_velocity) {
  return OperatorAssembler(m).gform(m.vertices, nodal_velocity);
}

VecX assemble_load(const mesh::TriMesh& m, const PointFunction& f, double t,
                   const QuadratureRule& rule, const PointMap* lift) {
  return OperatorAssembler(m).load(m.vertices, f, t, rule, lift);
}

FemOperators assemble_operators(const mesh::TriMesh& m, double t) {
  OperatorAssembler assembler(m);
  return FemOperators{assembler.mass(m.vertices),
                      assembler.stiffness_linear(m.vertices), t};
}

namespace {
double quadratic_form_norm(const SparseMatrixCSR& a, const VecX& z,
                           const char* what) {
  const double sq = z.dot(linalg::spmv(a, z));
  if (sq < -1e-12 * std::max(1.0, z.squaredNorm()))
    throw std::runtime_error(std::string(what) + ": negative quadratic form");
  return std::sqrt(std::max(sq, 0.0));
}
} // namespace

double discrete_norm_M(const SparseMatrixCSR& mass, const VecX& z) {
  return quadratic_form_norm(mass, z, "discrete_norm_M");
}

double discrete_norm_A(const SparseMatrixCSR& stiffness, const VecX& z) {
  return quadratic_form_norm(stiffness, z, "discrete_norm_A");
}

VecX nodal_interpolant(const std::vector<Vec3>& positions,
                       const PointFunction& f, double t) {
  VecX v(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) v[i] = f(positions[i], t);
  return v;
}

VecX nodal_interpolant(const mesh::TriMesh& m, const PointFunction& f,
                       double t) {
  return nodal_interpolant(m.vertices, f, t);
}

} // namespace esfem::assembly
