#pragma once

// P1 finite element assembly on triangulated surfaces: evolving mass matrix,
// linear stiffness, solution-dependent stiffness A(alpha), its Newton
// correction, load vectors, the g-form (velocity-divergence-weighted mass)
// and the discrete norms |z|_M, |z|_A.
//
// All element loops run in a fixed order and contributions are merged in
// index order, so assembled operators are bit-reproducible.

#include <functional>
#include <optional>
#include <vector>

#include "esfem/geometry.hpp"
#include "esfem/linalg.hpp"
#include "esfem/mesh.hpp"
#include "esfem/types.hpp"

namespace esfem::assembly {

using linalg::SparseMatrixCSR;

struct QuadratureRule {
  std::vector<std::array<double, 3>> points; // barycentric coordinates
  std::vector<double> weights;               // sum to 1
  int degree = 0;
};

// 3-point edge-midpoint rule, exact for quadratics.
const QuadratureRule& midpoint_rule();
// 6-point rule, exact for quartics; used for load vectors.
const QuadratureRule& degree4_rule();

// Area and in-plane P1 basis gradients of a flat triangle.
struct P1Element {
  double area = 0.0;
  std::array<Vec3, 3> gradients;
};
P1Element p1_element(const Vec3& p0, const Vec3& p1, const Vec3& p2);

using PointFunction = std::function<double(const Vec3&, double)>;
using PointMap = std::function<Vec3(const Vec3&)>;

// Caches the CSR sparsity pattern and per-element scatter indices of a fixed
// topology, so repeated assembly at different times or states costs one pass
// over the elements.  Positions passed to the fill methods must match the
// vertex count.
class OperatorAssembler {
public:
  OperatorAssembler(std::vector<std::array<int, 3>> triangles,
                    int vertex_count);
  explicit OperatorAssembler(const mesh::TriMesh& m)
      : OperatorAssembler(m.triangles, static_cast<int>(m.vertices.size())) {}

  int vertex_count() const { return vertex_count_; }
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }

  SparseMatrixCSR mass(const std::vector<Vec3>& positions) const;
  SparseMatrixCSR stiffness_linear(const std::vector<Vec3>& positions) const;
  SparseMatrixCSR stiffness_nonlinear(const std::vector<Vec3>& positions,
                                      const VecX& alpha,
                                      const geometry::Nonlinearity& nl,
                                      const QuadratureRule& rule = midpoint_rule()) const;
  SparseMatrixCSR newton_correction(const std::vector<Vec3>& positions,
                                    const VecX& alpha,
                                    const geometry::Nonlinearity& nl,
                                    const QuadratureRule& rule = midpoint_rule()) const;
  SparseMatrixCSR gform(const std::vector<Vec3>& positions,
                        const std::vector<Vec3>& nodal_velocity) const;
  VecX load(const std::vector<Vec3>& positions, const PointFunction& f,
            double t, const QuadratureRule& rule = degree4_rule(),
            const PointMap* lift = nullptr) const;

private:
  template <typename ElementKernel>
  SparseMatrixCSR assemble(const std::vector<Vec3>& positions,
                           ElementKernel&& kernel) const;

  std::vector<std::array<int, 3>> triangles_;
  int vertex_count_ = 0;
  SparseMatrixCSR pattern_;                        // zero values
  std::vector<std::array<int, 9>> scatter_;        // per element, row-major 3x3
};

// One-shot wrappers over OperatorAssembler for a mesh snapshot.
SparseMatrixCSR assemble_mass(const mesh::TriMesh& m);
SparseMatrixCSR assemble_stiffness_linear(const mesh::TriMesh& m);
SparseMatrixCSR assemble_stiffness_nonlinear(const mesh::TriMesh& m,
                                             const VecX& alpha,
                                             const geometry::Nonlinearity& nl,
                                             const QuadratureRule& rule = midpoint_rule());
SparseMatrixCSR assemble_newton_correction(const mesh::TriMesh& m,
                                           const VecX& alpha,
                                           const geometry::Nonlinearity& nl,
                                           const QuadratureRule& rule = midpoint_rule());
SparseMatrixCSR assemble_gform(const mesh::TriMesh& m,
                               const std::vector<Vec3>& nodal_velocity);
VecX assemble_load(const mesh::TriMesh& m, const PointFunction& f, double t,
                   const QuadratureRule& rule = degree4_rule(),
                   const PointMap* lift = nullptr);

struct FemOperators {
  SparseMatrixCSR mass;
  SparseMatrixCSR stiffness;
  double t = 0.0;
};

FemOperators assemble_operators(const mesh::TriMesh& m, double t);

// sqrt(z'Mz) resp. sqrt(z'Sz); throws if the quadratic form is negative
// beyond roundoff.
double discrete_norm_M(const SparseMatrixCSR& mass, const VecX& z);
double discrete_norm_A(const SparseMatrixCSR& stiffness, const VecX& z);

VecX nodal_interpolant(const std::vector<Vec3>& positions,
                       const PointFunction& f, double t);
VecX nodal_interpolant(const mesh::TriMesh& m, const PointFunction& f,
                       double t);

} // namespace esfem::assembly
