#pragma once

// Triangulated surface meshes: deterministic icosphere refinement, mesh
// quality measures, evolution of vertices along the surface flow, and the
// text file format
//
//   ESFEM-MESH 1
//   <V> <F>
//   x y z            (V lines, 17 significant digits)
//   i j k            (F lines, 0-based vertex indices)

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "esfem/geometry.hpp"
#include "esfem/types.hpp"

namespace esfem::mesh {

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  int level = 0;
};

// Regular icosahedron refined `level` times; every split triangle spawns 4,
// new vertices are projected radially onto the unit sphere.  Vertex count is
// 10*4^level + 2.  Valid levels are 0..8.
TriMesh icosphere(int level);

// Checks that every edge is shared by exactly two triangles with opposite
// orientation (closed, consistently oriented 2-manifold) and that no
// triangle is degenerate.  Throws std::runtime_error on violation.
void validate_closed_manifold(const TriMesh& m);

// True if (p1-p0)x(p2-p0) . outward(centroid) > 0 for every triangle.
bool is_outward_oriented(const TriMesh& m,
                         const std::function<Vec3(const Vec3&)>& outward);

double triangle_area(const Vec3& p0, const Vec3& p1, const Vec3& p2);

// Maximum edge length over all triangles.
double mesh_size_h(const TriMesh& m);

// min over triangles of inradius / h; throws on degenerate triangles.
double admissibility_ratio(const TriMesh& m);

double total_area(const TriMesh& m);

struct EvolvingMesh {
  TriMesh reference; // triangulation of Gamma(0)
  geometry::SurfaceSpec surface;
};

// Validates that every reference vertex lies on Gamma(0) to 1e-12.
EvolvingMesh make_evolving(TriMesh reference, const geometry::SurfaceSpec& spec);

EvolvingMesh make_evolving(int icosphere_level,
                           const geometry::SurfaceSpec& spec);

std::vector<Vec3> positions_at(const EvolvingMesh& em, double t);

// Writes positions_at(em, t) into `out` (resized as needed).
void positions_at(const EvolvingMesh& em, double t, std::vector<Vec3>& out);

// Evolved copy sharing the reference topology.
TriMesh mesh_at(const EvolvingMesh& em, double t);

// Nodal velocities v(x_i, t) at the evolved vertex positions.
std::vector<Vec3> nodal_velocities(const EvolvingMesh& em, double t);

void write_mesh(const TriMesh& m, std::ostream& os);
void write_mesh(const TriMesh& m, const std::string& path);
TriMesh read_mesh(std::istream& is);

} // namespace esfem::mesh
