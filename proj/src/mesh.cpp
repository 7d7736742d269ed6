#include "esfem/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <istream>
#include <sstream>
#include <stdexcept>

namespace esfem::mesh {

namespace {

TriMesh base_icosahedron() {
  const double phi = 0.5 * (1.0 + std::sqrt(5.0));
  std::vector<Vec3> v = {
      {-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
      {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
      {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<std::array<int, 3>> f = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  TriMesh m;
  m.vertices = std::move(v);
  m.triangles = std::move(f);
  m.level = 0;
  // Enforce outward orientation on the unit sphere.
  for (auto& t : m.triangles) {
    const Vec3 c = (m.vertices[t[0]] + m.vertices[t[1]] + m.vertices[t[2]]) / 3.0;
    const Vec3 n = (m.vertices[t[1]] - m.vertices[t[0]])
                       .cross(m.vertices[t[2]] - m.vertices[t[0]]);
    if (n.dot(c) < 0.0) std::swap(t[1], t[2]);
  }
  return m;
}

TriMesh subdivide_on_sphere(const TriMesh& m) {
  TriMesh out;
  out.vertices = m.vertices;
  out.level = m.level + 1;
  out.triangles.reserve(4 * m.triangles.size());
  std::map<std::pair<int, int>, int> midpoint;
  auto mid = [&](int a, int b) {
    const auto key = std::minmax(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    const Vec3 p = (out.vertices[a] + out.vertices[b]).normalized();
    const int idx = static_cast<int>(out.vertices.size());
    out.vertices.push_back(p);
    midpoint.emplace(key, idx);
    return idx;
  };
  for (const auto& t : m.triangles) {
    const int m01 = mid(t[0], t[1]);
    const int m12 = mid(t[1], t[2]);
    const int m20 = mid(t[2], t[0]);
    out.triangles.push_back({t[0], m01, m20});
    out.triangles.push_back({t[1], m12, m01});
    out.triangles.push_back({t[2], m20, m12});
    out.triangles.push_back({m01, m12, m20});
  }
  return out;
}

} // namespace

TriMesh icosphere(int level) {
  if (level < 0 || level > 8)
    throw std::invalid_argument("icosphere: level must be in 0..8");
  TriMesh m = base_icosahedron();
  for (int l = 0; l < level; ++l) m = subdivide_on_sphere(m);
  return m;
}

void validate_closed_manifold(const TriMesh& m) {
  std::map<std::pair<int, int>, int> directed;
  for (const auto& t : m.triangles) {
    if (triangle_area(m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]) <=
        0.0)
      throw std::runtime_error("mesh validation: degenerate triangle");
    for (int e = 0; e < 3; ++e) {
      const int a = t[e], b = t[(e + 1) % 3];
      if (a == b) throw std::runtime_error("mesh validation: collapsed edge");
      if (++directed[{a, b}] > 1)
        throw std::runtime_error("mesh validation: duplicated directed edge");
    }
  }
  for (const auto& [edge, count] : directed) {
    (void)count;
    if (directed.find({edge.second, edge.first}) == directed.end())
      throw std::runtime_error(
          "mesh validation: boundary or inconsistently oriented edge");
  }
}

bool is_outward_oriented(const TriMesh& m,
                         const std::function<Vec3(const Vec3&)>& outward) {
  for (const auto& t : m.triangles) {
    const Vec3& p0 = m.vertices[t[0]];
    const Vec3& p1 = m.vertices[t[1]];
    const Vec3& p2 = m.vertices[t[2]];
    const Vec3 c = (p0 + p1 + p2) / 3.0;
    if ((p1 - p0).cross(p2 - p0).dot(outward(c)) <= 0.0) return false;
  }
  return true;
}

double triangle_area(const Vec3& p0, const Vec3& p1, const Vec3& p2) {
  return 0.5 * (p1 - p0).cross(p2 - p0).norm();
}

double mesh_size_h(const TriMesh& m) {
  double h = 0.0;
  for (const auto& t : m.triangles) {
    h = std::max(h, (m.vertices[t[1]] - m.vertices[t[0]]).norm());
    h = std::max(h, (m.vertices[t[2]] - m.vertices[t[1]]).norm());
    h = std::max(h, (m.vertices[t[0]] - m.vertices[t[2]]).norm());
  }
  return h;
}

double admissibility_ratio(const TriMesh& m) {
  const double h = mesh_size_h(m);
  double ratio = std::numeric_limits<double>::max();
  for (const auto& t : m.triangles) {
    const Vec3& p0 = m.vertices[t[0]];
    const Vec3& p1 = m.vertices[t[1]];
    const Vec3& p2 = m.vertices[t[2]];
    const double area = triangle_area(p0, p1, p2);
    const double perimeter =
        (p1 - p0).norm() + (p2 - p1).norm() + (p0 - p2).norm();
    if (!(area > 0.0))
      throw std::runtime_error("admissibility_ratio: degenerate triangle");
    ratio = std::min(ratio, 2.0 * area / perimeter / h);
  }
  return ratio;
}

double total_area(const TriMesh& m) {
  double area = 0.0;
  for (const auto& t : m.triangles)
    area += triangle_area(m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]);
  return area;
}

EvolvingMesh make_evolving(TriMesh reference,
                           const geometry::SurfaceSpec& spec) {
  geometry::validate(spec);
  for (const auto& v : reference.vertices) {
    if (std::abs(geometry::level_set(spec, v, 0.0)) > 1e-12)
      throw std::invalid_argument(
          "make_evolving: reference vertex is not on Gamma(0)");
  }
  return EvolvingMesh{std::move(reference), spec};
}

EvolvingMesh make_evolving(int icosphere_level,
                           const geometry::SurfaceSpec& spec) {
  return make_evolving(icosphere(icosphere_level), spec);
}

std::vector<Vec3> positions_at(const EvolvingMesh& em, double t) {
  std::vector<Vec3> out;
  positions_at(em, t, out);
  return out;
}

void positions_at(const EvolvingMesh& em, double t, std::vector<Vec3>& out) {
  const double s = std::sqrt(geometry::axis_scale(em.surface, t));
  out.resize(em.reference.vertices.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Vec3& X = em.reference.vertices[i];
    out[i] = Vec3(s * X[0], X[1], X[2]);
  }
}

TriMesh mesh_at(const EvolvingMesh& em, double t) {
  TriMesh m;
  m.vertices = positions_at(em, t);
  m.triangles = em.reference.triangles;
  m.level = em.reference.level;
  return m;
}

std::vector<Vec3> nodal_velocities(const EvolvingMesh& em, double t) {
  std::vector<Vec3> pos = positions_at(em, t);
  for (auto& p : pos) p = geometry::material_velocity(em.surface, p, t);
  return pos;
}

void write_mesh(const TriMesh& m, std::ostream& os) {
  os << "ESFEM-MESH 1\n";
  os << m.vertices.size() << ' ' << m.triangles.size() << '\n';
  char buf[96];
  for (const auto& v : m.vertices) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", v[0], v[1], v[2]);
    os << buf;
  }
  for (const auto& t : m.triangles)
    os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

void write_mesh(const TriMesh& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_mesh: cannot open " + path);
  write_mesh(m, os);
  if (!os) throw std::runtime_error("write_mesh: write failed for " + path);
}

TriMesh read_mesh(std::istream& is) {
  std::string magic, version;
  is >> magic >> version;
  if (magic != "ESFEM-MESH" || version != "1")
    throw std::runtime_error("read_mesh: bad header");
  std::size_t nv = 0, nf = 0;
  is >> nv >> nf;
  TriMesh m;
  m.vertices.resize(nv);
  for (auto& v : m.vertices) is >> v[0] >> v[1] >> v[2];
  m.triangles.resize(nf);
  for (auto& t : m.triangles) is >> t[0] >> t[1] >> t[2];
  if (!is) throw std::runtime_error("read_mesh: truncated file");
  for (const auto& t : m.triangles)
    for (int i : t)
      if (i < 0 || static_cast<std::size_t>(i) >= nv)
        throw std::runtime_error("read_mesh: vertex index out of range");
  return m;
}

} // namespace esfem::mesh
