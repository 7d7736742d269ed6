#pragma once

// Closed-form description of the moving test surface (an ellipsoid whose
// x1 semi-axis oscillates in time), its differential operators, the
// benchmark solution u(x,t) = e^{-6t} x1 x2 and the forcing term that makes
// it an exact solution of
//
//   du/dt (material) + u div_G v - div_G( A(u) grad_G u ) = f   on Gamma(t).
//
// The surface is the zero level set of  phi(x,t) = x1^2/a(t) + x2^2 + x3^2 - 1
// with a(t) = 1 + amplitude*sin(2*pi*t/period).  Nodes travel with the flow
// X -> (sqrt(a(t)) X1, X2, X3), which keeps the level set exactly.

#include <functional>
#include <stdexcept>
#include <utility>

#include "esfem/types.hpp"

namespace esfem::geometry {

enum class SurfaceKind { OscillatingEllipsoid, UnitSphere };

struct SurfaceSpec {
  SurfaceKind kind = SurfaceKind::OscillatingEllipsoid;
  double amplitude = 0.25;
  double period = 1.0;
};

// Throws std::invalid_argument unless a(t) stays positive (|amplitude| < 1)
// and the period is positive.
void validate(const SurfaceSpec& spec);

// a(t) and a'(t); identically 1 resp. 0 for the unit sphere.
double axis_scale(const SurfaceSpec& spec, double t);
double axis_scale_rate(const SurfaceSpec& spec, double t);

double level_set(const SurfaceSpec& spec, const Vec3& x, double t);
Vec3 level_set_gradient(const SurfaceSpec& spec, const Vec3& x, double t);
Mat3 level_set_hessian(const SurfaceSpec& spec, const Vec3& x, double t);

// Maps a point of Gamma(0) to its position on Gamma(t).  Throws if the input
// is not on Gamma(0).
Vec3 flow_map(const SurfaceSpec& spec, const Vec3& X, double t);

// Velocity of the material point currently at x, expressed in current
// coordinates: v(x,t) = (a'(t)/(2 a(t)) x1, 0, 0).
Vec3 material_velocity(const SurfaceSpec& spec, const Vec3& x, double t);

struct SurfacePointData {
  Vec3 normal;          // unit outward normal
  Mat3 projection;      // P = I - n n^T
  double mean_curvature; // sum of principal curvatures (2 on the unit sphere)
  Vec3 velocity;
};

struct SingularGradientError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Normal, tangential projection and curvature from closed-form derivatives
// of the level set.  Throws SingularGradientError if |grad phi| < 1e-10.
SurfacePointData normal_projection_curvature(const SurfaceSpec& spec,
                                             const Vec3& x, double t);

struct ClosestPointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Closest point p on Gamma(t): phi(p,t) = 0 and x - p parallel to the normal
// at p.  Damped Newton on both conditions; throws ClosestPointError if it
// does not converge within 50 iterations.
Vec3 closest_point(const SurfaceSpec& spec, const Vec3& x, double t);

// Deterministic orthonormal tangent frame {t1, t2} at a point with unit
// normal n (t1 x t2 = n up to sign).
std::pair<Vec3, Vec3> tangent_basis(const Vec3& normal);

// Diffusion coefficient A(s) = 1 - exp(-s^2/4)/2 and its derivative.
// A maps into [1/2, 1), so the problem is uniformly elliptic and bounded.
double diffusion_coefficient(double s);
double diffusion_coefficient_derivative(double s);

double exact_solution(const Vec3& x, double t);
Vec3 exact_solution_surface_gradient(const SurfaceSpec& spec, const Vec3& x,
                                     double t);

// Pointwise data of a smooth ambient scalar field at (x,t).
struct ScalarFieldData {
  double value = 0.0;
  double time_derivative = 0.0;
  Vec3 gradient = Vec3::Zero();
  Mat3 hessian = Mat3::Zero();
};

using ScalarField = std::function<ScalarFieldData(const Vec3&, double)>;

struct Nonlinearity {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
};

Nonlinearity benchmark_nonlinearity();
Nonlinearity constant_nonlinearity(double c);

ScalarFieldData exact_solution_field(const Vec3& x, double t);

// Tangential divergence of the prescribed velocity, div_G v = div v - n'(dv)n.
double surface_divergence_of_velocity(const SurfaceSpec& spec, const Vec3& x,
                                      double t);

// div_G( A(xi) grad_G u ) = A(xi) lap_G u + A'(xi) grad_G xi . grad_G u,
// with lap_G u = lap u - n'(D^2 u)n - H (n . grad u).
double quasilinear_diffusion(const SurfaceSpec& spec, const Vec3& x, double t,
                             const ScalarFieldData& u,
                             const ScalarFieldData& coefficient_arg,
                             const Nonlinearity& nl);

// Forcing that makes the given field an exact solution.
double manufactured_rhs(const SurfaceSpec& spec, const Vec3& x, double t,
                        const ScalarFieldData& u, const Nonlinearity& nl);

// The benchmark forcing for u = e^{-6t} x1 x2 with the benchmark coefficient.
double manufactured_rhs_f(const SurfaceSpec& spec, const Vec3& x, double t);

struct ProblemDefinition {
  SurfaceSpec surface;
  Nonlinearity nonlinearity;
  std::function<double(const Vec3&, double)> rhs;
  std::function<double(const Vec3&, double)> exact;
  std::function<Vec3(const Vec3&, double)> exact_surface_gradient;
};

// The oscillating-ellipsoid benchmark problem.
ProblemDefinition benchmark_problem(const SurfaceSpec& spec = SurfaceSpec{});

// f = 0, u = 0; used for smoke tests of the solver pipeline.
ProblemDefinition zero_problem(const SurfaceSpec& spec = SurfaceSpec{});

} // namespace esfem::geometry
