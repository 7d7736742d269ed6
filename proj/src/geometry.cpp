#include "esfem/geometry.hpp"

#include <cmath>

namespace esfem::geometry {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

void validate(const SurfaceSpec& spec) {
  if (spec.kind == SurfaceKind::OscillatingEllipsoid) {
    if (!(std::abs(spec.amplitude) < 1.0))
      throw std::invalid_argument(
          "SurfaceSpec: |amplitude| must be < 1 so that a(t) > 0");
    if (!(spec.period > 0.0))
      throw std::invalid_argument("SurfaceSpec: period must be positive");
  }
}

double axis_scale(const SurfaceSpec& spec, double t) {
  if (spec.kind == SurfaceKind::UnitSphere) return 1.0;
  return 1.0 + spec.amplitude * std::sin(kTwoPi * t / spec.period);
}

double axis_scale_rate(const SurfaceSpec& spec, double t) {
  if (spec.kind == SurfaceKind::UnitSphere) return 0.0;
  const double w = kTwoPi / spec.period;
  return spec.amplitude * w * std::cos(w * t);
}

double level_set(const SurfaceSpec& spec, const Vec3& x, double t) {
  const double a = axis_scale(spec, t);
  return x[0] * x[0] / a + x[1] * x[1] + x[2] * x[2] - 1.0;
}

Vec3 level_set_gradient(const SurfaceSpec& spec, const Vec3& x, double t) {
  const double a = axis_scale(spec, t);
  return Vec3(2.0 * x[0] / a, 2.0 * x[1], 2.0 * x[2]);
}

Mat3 level_set_hessian(const SurfaceSpec& spec, const Vec3& x, double t) {
  (void)x;
  const double a = axis_scale(spec, t);
  Mat3 h = Mat3::Zero();
  h(0, 0) = 2.0 / a;
  h(1, 1) = 2.0;
  h(2, 2) = 2.0;
  return h;
}

Vec3 flow_map(const SurfaceSpec& spec, const Vec3& X, double t) {
  if (std::abs(level_set(spec, X, 0.0)) > 1e-10)
    throw std::invalid_argument("flow_map: input point is not on Gamma(0)");
  const double a = axis_scale(spec, t);
  return Vec3(std::sqrt(a) * X[0], X[1], X[2]);
}

Vec3 material_velocity(const SurfaceSpec& spec, const Vec3& x, double t) {
  const double a = axis_scale(spec, t);
  const double da = axis_scale_rate(spec, t);
  return Vec3(0.5 * da / a * x[0], 0.0, 0.0);
}

SurfacePointData normal_projection_curvature(const SurfaceSpec& spec,
                                             const Vec3& x, double t) {
  const Vec3 g = level_set_gradient(spec, x, t);
  const double gn = g.norm();
  if (gn < 1e-10)
    throw SingularGradientError(
        "normal_projection_curvature: level-set gradient vanishes");
  const Mat3 hess = level_set_hessian(spec, x, t);

  SurfacePointData d;
  d.normal = g / gn;
  d.projection = Mat3::Identity() - d.normal * d.normal.transpose();
  // H = div(n) = trace(D^2 phi)/|g| - g'(D^2 phi)g/|g|^3
  d.mean_curvature = hess.trace() / gn - g.dot(hess * g) / (gn * gn * gn);
  d.velocity = material_velocity(spec, x, t);
  return d;
}

Vec3 closest_point(const SurfaceSpec& spec, const Vec3& x, double t) {
  const double a = axis_scale(spec, t);
  const double radicand = x[0] * x[0] / a + x[1] * x[1] + x[2] * x[2];
  if (radicand < 1e-12)
    throw ClosestPointError("closest_point: point too close to the origin");

  // Unknowns z = (p, lambda) with residual
  //   F = [ p + lambda * grad phi(p) - x ;  phi(p) ].
  Vec3 p = x / std::sqrt(radicand);
  double lambda = 0.0;
  {
    const Vec3 g = level_set_gradient(spec, p, t);
    lambda = (x - p).dot(g) / g.squaredNorm();
  }

  auto residual = [&](const Vec3& q, double lam) {
    Eigen::Vector4d f;
    f.head<3>() = q + lam * level_set_gradient(spec, q, t) - x;
    f[3] = level_set(spec, q, t);
    return f;
  };

  Eigen::Vector4d f = residual(p, lambda);
  const double tol = 1e-14 * (1.0 + x.norm());
  for (int it = 0; it < 50; ++it) {
    if (f.norm() <= tol) break;
    const Vec3 g = level_set_gradient(spec, p, t);
    const Mat3 hess = level_set_hessian(spec, p, t);
    Eigen::Matrix4d jac = Eigen::Matrix4d::Zero();
    jac.topLeftCorner<3, 3>() = Mat3::Identity() + lambda * hess;
    jac.topRightCorner<3, 1>() = g;
    jac.bottomLeftCorner<1, 3>() = g.transpose();
    const Eigen::Vector4d step = jac.partialPivLu().solve(-f);

    double damping = 1.0;
    for (int half = 0; half < 30; ++half) {
      const Vec3 p_new = p + damping * step.head<3>();
      const double lam_new = lambda + damping * step[3];
      const Eigen::Vector4d f_new = residual(p_new, lam_new);
      if (f_new.norm() < f.norm() || f_new.norm() <= tol) {
        p = p_new;
        lambda = lam_new;
        f = f_new;
        break;
      }
      damping *= 0.5;
    }
  }
  if (f.norm() > 1e-10 * (1.0 + x.norm()))
    throw ClosestPointError("closest_point: Newton did not converge");
  return p;
}

std::pair<Vec3, Vec3> tangent_basis(const Vec3& normal) {
  int axis = 0;
  double best = std::abs(normal[0]);
  for (int i = 1; i < 3; ++i) {
    if (std::abs(normal[i]) < best) {
      best = std::abs(normal[i]);
      axis = i;
    }
  }
  Vec3 e = Vec3::Zero();
  e[axis] = 1.0;
  const Vec3 t1 = (e - normal.dot(e) * normal).normalized();
  const Vec3 t2 = normal.cross(t1);
  return {t1, t2};
}

double diffusion_coefficient(double s) {
  return 1.0 - 0.5 * std::exp(-0.25 * s * s);
}

double diffusion_coefficient_derivative(double s) {
  return 0.25 * s * std::exp(-0.25 * s * s);
}

double exact_solution(const Vec3& x, double t) {
  return std::exp(-6.0 * t) * x[0] * x[1];
}

Vec3 exact_solution_surface_gradient(const SurfaceSpec& spec, const Vec3& x,
                                     double t) {
  const auto d = normal_projection_curvature(spec, x, t);
  const double e = std::exp(-6.0 * t);
  return d.projection * Vec3(e * x[1], e * x[0], 0.0);
}

Nonlinearity benchmark_nonlinearity() {
  return Nonlinearity{[](double s) { return diffusion_coefficient(s); },
                      [](double s) { return diffusion_coefficient_derivative(s); }};
}

Nonlinearity constant_nonlinearity(double c) {
  return Nonlinearity{[c](double) { return c; }, [](double) { return 0.0; }};
}

ScalarFieldData exact_solution_field(const Vec3& x, double t) {
  const double e = std::exp(-6.0 * t);
  ScalarFieldData f;
  f.value = e * x[0] * x[1];
  f.time_derivative = -6.0 * f.value;
  f.gradient = Vec3(e * x[1], e * x[0], 0.0);
  f.hessian = Mat3::Zero();
  f.hessian(0, 1) = f.hessian(1, 0) = e;
  return f;
}

double surface_divergence_of_velocity(const SurfaceSpec& spec, const Vec3& x,
                                      double t) {
  const double c = 0.5 * axis_scale_rate(spec, t) / axis_scale(spec, t);
  const Vec3 g = level_set_gradient(spec, x, t);
  const double gn = g.norm();
  if (gn < 1e-10)
    throw SingularGradientError(
        "surface_divergence_of_velocity: level-set gradient vanishes");
  const double n1 = g[0] / gn;
  // Dv = c e1 e1', so div v = c and n'(Dv)n = c n1^2.
  return c * (1.0 - n1 * n1);
}

double quasilinear_diffusion(const SurfaceSpec& spec, const Vec3& x, double t,
                             const ScalarFieldData& u,
                             const ScalarFieldData& coefficient_arg,
                             const Nonlinearity& nl) {
  const auto d = normal_projection_curvature(spec, x, t);
  const Vec3 surf_grad_u = d.projection * u.gradient;
  const double lap_gamma_u = u.hessian.trace() -
                             d.normal.dot(u.hessian * d.normal) -
                             d.mean_curvature * d.normal.dot(u.gradient);
  const Vec3 surf_grad_arg = d.projection * coefficient_arg.gradient;
  return nl.value(coefficient_arg.value) * lap_gamma_u +
         nl.derivative(coefficient_arg.value) * surf_grad_arg.dot(surf_grad_u);
}

double manufactured_rhs(const SurfaceSpec& spec, const Vec3& x, double t,
                        const ScalarFieldData& u, const Nonlinearity& nl) {
  const Vec3 v = material_velocity(spec, x, t);
  const double material_derivative = u.time_derivative + v.dot(u.gradient);
  return material_derivative +
         u.value * surface_divergence_of_velocity(spec, x, t) -
         quasilinear_diffusion(spec, x, t, u, u, nl);
}

double manufactured_rhs_f(const SurfaceSpec& spec, const Vec3& x, double t) {
  // Inlined version of manufactured_rhs for the benchmark fields; this is
  // the hot path of load-vector assembly.
  const ScalarFieldData u = exact_solution_field(x, t);

  const Vec3 g = level_set_gradient(spec, x, t);
  const double gn = g.norm();
  if (gn < 1e-10)
    throw SingularGradientError("manufactured_rhs_f: level-set gradient vanishes");
  const Vec3 n = g / gn;
  const Mat3 hess_phi = level_set_hessian(spec, x, t);
  const double hmean = hess_phi.trace() / gn - g.dot(hess_phi * g) / (gn * gn * gn);

  const double c = 0.5 * axis_scale_rate(spec, t) / axis_scale(spec, t);
  const double div_gamma_v = c * (1.0 - n[0] * n[0]);
  const Vec3 v(c * x[0], 0.0, 0.0);

  const Vec3 surf_grad_u = u.gradient - n.dot(u.gradient) * n;
  const double lap_gamma_u = u.hessian.trace() - n.dot(u.hessian * n) -
                             hmean * n.dot(u.gradient);
  const double diffusion =
      diffusion_coefficient(u.value) * lap_gamma_u +
      diffusion_coefficient_derivative(u.value) * surf_grad_u.squaredNorm();

  return u.time_derivative + v.dot(u.gradient) + u.value * div_gamma_v -
         diffusion;
}

ProblemDefinition benchmark_problem(const SurfaceSpec& spec) {
  validate(spec);
  ProblemDefinition p;
  p.surface = spec;
  p.nonlinearity = benchmark_nonlinearity();
  p.rhs = [spec](const Vec3& x, double t) {
    return manufactured_rhs_f(spec, x, t);
  };
  p.exact = [](const Vec3& x, double t) { return exact_solution(x, t); };
  p.exact_surface_gradient = [spec](const Vec3& x, double t) {
    return exact_solution_surface_gradient(spec, x, t);
  };
  return p;
}

ProblemDefinition zero_problem(const SurfaceSpec& spec) {
  validate(spec);
  ProblemDefinition p;
  p.surface = spec;
  p.nonlinearity = benchmark_nonlinearity();
  p.rhs = [](const Vec3&, double) { return 0.0; };
  p.exact = [](const Vec3&, double) { return 0.0; };
  p.exact_surface_gradient = [](const Vec3&, double) { return Vec3::Zero(); };
  return p;
}

} // namespace esfem::geometry
