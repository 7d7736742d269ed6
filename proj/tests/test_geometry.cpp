#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "esfem/geometry.hpp"

using namespace esfem;
using namespace esfem::geometry;

namespace {

const SurfaceSpec kSpec{}; // oscillating ellipsoid, amplitude 0.25, period 1

Vec3 random_unit_vector(std::mt19937& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(gauss(rng), gauss(rng), gauss(rng));
  } while (v.norm() < 1e-3);
  return v.normalized();
}

// --- independent oracle pieces, restated from the closed forms -------------

double u_exact(const Vec3& x, double t) {
  return std::exp(-6.0 * t) * x[0] * x[1];
}

Vec3 oracle_normal(const SurfaceSpec& spec, const Vec3& x, double t) {
  const double a = axis_scale(spec, t);
  return Vec3(2.0 * x[0] / a, 2.0 * x[1], 2.0 * x[2]).normalized();
}

// Tangential central differences of an ambient vector field: sum_k t_k .
// (F(x + d t_k) - F(x - d t_k)) / (2d) equals the surface divergence when F
// needs no pullback (ambient fields) or after closest-point pullback
// (fields defined on the surface only).
template <typename Field>
double tangential_divergence(const SurfaceSpec& spec, const Vec3& x, double t,
                             double delta, Field&& field) {
  const Vec3 n = oracle_normal(spec, x, t);
  const auto [t1, t2] = tangent_basis(n);
  double div = 0.0;
  for (const Vec3& tk : {t1, t2}) {
    const Vec3 fp = field(x + delta * tk);
    const Vec3 fm = field(x - delta * tk);
    div += tk.dot(fp - fm) / (2.0 * delta);
  }
  return div;
}

// Finite-difference oracle for the forcing term of a manufactured solution.
// Everything is differenced: the material derivative along the flow, the
// tangential divergence of the velocity and the diffusion term (via
// closest-point pullback of A(u) grad_G u).
template <typename Value, typename Gradient, typename CoefficientValue>
double rhs_fd_oracle(const SurfaceSpec& spec, const Vec3& x, double t,
                     double delta, Value&& value, Gradient&& gradient,
                     CoefficientValue&& coefficient) {
  // material derivative along the flow, restated: X = (x1/sqrt(a), x2, x3)
  const double eps = 1e-6;
  const Vec3 X(x[0] / std::sqrt(axis_scale(spec, t)), x[1], x[2]);
  auto flowed = [&](double s) {
    return Vec3(std::sqrt(axis_scale(spec, s)) * X[0], X[1], X[2]);
  };
  const double mat_deriv =
      (value(flowed(t + eps), t + eps) - value(flowed(t - eps), t - eps)) /
      (2.0 * eps);

  auto velocity = [&](const Vec3& y) {
    return Vec3(0.5 * axis_scale_rate(spec, t) / axis_scale(spec, t) * y[0],
                0.0, 0.0);
  };
  const double div_v = tangential_divergence(spec, x, t, delta, velocity);

  auto diffusive_flux = [&](const Vec3& y) -> Vec3 {
    const Vec3 p = closest_point(spec, y, t);
    const Vec3 n = oracle_normal(spec, p, t);
    const Vec3 g = gradient(p, t);
    return coefficient(value(p, t)) * (g - n.dot(g) * n);
  };
  const double div_flux =
      tangential_divergence(spec, x, t, delta, diffusive_flux);

  return mat_deriv + value(x, t) * div_v - div_flux;
}

} // namespace

TEST_CASE("level set") {
  CHECK(level_set(kSpec, Vec3(1, 0, 0), 0.0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(level_set(kSpec, Vec3(0, 0, 2), 0.37) == doctest::Approx(3.0));
  // a(0.25) = 1.25
  CHECK(level_set(kSpec, Vec3(std::sqrt(1.25), 0, 0), 0.25) ==
        doctest::Approx(0.0).epsilon(1e-14));
  CHECK(axis_scale(kSpec, 0.25) == doctest::Approx(1.25));
}

TEST_CASE("surface spec validation") {
  CHECK_NOTHROW(validate(kSpec));
  CHECK_THROWS_AS(validate(SurfaceSpec{SurfaceKind::OscillatingEllipsoid, 1.0, 1.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(validate(SurfaceSpec{SurfaceKind::OscillatingEllipsoid, 0.25, 0.0}),
                  std::invalid_argument);
}

TEST_CASE("flow map") {
  const Vec3 x = flow_map(kSpec, Vec3(1, 0, 0), 0.25);
  CHECK(x[0] == doctest::Approx(std::sqrt(1.25)).epsilon(1e-15));
  CHECK(x[1] == 0.0);
  CHECK((flow_map(kSpec, Vec3(0, 1, 0), 0.77) - Vec3(0, 1, 0)).norm() == 0.0);
  CHECK((flow_map(kSpec, Vec3(1, 0, 0), 1.0) - Vec3(1, 0, 0)).norm() ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(flow_map(kSpec, Vec3(2, 0, 0), 0.1), std::invalid_argument);
}

TEST_CASE("flow map stays on the level set") {
  std::mt19937 rng(12345);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 X = random_unit_vector(rng);
    const double t = 2.0 * double(i) / 1000.0;
    CHECK(std::abs(level_set(kSpec, flow_map(kSpec, X, t), t)) < 1e-14);
  }
}

TEST_CASE("material velocity examples") {
  const Vec3 v0 = material_velocity(kSpec, Vec3(1, 0, 0), 0.0);
  // a'(0) = 0.5 pi, a(0) = 1 -> v = (0.25 pi, 0, 0)
  CHECK(v0[0] == doctest::Approx(0.25 * M_PI).epsilon(1e-14));
  CHECK(v0[1] == 0.0);
  CHECK(material_velocity(kSpec, Vec3(0, 0.3, -0.8), 0.6).norm() == 0.0);
  CHECK(material_velocity(kSpec, Vec3(1, 0, 0), 0.25).norm() ==
        doctest::Approx(0.0).epsilon(1e-13));
}

TEST_CASE("material velocity is the time derivative of the flow") {
  std::mt19937 rng(777);
  const double eps = 1e-6;
  for (int i = 0; i < 50; ++i) {
    const Vec3 X = random_unit_vector(rng);
    const double t = 0.05 + 0.9 * double(i) / 50.0;
    const Vec3 fd = (flow_map(kSpec, X, t + eps) - flow_map(kSpec, X, t - eps)) /
                    (2.0 * eps);
    const Vec3 v = material_velocity(kSpec, flow_map(kSpec, X, t), t);
    CHECK((fd - v).norm() < 1e-8);
  }
}

TEST_CASE("normal, projection and curvature") {
  const auto d = normal_projection_curvature(kSpec, Vec3(1, 0, 0), 0.0);
  CHECK((d.normal - Vec3(1, 0, 0)).norm() < 1e-14);
  CHECK(d.mean_curvature == doctest::Approx(2.0).epsilon(1e-13));

  const auto top = normal_projection_curvature(kSpec, Vec3(0, 0, 1), 0.0);
  CHECK((top.normal - Vec3(0, 0, 1)).norm() < 1e-14);
  Mat3 p_expected = Mat3::Zero();
  p_expected(0, 0) = p_expected(1, 1) = 1.0;
  CHECK((top.projection - p_expected).norm() < 1e-14);

  // unit-normal / projection invariants at random points
  std::mt19937 rng(99);
  for (int i = 0; i < 100; ++i) {
    const Vec3 x = flow_map(kSpec, random_unit_vector(rng), 0.4);
    const auto s = normal_projection_curvature(kSpec, x, 0.4);
    CHECK(std::abs(s.normal.norm() - 1.0) < 1e-12);
    CHECK((s.projection * s.projection - s.projection).norm() < 1e-12);
    CHECK((s.projection * s.normal).norm() < 1e-12);
  }
}

TEST_CASE("curvature against divergence of the normal field") {
  // H = div(n); central differences of n with step 1e-5, agreement 1e-6.
  const double h = 1e-5;
  const double t = 0.25;
  const Vec3 x(std::sqrt(1.25), 0, 0);
  const auto d = normal_projection_curvature(kSpec, x, t);
  CHECK((d.normal - Vec3(1, 0, 0)).norm() < 1e-14);
  double div_n = 0.0;
  for (int i = 0; i < 3; ++i) {
    Vec3 dx = Vec3::Zero();
    dx[i] = h;
    div_n += (normal_projection_curvature(kSpec, x + dx, t).normal[i] -
              normal_projection_curvature(kSpec, x - dx, t).normal[i]) /
             (2.0 * h);
  }
  CHECK(std::abs(div_n - d.mean_curvature) < 1e-6);
}

TEST_CASE("closest point") {
  CHECK((closest_point(kSpec, Vec3(2, 0, 0), 0.0) - Vec3(1, 0, 0)).norm() < 1e-12);
  CHECK((closest_point(kSpec, Vec3(0, 1.1, 0), 0.25) - Vec3(0, 1, 0)).norm() < 1e-10);

  std::mt19937 rng(4242);
  for (int i = 0; i < 50; ++i) {
    const double t = double(i) / 50.0;
    const Vec3 p = flow_map(kSpec, random_unit_vector(rng), t);
    CHECK((closest_point(kSpec, p, t) - p).norm() < 1e-10); // fixed point
    const Vec3 x = p + 0.15 * oracle_normal(kSpec, p, t);
    const Vec3 q = closest_point(kSpec, x, t);
    CHECK(std::abs(level_set(kSpec, q, t)) < 1e-12);
    // x - q parallel to the normal at q
    const auto d = normal_projection_curvature(kSpec, q, t);
    CHECK((d.projection * (x - q)).norm() < 1e-10);
    // idempotent
    CHECK((closest_point(kSpec, q, t) - q).norm() < 1e-10);
  }
}

TEST_CASE("diffusion coefficient") {
  CHECK(diffusion_coefficient(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(diffusion_coefficient(10.0) > 0.999);
  const double eps = 1e-6;
  const double fd = (diffusion_coefficient(2.0 + eps) -
                     diffusion_coefficient(2.0 - eps)) /
                    (2.0 * eps);
  CHECK(std::abs(fd - diffusion_coefficient_derivative(2.0)) < 1e-9);
  // ellipticity and boundedness: 1/2 <= A(s) < 1 (the upper bound saturates
  // to 1.0 in double precision once exp(-s^2/4) underflows the last bit)
  for (int i = 0; i <= 1000; ++i) {
    const double s = -100.0 + 0.2 * i;
    const double a = diffusion_coefficient(s);
    CHECK(a >= 0.5);
    CHECK(a <= 1.0);
    if (std::abs(s) <= 8.0) CHECK(a < 1.0);
  }
}

TEST_CASE("exact solution") {
  CHECK(exact_solution(Vec3(1, 0, 0), 0.0) == 0.0);
  CHECK(exact_solution(Vec3(1 / std::sqrt(2.0), 1 / std::sqrt(2.0), 0), 0.0) ==
        doctest::Approx(0.5).epsilon(1e-15));
  CHECK(exact_solution(Vec3(1 / std::sqrt(2.0), 1 / std::sqrt(2.0), 0), 1.0) ==
        doctest::Approx(0.00123938).epsilon(1e-5));
  // surface gradient is tangential
  const Vec3 g = exact_solution_surface_gradient(kSpec, Vec3(0, 0, 1), 0.3);
  CHECK(std::abs(g[2]) < 1e-14);
}

TEST_CASE("forcing vanishes at the pole") {
  CHECK(std::abs(manufactured_rhs_f(kSpec, Vec3(0, 0, 1), 0.0)) < 1e-14);
}

TEST_CASE("forcing matches the finite-difference oracle") {
  std::mt19937 rng(2024);
  const auto value = [](const Vec3& x, double t) { return u_exact(x, t); };
  const auto grad = [](const Vec3& x, double t) {
    const double e = std::exp(-6.0 * t);
    return Vec3(e * x[1], e * x[0], 0.0);
  };
  const auto coeff = [](double s) { return diffusion_coefficient(s); };
  double worst = 0.0;
  for (int j = 0; j < 20; ++j) {
    const double t = 0.025 + 0.95 * double(j) / 19.0;
    for (int i = 0; i < 10; ++i) {
      const Vec3 x = flow_map(kSpec, random_unit_vector(rng), t);
      const double f = manufactured_rhs_f(kSpec, x, t);
      const double f_fd = rhs_fd_oracle(kSpec, x, t, 1e-4, value, grad, coeff);
      worst = std::max(worst, std::abs(f - f_fd));
    }
  }
  CHECK(worst < 1e-5);
  // denser sampling at a few fixed times, tighter tolerance
  for (int i = 0; i < 20; ++i) {
    const Vec3 x = flow_map(kSpec, random_unit_vector(rng), 0.15);
    const double f = manufactured_rhs_f(kSpec, x, 0.15);
    const double f_fd = rhs_fd_oracle(kSpec, x, 0.15, 1e-4, value, grad, coeff);
    CHECK(std::abs(f - f_fd) < 1e-6);
  }
}

TEST_CASE("forcing linear consistency") {
  // A == 1 and u a degree-1 ambient polynomial: the general machinery reduces
  // to f = mat_deriv + u div_G v + H (n . grad u).
  const Vec3 c(2.0, -1.0, 0.5);
  const double c0 = 0.3;
  const auto field = [&](const Vec3& x, double) {
    ScalarFieldData f;
    f.value = c.dot(x) + c0;
    f.gradient = c;
    return f;
  };
  const Nonlinearity one = constant_nonlinearity(1.0);
  const auto value = [&](const Vec3& x, double) { return c.dot(x) + c0; };
  const auto grad = [&](const Vec3&, double) { return c; };
  const auto unit_coeff = [](double) { return 1.0; };

  std::mt19937 rng(55);
  for (int i = 0; i < 25; ++i) {
    const double t = 0.1 + 0.8 * double(i) / 25.0;
    const Vec3 x = flow_map(kSpec, random_unit_vector(rng), t);
    const double f = manufactured_rhs(kSpec, x, t, field(x, t), one);
    const double f_fd = rhs_fd_oracle(kSpec, x, t, 1e-5, value, grad, unit_coeff);
    CHECK(std::abs(f - f_fd) < 1e-8);
  }
}

TEST_CASE("singularity error") {
  CHECK_THROWS_AS(normal_projection_curvature(kSpec, Vec3(0, 0, 0), 0.0),
                  SingularGradientError);
}

TEST_CASE("closest point rejects points outside the reach") {
  CHECK_THROWS_AS(closest_point(kSpec, Vec3(1e-8, 0, 0), 0.0),
                  ClosestPointError);
}
