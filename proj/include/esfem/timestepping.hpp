#pragma once

// Time integration of the stiff ODE system
//
//   d/dt ( M(t) alpha(t) ) + A(alpha(t)) alpha(t) = b(t)
//
// by stiffly accurate, algebraically stable implicit Runge-Kutta methods
// (Radau IIA with 1..3 stages) and by implicit / linearly implicit k-step
// BDF methods for k <= 5, plus the coefficient and stability utilities for
// both families.  The system is abstract so that surrogate problems can be
// integrated by the same code paths as the assembled FEM systems.

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "esfem/linalg.hpp"
#include "esfem/types.hpp"

namespace esfem::timestepping {

using linalg::SparseMatrixCSR;

// ---------------------------------------------------------------------------
// Runge-Kutta tableaus

struct ButcherTableau {
  int stages = 0;
  MatX a;
  VecX b;
  VecX c;
  int classical_order = 0;
  int stage_order = 0;
};

// Radau IIA with s in {1,2,3}: backward Euler, the 2-stage order-3 and the
// 3-stage order-5 methods.
ButcherTableau radau_iia(int stages);

struct AlgebraicStabilityReport {
  bool stable = false;
  bool weights_positive = false;
  double smallest_eigenvalue = 0.0;
};

// Builds (b_i a_ij + b_j a_ji - b_i b_j) and tests positive semi-definiteness
// (smallest eigenvalue >= -1e-12) together with positivity of the weights.
AlgebraicStabilityReport check_algebraic_stability(const ButcherTableau& tb);

bool is_stiffly_accurate(const ButcherTableau& tb, double tol = 1e-14);
bool has_invertible_coefficient_matrix(const ButcherTableau& tb);

// ---------------------------------------------------------------------------
// BDF coefficients

// Coefficients of delta(z) = sum_{l=1..k} (1/l)(1-z)^l, indices 0..k.
VecX bdf_delta(int k); // k in 1..6

// Extrapolation weights gamma_j = (-1)^{j-1} binomial(k,j), j = 1..k; exact
// on polynomials of degree <= k-1.
VecX bdf_gamma(int k); // k in 1..6

struct BdfCoefficients {
  int steps = 0;
  VecX delta; // size k+1
  VecX gamma; // size k
};

BdfCoefficients bdf_coefficients(int k);

struct ZeroStabilityReport {
  bool stable = false;
  std::vector<double> root_moduli;
};

// Root condition for sum_j delta_j z^{k-j}: all roots in the closed unit
// disk, boundary roots simple.
ZeroStabilityReport check_zero_stability(int k);

// ---------------------------------------------------------------------------
// Nonlinear solves

struct NonlinearSolveConfig {
  enum class Strategy { Newton, Picard };
  Strategy strategy = Strategy::Newton;
  double rel_tol = 1e-10;
  int max_iter = 50;
  double linear_tol = 1e-12; // CG tolerance for the SPD solves
};

struct StepStats {
  int iterations = 0;
  std::vector<double> residual_history;
};

struct NonlinearSolveFailure : std::runtime_error {
  NonlinearSolveFailure(const std::string& what,
                        std::vector<double> residuals = {})
      : std::runtime_error(what), residual_history(std::move(residuals)) {}
  std::vector<double> residual_history;
};

struct StepFailure : std::runtime_error {
  StepFailure(const std::string& what, long step)
      : std::runtime_error(what), step_index(step) {}
  long step_index;
};

// ---------------------------------------------------------------------------
// The ODE system interface

class QuasilinearSystem {
public:
  virtual ~QuasilinearSystem() = default;
  virtual int size() const = 0;
  virtual SparseMatrixCSR mass(double t) const = 0;
  // A(alpha) at time t (symmetric).
  virtual SparseMatrixCSR stiffness(double t, const VecX& alpha) const = 0;
  // N(alpha) with d/dalpha [A(alpha) alpha] = A(alpha) + N(alpha).
  virtual SparseMatrixCSR stiffness_jacobian_correction(double t,
                                                        const VecX& alpha) const = 0;
  virtual VecX load(double t) const = 0;
};

// ---------------------------------------------------------------------------
// Single steps

// History of a k-step method, newest first: alphas[j] = alpha_{n-1-j} and
// mass_alphas[j] = M(t_{n-1-j}) alpha_{n-1-j} for j = 0..k-1.
struct BdfHistory {
  std::vector<VecX> alphas;
  std::vector<VecX> mass_alphas;
};

// Solves (delta_0/tau) M_n alpha + A(alpha) alpha = rhs with
// rhs = b(t_n) - (1/tau) sum_{j>=1} delta_j M_{n-j} alpha_{n-j}, by Newton
// with exact Jacobian (or Picard); converged when the M^{-1}-weighted l2
// norm of the residual drops below rel_tol times that of rhs.
VecX step_bdf_implicit(const QuasilinearSystem& system,
                       const BdfCoefficients& coeffs, const BdfHistory& history,
                       double t_n, double tau, const NonlinearSolveConfig& config,
                       StepStats* stats = nullptr);

// One linear SPD solve with the coefficient frozen at the gamma-extrapolated
// state sum_j gamma_j alpha_{n-j}.
VecX step_bdf_linearly_implicit(const QuasilinearSystem& system,
                                const BdfCoefficients& coeffs,
                                const BdfHistory& history, double t_n,
                                double tau, const NonlinearSolveConfig& config);

// Coupled Newton solve of the s*N stage system; requires a stiffly accurate
// tableau and returns the last stage value.
VecX step_rk_implicit(const QuasilinearSystem& system, const VecX& alpha_n,
                      double t_n, double tau, const ButcherTableau& tableau,
                      const NonlinearSolveConfig& config,
                      StepStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Integrator driver

struct IntegratorSpec {
  enum class Family { Bdf, LinearlyImplicitBdf, RadauIIA };
  Family family = Family::Bdf;
  int order = 1; // BDF steps k, or Radau stage count s
};

// Grammar: "be" | "bdf<k>" | "libdf<k>" | "radau<s>", case-insensitive,
// k in 1..5 and s in 1..3.  Throws std::invalid_argument otherwise.
IntegratorSpec parse_integrator(std::string_view text);
std::string to_string(const IntegratorSpec& spec);
int nominal_temporal_order(const IntegratorSpec& spec);

struct Trajectory {
  double tau = 0.0;
  std::vector<double> times;
  std::vector<long> steps; // step index of each recorded state
  std::vector<VecX> states;
};

struct IntegrateOptions {
  NonlinearSolveConfig nonlinear;
  int record_stride = 1; // record every m-th step (t=0 and t=T always kept)
  // Optional exact starting values for BDF k>1; default bootstrap runs the
  // 2-stage Radau IIA method with the same step size.
  std::function<VecX(double)> exact_start;
};

// Uniform steps from 0 to T; tau must divide T within rounding.  Step
// failures are rethrown as StepFailure carrying the step index.
Trajectory integrate(const QuasilinearSystem& system, const IntegratorSpec& spec,
                     double tau, double T, const VecX& alpha0,
                     const IntegrateOptions& options = {});

} // namespace esfem::timestepping
