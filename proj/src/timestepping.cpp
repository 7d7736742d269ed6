#include "esfem/timestepping.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <deque>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

namespace esfem::timestepping {

// ---------------------------------------------------------------------------
// Tableaus and coefficients

ButcherTableau radau_iia(int stages) {
  ButcherTableau tb;
  tb.stages = stages;
  switch (stages) {
    case 1:
      tb.a = MatX::Constant(1, 1, 1.0);
      tb.b = VecX::Constant(1, 1.0);
      tb.c = VecX::Constant(1, 1.0);
      tb.classical_order = 1;
      tb.stage_order = 1;
      break;
    case 2:
      tb.a.resize(2, 2);
      tb.a << 5.0 / 12.0, -1.0 / 12.0, 3.0 / 4.0, 1.0 / 4.0;
      tb.b.resize(2);
      tb.b << 3.0 / 4.0, 1.0 / 4.0;
      tb.c.resize(2);
      tb.c << 1.0 / 3.0, 1.0;
      tb.classical_order = 3;
      tb.stage_order = 2;
      break;
    case 3: {
      const double r6 = std::sqrt(6.0);
      tb.a.resize(3, 3);
      tb.a << (88.0 - 7.0 * r6) / 360.0, (296.0 - 169.0 * r6) / 1800.0,
          (-2.0 + 3.0 * r6) / 225.0, (296.0 + 169.0 * r6) / 1800.0,
          (88.0 + 7.0 * r6) / 360.0, (-2.0 - 3.0 * r6) / 225.0,
          (16.0 - r6) / 36.0, (16.0 + r6) / 36.0, 1.0 / 9.0;
      tb.b.resize(3);
      tb.b << (16.0 - r6) / 36.0, (16.0 + r6) / 36.0, 1.0 / 9.0;
      tb.c.resize(3);
      tb.c << (4.0 - r6) / 10.0, (4.0 + r6) / 10.0, 1.0;
      tb.classical_order = 5;
      tb.stage_order = 3;
      break;
    }
    default:
      throw std::invalid_argument("radau_iia: stages must be 1, 2 or 3");
  }
  return tb;
}

AlgebraicStabilityReport check_algebraic_stability(const ButcherTableau& tb) {
  const int s = tb.stages;
  AlgebraicStabilityReport report;
  report.weights_positive = (tb.b.array() > 0.0).all();
  MatX m(s, s);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j)
      m(i, j) = tb.b[i] * tb.a(i, j) + tb.b[j] * tb.a(j, i) - tb.b[i] * tb.b[j];
  const Eigen::SelfAdjointEigenSolver<MatX> eig(0.5 * (m + m.transpose()));
  report.smallest_eigenvalue = eig.eigenvalues().minCoeff();
  report.stable = report.weights_positive && report.smallest_eigenvalue >= -1e-12;
  return report;
}

bool is_stiffly_accurate(const ButcherTableau& tb, double tol) {
  const int s = tb.stages;
  if (std::abs(tb.c[s - 1] - 1.0) > tol) return false;
  for (int j = 0; j < s; ++j)
    if (std::abs(tb.b[j] - tb.a(s - 1, j)) > tol) return false;
  return true;
}

bool has_invertible_coefficient_matrix(const ButcherTableau& tb) {
  return Eigen::FullPivLU<MatX>(tb.a).isInvertible();
}

namespace {
double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}
} // namespace

VecX bdf_delta(int k) {
  if (k < 1 || k > 6) throw std::invalid_argument("bdf_delta: k must be in 1..6");
  VecX delta = VecX::Zero(k + 1);
  // coefficient of z^j in (1-z)^l is (-1)^j C(l,j)
  for (int l = 1; l <= k; ++l)
    for (int j = 0; j <= l; ++j)
      delta[j] += ((j % 2 == 0) ? 1.0 : -1.0) * binomial(l, j) / l;
  return delta;
}

VecX bdf_gamma(int k) {
  if (k < 1 || k > 6) throw std::invalid_argument("bdf_gamma: k must be in 1..6");
  VecX gamma(k);
  for (int j = 1; j <= k; ++j)
    gamma[j - 1] = ((j % 2 == 1) ? 1.0 : -1.0) * binomial(k, j);
  return gamma;
}

BdfCoefficients bdf_coefficients(int k) {
  return BdfCoefficients{k, bdf_delta(k), bdf_gamma(k)};
}

ZeroStabilityReport check_zero_stability(int k) {
  const VecX delta = bdf_delta(k);
  // q(z) = sum_j delta_j z^{k-j}, normalized monic.
  VecX monic(k); // coefficients a_1..a_k of z^k + a_1 z^{k-1} + ... + a_k
  for (int j = 1; j <= k; ++j) monic[j - 1] = delta[j] / delta[0];
  MatX companion = MatX::Zero(k, k);
  companion.row(0) = -monic.transpose();
  companion.block(1, 0, k - 1, k - 1).setIdentity();
  const Eigen::EigenSolver<MatX> eig(companion);

  ZeroStabilityReport report;
  report.stable = true;
  for (int i = 0; i < k; ++i) {
    const std::complex<double> root = eig.eigenvalues()[i];
    const double modulus = std::abs(root);
    report.root_moduli.push_back(modulus);
    if (modulus > 1.0 + 1e-10) report.stable = false;
    if (modulus > 1.0 - 1e-6) {
      // boundary root: require simplicity via q'(root) != 0
      std::complex<double> dq = 0.0;
      for (int j = 0; j < k; ++j)
        dq += delta[j] * double(k - j) * std::pow(root, k - j - 1);
      if (std::abs(dq) < 1e-8) report.stable = false;
    }
  }
  std::sort(report.root_moduli.rbegin(), report.root_moduli.rend());
  return report;
}

// ---------------------------------------------------------------------------
// Step implementations

namespace {

using SpMat = Eigen::SparseMatrix<double>;

// sqrt(F' M^{-1} F); the discrete L2 norm of the residual's function
// representation, which keeps the convergence criterion mesh-robust.
double weighted_norm(const SparseMatrixCSR& mass, const VecX& f) {
  if (f.norm() == 0.0) return 0.0;
  const VecX q = linalg::cg_solve(mass, f, 1e-10).x;
  return std::sqrt(std::max(f.dot(q), 0.0));
}

VecX sparse_lu_solve(const SparseMatrixCSR& a, const VecX& rhs,
                     const char* what) {
  SpMat m = a.eigen_map();
  m.makeCompressed();
  Eigen::SparseLU<SpMat> lu;
  lu.compute(m);
  if (lu.info() != Eigen::Success)
    throw NonlinearSolveFailure(std::string(what) + ": singular Jacobian");
  return lu.solve(rhs);
}

VecX bdf_rhs(const QuasilinearSystem& system, const BdfCoefficients& coeffs,
             const BdfHistory& history, double t_n, double tau) {
  const int k = coeffs.steps;
  if (static_cast<int>(history.alphas.size()) != k ||
      static_cast<int>(history.mass_alphas.size()) != k)
    throw std::invalid_argument("bdf step: history length != k");
  VecX rhs = system.load(t_n);
  for (int j = 1; j <= k; ++j)
    rhs -= (coeffs.delta[j] / tau) * history.mass_alphas[j - 1];
  return rhs;
}

VecX bdf_extrapolate(const BdfCoefficients& coeffs, const BdfHistory& history) {
  VecX x = coeffs.gamma[0] * history.alphas[0];
  for (int j = 2; j <= coeffs.steps; ++j)
    x += coeffs.gamma[j - 1] * history.alphas[j - 1];
  return x;
}

VecX step_bdf_implicit_core(const QuasilinearSystem& system,
                            const BdfCoefficients& coeffs,
                            const BdfHistory& history,
                            const SparseMatrixCSR& mass_n, double t_n,
                            double tau, const NonlinearSolveConfig& config,
                            StepStats* stats) {
  const double lead = coeffs.delta[0] / tau;
  const VecX rhs = bdf_rhs(system, coeffs, history, t_n, tau);
  const double target = config.rel_tol * weighted_norm(mass_n, rhs);

  VecX alpha = bdf_extrapolate(coeffs, history);
  StepStats local;
  StepStats& st = stats ? *stats : local;
  st.iterations = 0;
  st.residual_history.clear();

  for (int it = 0; it <= config.max_iter; ++it) {
    const SparseMatrixCSR a = system.stiffness(t_n, alpha);
    const VecX f = lead * linalg::spmv(mass_n, alpha) + linalg::spmv(a, alpha) - rhs;
    const double res = weighted_norm(mass_n, f);
    st.residual_history.push_back(res);
    if (res <= target) return alpha;
    if (it == config.max_iter) break;

    if (config.strategy == NonlinearSolveConfig::Strategy::Newton) {
      const SparseMatrixCSR n = system.stiffness_jacobian_correction(t_n, alpha);
      const SparseMatrixCSR jac =
          linalg::add(linalg::scale_add(lead, mass_n, 1.0, a), n);
      alpha += sparse_lu_solve(jac, -f, "step_bdf_implicit");
    } else {
      const SparseMatrixCSR k = linalg::scale_add(lead, mass_n, 1.0, a);
      alpha = linalg::cg_solve(k, rhs, config.linear_tol).x;
    }
    ++st.iterations;
  }
  throw NonlinearSolveFailure("step_bdf_implicit: no convergence within max_iter",
                              st.residual_history);
}

VecX step_bdf_linearly_implicit_core(const QuasilinearSystem& system,
                                     const BdfCoefficients& coeffs,
                                     const BdfHistory& history,
                                     const SparseMatrixCSR& mass_n, double t_n,
                                     double tau,
                                     const NonlinearSolveConfig& config) {
  const VecX rhs = bdf_rhs(system, coeffs, history, t_n, tau);
  const VecX extrapolated = bdf_extrapolate(coeffs, history);
  const SparseMatrixCSR a = system.stiffness(t_n, extrapolated);
  const SparseMatrixCSR k =
      linalg::scale_add(coeffs.delta[0] / tau, mass_n, 1.0, a);
  return linalg::cg_solve(k, rhs, config.linear_tol).x;
}

VecX step_rk_implicit_core(const QuasilinearSystem& system,
                           const SparseMatrixCSR& mass_n, const VecX& alpha_n,
                           double t_n, double tau, const ButcherTableau& tb,
                           const NonlinearSolveConfig& config, StepStats* stats,
                           SparseMatrixCSR* final_mass_out) {
  if (!is_stiffly_accurate(tb))
    throw std::invalid_argument("step_rk_implicit: tableau is not stiffly accurate");
  const Eigen::FullPivLU<MatX> alu(tb.a);
  if (!alu.isInvertible())
    throw NonlinearSolveFailure("step_rk_implicit: singular stage matrix");
  const MatX w = alu.inverse();

  const int s = tb.stages;
  const int n = system.size();
  std::vector<double> stage_time(s);
  std::vector<SparseMatrixCSR> stage_mass(s);
  std::vector<VecX> stage_load(s);
  for (int i = 0; i < s; ++i) {
    stage_time[i] = t_n + tb.c[i] * tau;
    stage_mass[i] = system.mass(stage_time[i]);
    stage_load[i] = system.load(stage_time[i]);
  }
  const VecX mass_alpha_n = linalg::spmv(mass_n, alpha_n);

  std::vector<VecX> x(s, alpha_n);
  StepStats local;
  StepStats& st = stats ? *stats : local;
  st.iterations = 0;
  st.residual_history.clear();

  // The achievable residual floor grows like the equation terms themselves;
  // used to accept machine-precision stagnation at very small step sizes.
  double scale = std::sqrt(std::max(alpha_n.dot(mass_alpha_n), 0.0)) / tau;
  for (int i = 0; i < s; ++i) scale += weighted_norm(mass_n, stage_load[i]);

  // Scaled stage equations: for each stage i
  //   G_i = (1/tau) sum_j W_ij (M_j x_j - M_n alpha_n) + A(x_i) x_i - b_i
  // with Jacobian blocks (W_ij/tau) M_j + delta_ij (A_i + N_i).
  std::vector<VecX> mass_x(s);
  std::vector<SparseMatrixCSR> stiff(s);
  double res0 = -1.0;
  double prev_res = -1.0;
  for (int it = 0; it <= config.max_iter; ++it) {
    VecX g = VecX::Zero(s * n);
    for (int j = 0; j < s; ++j) mass_x[j] = linalg::spmv(stage_mass[j], x[j]);
    double res_sq = 0.0;
    for (int i = 0; i < s; ++i) {
      stiff[i] = system.stiffness(stage_time[i], x[i]);
      VecX gi = linalg::spmv(stiff[i], x[i]) - stage_load[i];
      for (int j = 0; j < s; ++j)
        gi += (w(i, j) / tau) * (mass_x[j] - mass_alpha_n);
      const double r = weighted_norm(mass_n, gi);
      res_sq += r * r;
      g.segment(i * n, n) = gi;
    }
    const double res = std::sqrt(res_sq);
    st.residual_history.push_back(res);
    if (res0 < 0.0) res0 = res;
    if (res <= config.rel_tol * res0 || res == 0.0) break;
    const bool stagnated_at_floor =
        it >= 1 && res >= 0.5 * prev_res && res <= 1e-8 * std::max(res0, scale);
    if (stagnated_at_floor) break;
    prev_res = res;
    if (it == config.max_iter)
      throw NonlinearSolveFailure("step_rk_implicit: no convergence within max_iter",
                                  st.residual_history);

    std::vector<linalg::Triplet> ts;
    for (int i = 0; i < s; ++i) {
      const SparseMatrixCSR ni =
          system.stiffness_jacobian_correction(stage_time[i], x[i]);
      const SparseMatrixCSR diag = linalg::add(stiff[i], ni);
      for (int r = 0; r < n; ++r)
        for (int p = diag.row_offsets()[r]; p < diag.row_offsets()[r + 1]; ++p)
          ts.push_back({i * n + r, i * n + diag.col_indices()[p], diag.values()[p]});
      for (int j = 0; j < s; ++j) {
        const double factor = w(i, j) / tau;
        const auto& mj = stage_mass[j];
        for (int r = 0; r < n; ++r)
          for (int p = mj.row_offsets()[r]; p < mj.row_offsets()[r + 1]; ++p)
            ts.push_back({i * n + r, j * n + mj.col_indices()[p],
                          factor * mj.values()[p]});
      }
    }
    const SparseMatrixCSR jac =
        SparseMatrixCSR::from_triplets(s * n, s * n, std::move(ts));
    const VecX step = sparse_lu_solve(jac, -g, "step_rk_implicit");
    for (int i = 0; i < s; ++i) x[i] += step.segment(i * n, n);
    ++st.iterations;
  }
  if (final_mass_out) *final_mass_out = std::move(stage_mass[s - 1]);
  return x[s - 1]; // stiffly accurate: alpha_{n+1} = last stage
}

} // namespace

VecX step_bdf_implicit(const QuasilinearSystem& system,
                       const BdfCoefficients& coeffs, const BdfHistory& history,
                       double t_n, double tau, const NonlinearSolveConfig& config,
                       StepStats* stats) {
  const SparseMatrixCSR mass_n = system.mass(t_n);
  return step_bdf_implicit_core(system, coeffs, history, mass_n, t_n, tau,
                                config, stats);
}

VecX step_bdf_linearly_implicit(const QuasilinearSystem& system,
                                const BdfCoefficients& coeffs,
                                const BdfHistory& history, double t_n,
                                double tau, const NonlinearSolveConfig& config) {
  const SparseMatrixCSR mass_n = system.mass(t_n);
  return step_bdf_linearly_implicit_core(system, coeffs, history, mass_n, t_n,
                                         tau, config);
}

VecX step_rk_implicit(const QuasilinearSystem& system, const VecX& alpha_n,
                      double t_n, double tau, const ButcherTableau& tableau,
                      const NonlinearSolveConfig& config, StepStats* stats) {
  const SparseMatrixCSR mass_n = system.mass(t_n);
  return step_rk_implicit_core(system, mass_n, alpha_n, t_n, tau, tableau,
                               config, stats, nullptr);
}

// ---------------------------------------------------------------------------
// Driver

IntegratorSpec parse_integrator(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  const auto fail = [&]() -> IntegratorSpec {
    throw std::invalid_argument(
        "unknown integrator '" + s +
        "'; expected \"be\" | \"bdf<k>\" | \"libdf<k>\" | \"radau<s>\" with "
        "k in 1..5 and s in 1..3");
  };
  if (s == "be") return {IntegratorSpec::Family::Bdf, 1};
  auto parse_num = [&](std::size_t prefix_len) -> int {
    const std::string num = s.substr(prefix_len);
    if (num.empty() || num.find_first_not_of("0123456789") != std::string::npos)
      return -1;
    return std::stoi(num);
  };
  if (s.rfind("bdf", 0) == 0) {
    const int k = parse_num(3);
    if (k < 1 || k > 5) fail();
    return {IntegratorSpec::Family::Bdf, k};
  }
  if (s.rfind("libdf", 0) == 0) {
    const int k = parse_num(5);
    if (k < 1 || k > 5) fail();
    return {IntegratorSpec::Family::LinearlyImplicitBdf, k};
  }
  if (s.rfind("radau", 0) == 0) {
    const int st = parse_num(5);
    if (st < 1 || st > 3) fail();
    return {IntegratorSpec::Family::RadauIIA, st};
  }
  return fail();
}

std::string to_string(const IntegratorSpec& spec) {
  switch (spec.family) {
    case IntegratorSpec::Family::Bdf:
      return "bdf" + std::to_string(spec.order);
    case IntegratorSpec::Family::LinearlyImplicitBdf:
      return "libdf" + std::to_string(spec.order);
    case IntegratorSpec::Family::RadauIIA:
      return "radau" + std::to_string(spec.order);
  }
  return "?";
}

int nominal_temporal_order(const IntegratorSpec& spec) {
  return spec.family == IntegratorSpec::Family::RadauIIA ? 2 * spec.order - 1
                                                         : spec.order;
}

Trajectory integrate(const QuasilinearSystem& system, const IntegratorSpec& spec,
                     double tau, double T, const VecX& alpha0,
                     const IntegrateOptions& options) {
  if (!(tau > 0.0)) throw std::invalid_argument("integrate: tau must be positive");
  if (alpha0.size() != system.size())
    throw std::invalid_argument("integrate: initial data length mismatch");
  const long n_steps = std::lround(T / tau);
  if (n_steps < 1 || std::abs(n_steps * tau - T) > 1e-9 * std::max(1.0, T))
    throw std::invalid_argument("integrate: tau does not divide T");
  const int stride = std::max(1, options.record_stride);

  Trajectory traj;
  traj.tau = tau;
  auto record = [&](long n, const VecX& state) {
    if (n == 0 || n == n_steps || n % stride == 0) {
      traj.times.push_back(n * tau);
      traj.steps.push_back(n);
      traj.states.push_back(state);
    }
  };
  record(0, alpha0);

  auto step_failure = [](const std::exception& e, long n) {
    return StepFailure("step " + std::to_string(n) + ": " + e.what(), n);
  };

  if (spec.family == IntegratorSpec::Family::RadauIIA) {
    const ButcherTableau tb = radau_iia(spec.order);
    VecX alpha = alpha0;
    SparseMatrixCSR mass_n = system.mass(0.0);
    for (long n = 0; n < n_steps; ++n) {
      try {
        SparseMatrixCSR mass_next;
        alpha = step_rk_implicit_core(system, mass_n, alpha, n * tau, tau, tb,
                                      options.nonlinear, nullptr, &mass_next);
        mass_n = std::move(mass_next);
      } catch (const NonlinearSolveFailure& e) {
        throw step_failure(e, n + 1);
      } catch (const linalg::CgFailure& e) {
        throw step_failure(e, n + 1);
      }
      record(n + 1, alpha);
    }
    return traj;
  }

  // BDF families: bootstrap the k-1 missing starting values.
  const int k = spec.order;
  const BdfCoefficients coeffs = bdf_coefficients(k);
  std::deque<VecX> alphas;      // newest first
  std::deque<VecX> mass_alphas; // newest first
  auto push_state = [&](long n, const VecX& alpha) {
    mass_alphas.emplace_front(linalg::spmv(system.mass(n * tau), alpha));
    alphas.emplace_front(alpha);
    if (static_cast<int>(alphas.size()) > k) {
      alphas.pop_back();
      mass_alphas.pop_back();
    }
  };

  push_state(0, alpha0);
  {
    const ButcherTableau bootstrap = radau_iia(2);
    VecX alpha = alpha0;
    for (long n = 1; n <= std::min<long>(k - 1, n_steps); ++n) {
      if (options.exact_start) {
        alpha = options.exact_start(n * tau);
      } else {
        try {
          alpha = step_rk_implicit(system, alpha, (n - 1) * tau, tau, bootstrap,
                                   options.nonlinear);
        } catch (const NonlinearSolveFailure& e) {
          throw step_failure(e, n);
        } catch (const linalg::CgFailure& e) {
          throw step_failure(e, n);
        }
      }
      push_state(n, alpha);
      record(n, alpha);
    }
  }

  const bool linearly_implicit =
      spec.family == IntegratorSpec::Family::LinearlyImplicitBdf;
  for (long n = k; n <= n_steps; ++n) {
    const double t_n = n * tau;
    const BdfHistory history{{alphas.begin(), alphas.end()},
                             {mass_alphas.begin(), mass_alphas.end()}};
    VecX alpha;
    try {
      const SparseMatrixCSR mass_n = system.mass(t_n);
      alpha = linearly_implicit
                  ? step_bdf_linearly_implicit_core(system, coeffs, history,
                                                    mass_n, t_n, tau,
                                                    options.nonlinear)
                  : step_bdf_implicit_core(system, coeffs, history, mass_n, t_n,
                                           tau, options.nonlinear, nullptr);
      mass_alphas.emplace_front(linalg::spmv(mass_n, alpha));
      alphas.emplace_front(alpha);
      if (static_cast<int>(alphas.size()) > k) {
        alphas.pop_back();
        mass_alphas.pop_back();
      }
    } catch (const NonlinearSolveFailure& e) {
      throw step_failure(e, n);
    } catch (const linalg::CgFailure& e) {
      throw step_failure(e, n);
    }
    record(n, alpha);
  }
  return traj;
}

} // namespace esfem::timestepping
