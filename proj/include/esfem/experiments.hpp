#pragma once

// Convergence studies with the manufactured solution: the assembled FEM
// system, discrete error norms, experimental orders of convergence, a
// residual dual-norm diagnostic, an elliptic convergence test and result
// serialization (CSV, gnuplot script, JSON report).

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "esfem/assembly.hpp"
#include "esfem/geometry.hpp"
#include "esfem/mesh.hpp"
#include "esfem/timestepping.hpp"

namespace esfem::experiments {

using timestepping::Trajectory;

// The evolving-surface FEM system d/dt(M alpha) + A(alpha) alpha = b for a
// problem definition on an evolving mesh.  Not safe for concurrent use of
// one instance (positions are cached per time); use one instance per run.
class EsfemSystem final : public timestepping::QuasilinearSystem {
public:
  EsfemSystem(mesh::EvolvingMesh em, geometry::ProblemDefinition problem,
              bool lift_quadrature = false);

  int size() const override;
  linalg::SparseMatrixCSR mass(double t) const override;
  linalg::SparseMatrixCSR stiffness(double t, const VecX& alpha) const override;
  linalg::SparseMatrixCSR stiffness_jacobian_correction(
      double t, const VecX& alpha) const override;
  VecX load(double t) const override;

  const mesh::EvolvingMesh& evolving_mesh() const { return emesh_; }
  const geometry::ProblemDefinition& problem() const { return problem_; }

  // Nodal interpolant of the exact solution at time t.
  VecX interpolate_exact(double t) const;

private:
  const std::vector<Vec3>& positions(double t) const;

  mesh::EvolvingMesh emesh_;
  geometry::ProblemDefinition problem_;
  bool lift_;
  assembly::OperatorAssembler assembler_;
  mutable std::vector<Vec3> positions_;
  mutable double positions_time_;
};

// max_{n >= 1} | alpha_n - I_h u(.,t_n) |_{M(t_n)}  over recorded states.
double error_linf_l2(const Trajectory& traj, const mesh::EvolvingMesh& em,
                     const assembly::PointFunction& exact);

// ( tau sum_{n >= 1} | alpha_n - I_h u(.,t_n) |_{A(t_n)}^2 )^{1/2}.
double error_l2_h1(const Trajectory& traj, const mesh::EvolvingMesh& em,
                   const assembly::PointFunction& exact);

// Same norms against a reference trajectory on the same mesh; the reference
// must contain every recorded time of `traj` (matching step grids).
double error_linf_l2_vs_reference(const Trajectory& traj, const Trajectory& ref,
                                  const mesh::EvolvingMesh& em);
double error_l2_h1_vs_reference(const Trajectory& traj, const Trajectory& ref,
                                const mesh::EvolvingMesh& em);

// |alpha_N - ref(T)|_{M(T)} resp. |.|_{A(T)}.  Pure temporal-order studies
// measure at the final time: the parabolic flow has damped the stiff
// startup transient of the interpolated initial data there, which would
// otherwise floor the Linf-in-time error at O(h^2) on fine meshes.
double final_error_m_vs_reference(const Trajectory& traj, const Trajectory& ref,
                                  const mesh::EvolvingMesh& em);
double final_error_a_vs_reference(const Trajectory& traj, const Trajectory& ref,
                                  const mesh::EvolvingMesh& em);

// EOC_k = log2(e_{k-1}/e_k); length is input length - 1.  Throws on
// non-positive errors.
std::vector<double> eoc(const std::vector<double>& errors);

struct ConvergenceConfig {
  int level_min = 1;
  int level_max = 4;
  double tau0 = 0.1;
  int tau_refinement = 4; // tau divided by this factor per level
  std::string integrator = "be";
  double T = 1.0;
  bool lift_quadrature = false;
  // >= 0 runs a temporal study on this fixed mesh level: rows are a tau
  // ladder and the columns hold final-time errors against a self-refinement
  // reference at tau_min / reference_refinement.
  int fixed_level = -1;
  int reference_refinement = 256;
  timestepping::NonlinearSolveConfig nonlinear;
  geometry::SurfaceSpec surface;
};

void validate(const ConvergenceConfig& config);

struct ErrorTableRow {
  int level = 0;
  int dof = 0;
  double h = 0.0;
  double tau = 0.0;
  double err_linf_l2 = 0.0;
  double err_l2_h1 = 0.0;
  std::optional<double> eoc_linf_l2;
  std::optional<double> eoc_l2_h1;
};

struct ErrorTable {
  std::vector<ErrorTableRow> rows;
  std::vector<double> seconds_per_row;
  std::string failure; // non-empty if a level failed; table is then partial
};

// Builds meshes, integrates and fills the table with both error norms and
// EOC columns.  Deterministic.  On a step failure the partial table is
// returned with the failure annotated.
ErrorTable run_convergence_study(const ConvergenceConfig& config,
                                 const geometry::ProblemDefinition* problem = nullptr);

// Dual norm ||M r||_* of the discrete residual of the interpolated exact
// solution, with a central finite-difference time derivative of step tau_fd.
double residual_dual_norm_diagnostic(const mesh::EvolvingMesh& em,
                                     const geometry::ProblemDefinition& problem,
                                     double t, double tau_fd);

// Static-surface elliptic test at time t: manufactures g so that w = x1 x2
// solves -div_G(A(xi) grad_G w) + w = g with xi the benchmark solution, then
// solves (A(xi_h) + M) w_h = load(g) per level and reports L2/H1 errors
// (quadrature against the closed-form solution) with EOCs.  The L2 error is
// stored in the err_linf_l2 column, the H1 error in err_l2_h1.
ErrorTable elliptic_convergence_test(int level_min, int level_max, double t,
                                     const geometry::SurfaceSpec& spec = {});

// CSV with header level,dof,h,tau,err_linf_l2,eoc_linf_l2,err_l2_h1,eoc_l2_h1
// and 17-significant-digit reals; EOC cells are empty where undefined.
void write_csv(const ErrorTable& table, std::ostream& os);
void write_csv(const ErrorTable& table, const std::string& path);
ErrorTable parse_csv(std::istream& is);

// Self-contained gnuplot script: log-log error-vs-tau curves with a
// reference line of slope `reference_order`.
void emit_plot_script(const ErrorTable& table, const std::string& path,
                      int reference_order);

void write_json_report(const ErrorTable& table, const ConvergenceConfig& config,
                       const std::string& path);

} // namespace esfem::experiments
