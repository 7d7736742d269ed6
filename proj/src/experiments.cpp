#include "esfem/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace esfem::experiments {

using linalg::SparseMatrixCSR;

// ---------------------------------------------------------------------------
// EsfemSystem

EsfemSystem::EsfemSystem(mesh::EvolvingMesh em,
                         geometry::ProblemDefinition problem,
                         bool lift_quadrature)
    : emesh_(std::move(em)), problem_(std::move(problem)),
      lift_(lift_quadrature),
      assembler_(emesh_.reference.triangles,
                 static_cast<int>(emesh_.reference.vertices.size())),
      positions_time_(std::numeric_limits<double>::quiet_NaN()) {}

const std::vector<Vec3>& EsfemSystem::positions(double t) const {
  if (!(positions_time_ == t)) {
    mesh::positions_at(emesh_, t, positions_);
    positions_time_ = t;
  }
  return positions_;
}

int EsfemSystem::size() const {
  return static_cast<int>(emesh_.reference.vertices.size());
}

SparseMatrixCSR EsfemSystem::mass(double t) const {
  return assembler_.mass(positions(t));
}

SparseMatrixCSR EsfemSystem::stiffness(double t, const VecX& alpha) const {
  return assembler_.stiffness_nonlinear(positions(t), alpha,
                                        problem_.nonlinearity);
}

SparseMatrixCSR EsfemSystem::stiffness_jacobian_correction(
    double t, const VecX& alpha) const {
  return assembler_.newton_correction(positions(t), alpha,
                                      problem_.nonlinearity);
}

VecX EsfemSystem::load(double t) const {
  if (lift_) {
    const geometry::SurfaceSpec spec = emesh_.surface;
    const assembly::PointMap lift = [spec, t](const Vec3& x) {
      return geometry::closest_point(spec, x, t);
    };
    return assembler_.load(positions(t), problem_.rhs, t,
                           assembly::degree4_rule(), &lift);
  }
  return assembler_.load(positions(t), problem_.rhs, t);
}

VecX EsfemSystem::interpolate_exact(double t) const {
  return assembly::nodal_interpolant(positions(t), problem_.exact, t);
}

// ---------------------------------------------------------------------------
// Error norms

namespace {

template <typename StateError>
double accumulate_errors(const Trajectory& traj, const mesh::EvolvingMesh& em,
                         StateError&& state_error, bool take_max) {
  assembly::OperatorAssembler assembler(
      em.reference.triangles, static_cast<int>(em.reference.vertices.size()));
  std::vector<Vec3> positions;
  double max_err = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    if (traj.steps[i] == 0) continue;
    mesh::positions_at(em, traj.times[i], positions);
    const double e = state_error(assembler, positions, i);
    max_err = std::max(max_err, e);
    sum_sq += e * e;
  }
  return take_max ? max_err : std::sqrt(traj.tau * sum_sq);
}

// Maps each recorded step of `traj` to the matching entry of `ref`.
std::vector<std::size_t> match_reference(const Trajectory& traj,
                                         const Trajectory& ref) {
  const double ratio_real = traj.tau / ref.tau;
  const long ratio = std::lround(ratio_real);
  if (ratio < 1 || std::abs(ratio_real - ratio) > 1e-9)
    throw std::invalid_argument(
        "reference trajectory step size is not a divisor of the trajectory's");
  std::unordered_map<long, std::size_t> by_step;
  for (std::size_t j = 0; j < ref.steps.size(); ++j)
    by_step.emplace(ref.steps[j], j);
  std::vector<std::size_t> match(traj.steps.size());
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    const auto it = by_step.find(traj.steps[i] * ratio);
    if (it == by_step.end())
      throw std::invalid_argument(
          "reference trajectory does not contain all trajectory times");
    match[i] = it->second;
  }
  return match;
}

} // namespace

double error_linf_l2(const Trajectory& traj, const mesh::EvolvingMesh& em,
                     const assembly::PointFunction& exact) {
  return accumulate_errors(
      traj, em,
      [&](const assembly::OperatorAssembler& assembler,
          const std::vector<Vec3>& positions, std::size_t i) {
        const VecX z = traj.states[i] - assembly::nodal_interpolant(
                                            positions, exact, traj.times[i]);
        return assembly::discrete_norm_M(assembler.mass(positions), z);
      },
      /*take_max=*/true);
}

double error_l2_h1(const Trajectory& traj, const mesh::EvolvingMesh& em,
                   const assembly::PointFunction& exact) {
  return accumulate_errors(
      traj, em,
      [&](const assembly::OperatorAssembler& assembler,
          const std::vector<Vec3>& positions, std::size_t i) {
        const VecX z = traj.states[i] - assembly::nodal_interpolant(
                                            positions, exact, traj.times[i]);
        return assembly::discrete_norm_A(assembler.stiffness_linear(positions), z);
      },
      /*take_max=*/false);
}

double error_linf_l2_vs_reference(const Trajectory& traj, const Trajectory& ref,
                                  const mesh::EvolvingMesh& em) {
  const auto match = match_reference(traj, ref);
  return accumulate_errors(
      traj, em,
      [&](const assembly::OperatorAssembler& assembler,
          const std::vector<Vec3>& positions, std::size_t i) {
        const VecX z = traj.states[i] - ref.states[match[i]];
        return assembly::discrete_norm_M(assembler.mass(positions), z);
      },
      /*take_max=*/true);
}

double error_l2_h1_vs_reference(const Trajectory& traj, const Trajectory& ref,
                                const mesh::EvolvingMesh& em) {
  const auto match = match_reference(traj, ref);
  return accumulate_errors(
      traj, em,
      [&](const assembly::OperatorAssembler& assembler,
          const std::vector<Vec3>& positions, std::size_t i) {
        const VecX z = traj.states[i] - ref.states[match[i]];
        return assembly::discrete_norm_A(assembler.stiffness_linear(positions), z);
      },
      /*take_max=*/false);
}

namespace {

template <typename Norm>
double final_error_vs_reference(const Trajectory& traj, const Trajectory& ref,
                                const mesh::EvolvingMesh& em, Norm&& norm) {
  if (traj.states.empty()) throw std::invalid_argument("empty trajectory");
  const auto match = match_reference(traj, ref);
  const std::size_t last = traj.states.size() - 1;
  assembly::OperatorAssembler assembler(
      em.reference.triangles, static_cast<int>(em.reference.vertices.size()));
  const auto positions = mesh::positions_at(em, traj.times[last]);
  const VecX z = traj.states[last] - ref.states[match[last]];
  return norm(assembler, positions, z);
}

} // namespace

double final_error_m_vs_reference(const Trajectory& traj, const Trajectory& ref,
                                  const mesh::EvolvingMesh& em) {
  return final_error_vs_reference(
      traj, ref, em,
      [](const assembly::OperatorAssembler& assembler,
         const std::vector<Vec3>& positions, const VecX& z) {
        return assembly::discrete_norm_M(assembler.mass(positions), z);
      });
}

double final_error_a_vs_reference(const Trajectory& traj, const Trajectory& ref,
                                  const mesh::EvolvingMesh& em) {
  return final_error_vs_reference(
      traj, ref, em,
      [](const assembly::OperatorAssembler& assembler,
         const std::vector<Vec3>& positions, const VecX& z) {
        return assembly::discrete_norm_A(assembler.stiffness_linear(positions), z);
      });
}

std::vector<double> eoc(const std::vector<double>& errors) {
  for (double e : errors)
    if (!(e > 0.0))
      throw std::invalid_argument("eoc: errors must be positive");
  std::vector<double> out;
  for (std::size_t i = 1; i < errors.size(); ++i)
    out.push_back(std::log2(errors[i - 1] / errors[i]));
  return out;
}

// ---------------------------------------------------------------------------
// Studies

void validate(const ConvergenceConfig& config) {
  if (config.level_min > config.level_max)
    throw std::invalid_argument("config: empty level range");
  if (config.level_min < 0 || config.level_max > 8)
    throw std::invalid_argument("config: levels must be in 0..8");
  if (!(config.tau0 > 0.0)) throw std::invalid_argument("config: tau0 must be > 0");
  if (config.tau_refinement < 2)
    throw std::invalid_argument("config: tau_refinement must be >= 2");
  if (!(config.T > 0.0)) throw std::invalid_argument("config: T must be > 0");
  if (config.fixed_level > 8)
    throw std::invalid_argument("config: fixed_level must be <= 8");
  if (config.reference_refinement < 2)
    throw std::invalid_argument("config: reference_refinement must be >= 2");
  timestepping::parse_integrator(config.integrator);
  geometry::validate(config.surface);
}

namespace {

void fill_eoc_columns(ErrorTable& table) {
  for (std::size_t i = 1; i < table.rows.size(); ++i) {
    auto& row = table.rows[i];
    const auto& prev = table.rows[i - 1];
    if (prev.err_linf_l2 > 0.0 && row.err_linf_l2 > 0.0)
      row.eoc_linf_l2 = std::log2(prev.err_linf_l2 / row.err_linf_l2);
    if (prev.err_l2_h1 > 0.0 && row.err_l2_h1 > 0.0)
      row.eoc_l2_h1 = std::log2(prev.err_l2_h1 / row.err_l2_h1);
  }
}

double seconds_since(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

} // namespace

ErrorTable run_convergence_study(const ConvergenceConfig& config,
                                 const geometry::ProblemDefinition* problem) {
  validate(config);
  const geometry::ProblemDefinition prob =
      problem ? *problem : geometry::benchmark_problem(config.surface);
  const auto spec = timestepping::parse_integrator(config.integrator);
  timestepping::IntegrateOptions options;
  options.nonlinear = config.nonlinear;

  ErrorTable table;
  const bool temporal = config.fixed_level >= 0;

  // Self-refinement reference for the temporal mode.
  Trajectory reference;
  mesh::EvolvingMesh fixed_mesh;
  std::unique_ptr<EsfemSystem> fixed_system;
  if (temporal) {
    fixed_mesh = mesh::make_evolving(config.fixed_level, prob.surface);
    fixed_system = std::make_unique<EsfemSystem>(fixed_mesh, prob,
                                                 config.lift_quadrature);
    const int count = config.level_max - config.level_min;
    const double tau_min = config.tau0 / std::pow(config.tau_refinement, count);
    const double tau_ref = tau_min / config.reference_refinement;
    timestepping::IntegrateOptions ref_options = options;
    ref_options.record_stride = config.reference_refinement;
    const VecX alpha0 = fixed_system->interpolate_exact(0.0);
    try {
      reference = timestepping::integrate(*fixed_system, spec, tau_ref,
                                          config.T, alpha0, ref_options);
    } catch (const std::exception& e) {
      table.failure = std::string("reference run: ") + e.what();
      return table;
    }
  }

  for (int level = config.level_min; level <= config.level_max; ++level) {
    const int idx = level - config.level_min;
    const double tau = config.tau0 / std::pow(config.tau_refinement, idx);
    const auto start = std::chrono::steady_clock::now();
    try {
      ErrorTableRow row;
      row.level = level;
      row.tau = tau;
      if (temporal) {
        row.dof = fixed_system->size();
        row.h = mesh::mesh_size_h(mesh::mesh_at(fixed_mesh, 0.0));
        const VecX alpha0 = fixed_system->interpolate_exact(0.0);
        const Trajectory traj = timestepping::integrate(
            *fixed_system, spec, tau, config.T, alpha0, options);
        row.err_linf_l2 = final_error_m_vs_reference(traj, reference, fixed_mesh);
        row.err_l2_h1 = final_error_a_vs_reference(traj, reference, fixed_mesh);
      } else {
        const auto em = mesh::make_evolving(level, prob.surface);
        EsfemSystem system(em, prob, config.lift_quadrature);
        row.dof = system.size();
        row.h = mesh::mesh_size_h(mesh::mesh_at(em, 0.0));
        const VecX alpha0 = system.interpolate_exact(0.0);
        const Trajectory traj =
            timestepping::integrate(system, spec, tau, config.T, alpha0, options);
        row.err_linf_l2 = error_linf_l2(traj, em, prob.exact);
        row.err_l2_h1 = error_l2_h1(traj, em, prob.exact);
      }
      table.rows.push_back(row);
      table.seconds_per_row.push_back(seconds_since(start));
    } catch (const std::exception& e) {
      table.failure = "level " + std::to_string(level) + ": " + e.what();
      break;
    }
  }
  fill_eoc_columns(table);
  return table;
}

double residual_dual_norm_diagnostic(const mesh::EvolvingMesh& em,
                                     const geometry::ProblemDefinition& problem,
                                     double t, double tau_fd) {
  if (!(tau_fd > 0.0))
    throw std::invalid_argument("residual diagnostic: tau_fd must be > 0");
  assembly::OperatorAssembler assembler(
      em.reference.triangles, static_cast<int>(em.reference.vertices.size()));
  const auto interpolant_and_mass = [&](double s) {
    const auto pos = mesh::positions_at(em, s);
    return std::make_pair(assembly::nodal_interpolant(pos, problem.exact, s),
                          assembler.mass(pos));
  };
  const auto [i_plus, m_plus] = interpolant_and_mass(t + tau_fd);
  const auto [i_minus, m_minus] = interpolant_and_mass(t - tau_fd);
  const auto pos = mesh::positions_at(em, t);
  const VecX i_t = assembly::nodal_interpolant(pos, problem.exact, t);
  const SparseMatrixCSR mass = assembler.mass(pos);
  const SparseMatrixCSR stiff_nl =
      assembler.stiffness_nonlinear(pos, i_t, problem.nonlinearity);
  const VecX b = assembler.load(pos, problem.rhs, t);

  const VecX w = (linalg::spmv(m_plus, i_plus) - linalg::spmv(m_minus, i_minus)) /
                     (2.0 * tau_fd) +
                 linalg::spmv(stiff_nl, i_t) - b;
  const VecX r = linalg::cg_solve(mass, w, 1e-12).x;
  const SparseMatrixCSR stiff = assembler.stiffness_linear(pos);
  return linalg::dual_norm(mass, stiff, r, 1e-12);
}

ErrorTable elliptic_convergence_test(int level_min, int level_max, double t,
                                     const geometry::SurfaceSpec& spec) {
  if (level_min > level_max || level_min < 0 || level_max > 8)
    throw std::invalid_argument("elliptic test: bad level range");
  geometry::validate(spec);
  const geometry::Nonlinearity nl = geometry::benchmark_nonlinearity();

  const auto w_field = [](const Vec3& x) {
    geometry::ScalarFieldData f;
    f.value = x[0] * x[1];
    f.gradient = Vec3(x[1], x[0], 0.0);
    f.hessian = Mat3::Zero();
    f.hessian(0, 1) = f.hessian(1, 0) = 1.0;
    return f;
  };
  const auto manufactured_g = [&](const Vec3& x, double time) {
    const auto w = w_field(x);
    const auto xi = geometry::exact_solution_field(x, time);
    return w.value - geometry::quasilinear_diffusion(spec, x, time, w, xi, nl);
  };

  ErrorTable table;
  for (int level = level_min; level <= level_max; ++level) {
    const auto start = std::chrono::steady_clock::now();
    const auto em = mesh::make_evolving(level, spec);
    const mesh::TriMesh m = mesh::mesh_at(em, t);
    assembly::OperatorAssembler assembler(m);
    const VecX xi_h = assembly::nodal_interpolant(
        m, [](const Vec3& x, double s) { return geometry::exact_solution(x, s); },
        t);
    const SparseMatrixCSR k =
        linalg::add(assembler.stiffness_nonlinear(m.vertices, xi_h, nl),
                    assembler.mass(m.vertices));
    const VecX b = assembler.load(m.vertices, manufactured_g, t);
    const VecX w_h = linalg::cg_solve(k, b, 1e-12).x;

    // Quadrature errors against the closed-form solution.
    const auto& rule = assembly::degree4_rule();
    double l2_sq = 0.0, h1_sq = 0.0;
    for (const auto& tri : m.triangles) {
      const Vec3& p0 = m.vertices[tri[0]];
      const Vec3& p1 = m.vertices[tri[1]];
      const Vec3& p2 = m.vertices[tri[2]];
      const auto elem = assembly::p1_element(p0, p1, p2);
      const Vec3 grad_wh = w_h[tri[0]] * elem.gradients[0] +
                           w_h[tri[1]] * elem.gradients[1] +
                           w_h[tri[2]] * elem.gradients[2];
      for (std::size_t q = 0; q < rule.points.size(); ++q) {
        const auto& bc = rule.points[q];
        const Vec3 x = bc[0] * p0 + bc[1] * p1 + bc[2] * p2;
        const double wq = rule.weights[q] * elem.area;
        const double wh_q =
            bc[0] * w_h[tri[0]] + bc[1] * w_h[tri[1]] + bc[2] * w_h[tri[2]];
        l2_sq += wq * std::pow(wh_q - x[0] * x[1], 2);
        const auto data = geometry::normal_projection_curvature(spec, x, t);
        const Vec3 grad_w = data.projection * Vec3(x[1], x[0], 0.0);
        h1_sq += wq * (grad_wh - grad_w).squaredNorm();
      }
    }

    ErrorTableRow row;
    row.level = level;
    row.dof = static_cast<int>(m.vertices.size());
    row.h = mesh::mesh_size_h(m);
    row.tau = 0.0;
    row.err_linf_l2 = std::sqrt(l2_sq);
    row.err_l2_h1 = std::sqrt(h1_sq);
    table.rows.push_back(row);
    table.seconds_per_row.push_back(seconds_since(start));
  }
  fill_eoc_columns(table);
  return table;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {
std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
} // namespace

void write_csv(const ErrorTable& table, std::ostream& os) {
  os << "level,dof,h,tau,err_linf_l2,eoc_linf_l2,err_l2_h1,eoc_l2_h1\n";
  for (const auto& row : table.rows) {
    os << row.level << ',' << row.dof << ',' << format_real(row.h) << ','
       << format_real(row.tau) << ',' << format_real(row.err_linf_l2) << ','
       << (row.eoc_linf_l2 ? format_real(*row.eoc_linf_l2) : "") << ','
       << format_real(row.err_l2_h1) << ','
       << (row.eoc_l2_h1 ? format_real(*row.eoc_l2_h1) : "") << '\n';
  }
}

void write_csv(const ErrorTable& table, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_csv: cannot open " + path);
  write_csv(table, os);
  if (!os) throw std::runtime_error("write_csv: write failed for " + path);
}

ErrorTable parse_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) ||
      line != "level,dof,h,tau,err_linf_l2,eoc_linf_l2,err_l2_h1,eoc_l2_h1")
    throw std::runtime_error("parse_csv: bad header");
  ErrorTable table;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    while (cells.size() < 8) cells.emplace_back();
    if (cells.size() != 8) throw std::runtime_error("parse_csv: bad row");
    ErrorTableRow row;
    row.level = std::stoi(cells[0]);
    row.dof = std::stoi(cells[1]);
    row.h = std::stod(cells[2]);
    row.tau = std::stod(cells[3]);
    row.err_linf_l2 = std::stod(cells[4]);
    if (!cells[5].empty()) row.eoc_linf_l2 = std::stod(cells[5]);
    row.err_l2_h1 = std::stod(cells[6]);
    if (!cells[7].empty()) row.eoc_l2_h1 = std::stod(cells[7]);
    table.rows.push_back(row);
  }
  return table;
}

void emit_plot_script(const ErrorTable& table, const std::string& path,
                      int reference_order) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("emit_plot_script: cannot open " + path);
  os << "# gnuplot script: log-log errors vs time step\n";
  if (table.rows.empty()) {
    os << "# empty table, nothing to plot\n";
    return;
  }
  std::string png = path;
  const auto dot = png.find_last_of('.');
  if (dot != std::string::npos) png.resize(dot);
  png += ".png";
  os << "set terminal pngcairo size 900,600\n";
  os << "set output '" << png << "'\n";
  os << "set logscale xy\n";
  os << "set xlabel 'time step'\n";
  os << "set ylabel 'error'\n";
  os << "set key bottom right\n";
  os << "$errors << EOD\n";
  for (const auto& row : table.rows)
    os << format_real(row.tau) << ' ' << format_real(row.err_linf_l2) << ' '
       << format_real(row.err_l2_h1) << '\n';
  os << "EOD\n";
  const double anchor =
      table.rows.front().err_linf_l2 /
      std::pow(table.rows.front().tau, double(reference_order));
  os << "ref(x) = " << format_real(anchor) << " * x**" << reference_order
     << "\n";
  os << "plot $errors using 1:2 with linespoints title 'Linf(L2)', \\\n"
     << "     $errors using 1:3 with linespoints title 'L2(H1)', \\\n"
     << "     ref(x) with lines dashtype 2 title 'order " << reference_order
     << "'\n";
  if (!os) throw std::runtime_error("emit_plot_script: write failed");
}

void write_json_report(const ErrorTable& table, const ConvergenceConfig& config,
                       const std::string& path) {
  nlohmann::json j;
  j["config"] = {
      {"level_min", config.level_min},
      {"level_max", config.level_max},
      {"tau0", config.tau0},
      {"tau_refinement", config.tau_refinement},
      {"integrator", config.integrator},
      {"T", config.T},
      {"lift_quadrature", config.lift_quadrature},
      {"fixed_level", config.fixed_level},
      {"reference_refinement", config.reference_refinement},
  };
  j["rows"] = nlohmann::json::array();
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    nlohmann::json r = {
        {"level", row.level},         {"dof", row.dof},
        {"h", row.h},                 {"tau", row.tau},
        {"err_linf_l2", row.err_linf_l2}, {"err_l2_h1", row.err_l2_h1},
    };
    if (row.eoc_linf_l2) r["eoc_linf_l2"] = *row.eoc_linf_l2;
    if (row.eoc_l2_h1) r["eoc_l2_h1"] = *row.eoc_l2_h1;
    if (i < table.seconds_per_row.size())
      r["wall_clock_seconds"] = table.seconds_per_row[i];
    j["rows"].push_back(r);
  }
  if (!table.failure.empty()) j["failure"] = table.failure;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_json_report: cannot open " + path);
  os << j.dump(2) << '\n';
  if (!os) throw std::runtime_error("write_json_report: write failed");
}

} // namespace esfem::experiments
