#include "esfem/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "esfem/experiments.hpp"

namespace esfem::cli {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct GlobalOptions {
  std::string out_dir = ".";
  int threads = 1; // affects speed only, never results
  bool quiet = false;
};

std::string joined(const GlobalOptions& g, const std::string& name) {
  return (std::filesystem::path(g.out_dir) / name).string();
}

void print_table(const experiments::ErrorTable& table, std::ostream& os) {
  os << "level      dof   err_linf_l2    EOC   err_l2_h1      EOC\n";
  char buf[160], eoc1[16], eoc2[16];
  for (const auto& row : table.rows) {
    if (row.eoc_linf_l2)
      std::snprintf(eoc1, sizeof(eoc1), "%5.2f", *row.eoc_linf_l2);
    else
      std::snprintf(eoc1, sizeof(eoc1), "    -");
    if (row.eoc_l2_h1)
      std::snprintf(eoc2, sizeof(eoc2), "%5.2f", *row.eoc_l2_h1);
    else
      std::snprintf(eoc2, sizeof(eoc2), "    -");
    std::snprintf(buf, sizeof(buf), "%5d %8d   %.8e %s   %.8e %s\n", row.level,
                  row.dof, row.err_linf_l2, eoc1, row.err_l2_h1, eoc2);
    os << buf;
  }
  if (!table.failure.empty()) os << "failed: " << table.failure << "\n";
}

int cmd_mesh(const GlobalOptions& g, int level, double t,
             const std::string& out) {
  const auto em = mesh::make_evolving(level, geometry::SurfaceSpec{});
  const mesh::TriMesh m = mesh::mesh_at(em, t);
  const std::string path =
      std::filesystem::path(out).is_absolute() ? out : joined(g, out);
  mesh::write_mesh(m, path);
  if (!g.quiet) {
    std::cout << "vertices " << m.vertices.size() << "\n"
              << "triangles " << m.triangles.size() << "\n"
              << "h " << mesh::mesh_size_h(m) << "\n"
              << "admissibility " << mesh::admissibility_ratio(m) << "\n"
              << "wrote " << path << "\n";
  }
  return kExitOk;
}

struct SolveConfig {
  int level = 2;
  std::string integrator = "be";
  double tau = 0.00625;
  double T = 1.0;
  bool lift_quadrature = false;
  std::string problem = "benchmark"; // "benchmark" | "zero"
  timestepping::NonlinearSolveConfig nonlinear;
  std::string out = "solve_report.json";
};

SolveConfig parse_solve_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path);
  nlohmann::json j = nlohmann::json::parse(is);
  SolveConfig c;
  c.level = j.value("level", c.level);
  c.integrator = j.value("integrator", c.integrator);
  c.tau = j.value("tau", c.tau);
  c.T = j.value("T", c.T);
  c.lift_quadrature = j.value("lift_quadrature", c.lift_quadrature);
  c.problem = j.value("problem", c.problem);
  c.out = j.value("out", c.out);
  if (j.contains("nonlinear")) {
    const auto& n = j["nonlinear"];
    const std::string strategy = n.value("strategy", "newton");
    if (strategy == "picard")
      c.nonlinear.strategy = timestepping::NonlinearSolveConfig::Strategy::Picard;
    else if (strategy != "newton")
      throw std::invalid_argument("nonlinear.strategy must be newton or picard");
    c.nonlinear.rel_tol = n.value("rel_tol", c.nonlinear.rel_tol);
    c.nonlinear.max_iter = n.value("max_iter", c.nonlinear.max_iter);
    c.nonlinear.linear_tol = n.value("linear_tol", c.nonlinear.linear_tol);
    if (!(c.nonlinear.rel_tol > 0.0))
      throw std::invalid_argument("nonlinear.rel_tol must be > 0");
  }
  if (c.level < 0 || c.level > 8)
    throw std::invalid_argument("level must be in 0..8");
  if (!(c.tau > 0.0) || !(c.T > 0.0))
    throw std::invalid_argument("tau and T must be positive");
  if (c.problem != "benchmark" && c.problem != "zero")
    throw std::invalid_argument("problem must be benchmark or zero");
  return c;
}

int cmd_solve(const GlobalOptions& g, const std::string& config_path) {
  const SolveConfig c = parse_solve_config(config_path);
  const auto spec = timestepping::parse_integrator(c.integrator);
  const geometry::ProblemDefinition problem = c.problem == "zero"
                                                  ? geometry::zero_problem()
                                                  : geometry::benchmark_problem();
  const auto em = mesh::make_evolving(c.level, problem.surface);
  experiments::EsfemSystem system(em, problem, c.lift_quadrature);

  nlohmann::json report;
  report["config"] = {{"level", c.level},
                      {"integrator", c.integrator},
                      {"tau", c.tau},
                      {"T", c.T},
                      {"lift_quadrature", c.lift_quadrature},
                      {"problem", c.problem}};
  report["dof"] = system.size();
  report["h"] = mesh::mesh_size_h(mesh::mesh_at(em, 0.0));
  const std::string out_path = joined(g, c.out);

  const auto start = std::chrono::steady_clock::now();
  timestepping::IntegrateOptions options;
  options.nonlinear = c.nonlinear;
  try {
    const VecX alpha0 = system.interpolate_exact(0.0);
    const auto traj =
        timestepping::integrate(system, spec, c.tau, c.T, alpha0, options);
    report["err_linf_l2"] = experiments::error_linf_l2(traj, em, problem.exact);
    report["err_l2_h1"] = experiments::error_l2_h1(traj, em, problem.exact);
    {
      // final-time errors against the interpolated exact solution
      const mesh::TriMesh at_T = mesh::mesh_at(em, c.T);
      const VecX z = traj.states.back() -
                     assembly::nodal_interpolant(at_T, problem.exact, c.T);
      report["final_err_l2"] =
          assembly::discrete_norm_M(assembly::assemble_mass(at_T), z);
      report["final_err_h1"] = assembly::discrete_norm_A(
          assembly::assemble_stiffness_linear(at_T), z);
    }
    report["steps"] = traj.steps.back();
    report["status"] = "ok";
  } catch (const timestepping::StepFailure& e) {
    report["status"] = "failed";
    report["step_index"] = e.step_index;
    report["error"] = e.what();
    std::ofstream os(out_path);
    os << report.dump(2) << '\n';
    std::cerr << "solve failed: " << e.what() << "\n";
    return kExitNumerical;
  }
  report["wall_clock_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  std::ofstream os(out_path);
  if (!os) throw std::runtime_error("cannot open " + out_path);
  os << report.dump(2) << '\n';
  if (!g.quiet)
    std::cout << "err_linf_l2 " << report["err_linf_l2"] << "\nerr_l2_h1 "
              << report["err_l2_h1"] << "\nwrote " << out_path << "\n";
  return kExitOk;
}

struct ConvergenceCmd {
  std::string config_path;
  experiments::ConvergenceConfig config;
  bool elliptic = false;
  double elliptic_t = 0.5;
  std::string out_prefix = "convergence";
};

void load_convergence_config(const std::string& path,
                             experiments::ConvergenceConfig& c) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path);
  nlohmann::json j = nlohmann::json::parse(is);
  c.level_min = j.value("level_min", c.level_min);
  c.level_max = j.value("level_max", c.level_max);
  c.tau0 = j.value("tau0", c.tau0);
  c.tau_refinement = j.value("tau_refinement", c.tau_refinement);
  c.integrator = j.value("integrator", c.integrator);
  c.T = j.value("T", c.T);
  c.lift_quadrature = j.value("lift_quadrature", c.lift_quadrature);
  c.fixed_level = j.value("fixed_level", c.fixed_level);
  c.reference_refinement =
      j.value("reference_refinement", c.reference_refinement);
}

int cmd_convergence(const GlobalOptions& g, const ConvergenceCmd& cmd) {
  experiments::ErrorTable table;
  int reference_order = 1;
  if (cmd.elliptic) {
    table = experiments::elliptic_convergence_test(
        cmd.config.level_min, cmd.config.level_max, cmd.elliptic_t);
    reference_order = 2;
  } else {
    experiments::validate(cmd.config);
    reference_order = timestepping::nominal_temporal_order(
        timestepping::parse_integrator(cmd.config.integrator));
    table = experiments::run_convergence_study(cmd.config);
  }
  const std::string csv = joined(g, cmd.out_prefix + ".csv");
  const std::string plot = joined(g, cmd.out_prefix + ".gp");
  const std::string json = joined(g, cmd.out_prefix + ".json");
  experiments::write_csv(table, csv);
  experiments::emit_plot_script(table, plot, reference_order);
  experiments::write_json_report(table, cmd.config, json);
  if (!g.quiet) {
    print_table(table, std::cout);
    std::cout << "wrote " << csv << ", " << plot << ", " << json << "\n";
  }
  if (!table.failure.empty()) {
    std::cerr << "study failed: " << table.failure << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_check(const GlobalOptions& g, const std::string& spec_text) {
  using timestepping::IntegratorSpec;
  IntegratorSpec spec;
  try {
    spec = timestepping::parse_integrator(spec_text);
  } catch (const std::invalid_argument& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }
  bool pass = true;
  std::ostream& os = std::cout;
  if (spec.family == IntegratorSpec::Family::RadauIIA) {
    const auto tb = timestepping::radau_iia(spec.order);
    if (!g.quiet) {
      os << "Radau IIA, " << tb.stages << " stage(s), classical order "
         << tb.classical_order << ", stage order " << tb.stage_order << "\n";
      os << "c: " << tb.c.transpose() << "\n";
      os << "A:\n" << tb.a << "\n";
      os << "b: " << tb.b.transpose() << "\n";
    }
    const auto stab = timestepping::check_algebraic_stability(tb);
    const bool stiff = timestepping::is_stiffly_accurate(tb);
    const bool invertible = timestepping::has_invertible_coefficient_matrix(tb);
    if (!g.quiet) {
      os << "algebraic stability: " << (stab.stable ? "yes" : "NO")
         << " (smallest eigenvalue " << stab.smallest_eigenvalue << ")\n";
      os << "stiffly accurate: " << (stiff ? "yes" : "NO") << "\n";
      os << "invertible coefficient matrix: " << (invertible ? "yes" : "NO")
         << "\n";
    }
    pass = stab.stable && stiff && invertible;
  } else {
    const auto coeffs = timestepping::bdf_coefficients(spec.order);
    if (!g.quiet) {
      os << "BDF, k = " << coeffs.steps
         << (spec.family == IntegratorSpec::Family::LinearlyImplicitBdf
                 ? " (linearly implicit)"
                 : "")
         << "\n";
      os << "delta: " << coeffs.delta.transpose() << "\n";
      os << "gamma: " << coeffs.gamma.transpose() << "\n";
    }
    const auto zs = timestepping::check_zero_stability(spec.order);
    if (!g.quiet) {
      os << "root moduli:";
      for (double m : zs.root_moduli) os << ' ' << m;
      os << "\nzero-stable: " << (zs.stable ? "yes" : "NO") << "\n";
    }
    pass = zs.stable;
  }
  if (!g.quiet) os << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? kExitOk : kExitNumerical;
}

} // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Evolving-surface finite elements for a quasilinear parabolic "
               "problem on a moving closed surface"};
  app.require_subcommand(1);
  app.fallthrough(); // global flags may appear after the subcommand

  GlobalOptions g;
  app.add_option("--out-dir", g.out_dir, "Directory for output files")
      ->capture_default_str();
  app.add_option("--threads", g.threads,
                 "Worker threads (affects speed only, never results)")
      ->check(CLI::Range(1, 1024))
      ->capture_default_str();
  app.add_flag("--quiet", g.quiet, "Suppress normal output");

  auto* mesh_cmd = app.add_subcommand(
      "mesh", "Write a mesh file for the surface evolved to time t");
  int mesh_level = 2;
  double mesh_t = 0.0;
  std::string mesh_out = "mesh.txt";
  mesh_cmd->add_option("--level", mesh_level, "Refinement level (0..8)")
      ->capture_default_str();
  mesh_cmd->add_option("--t", mesh_t, "Evolution time")->capture_default_str();
  mesh_cmd->add_option("--out", mesh_out, "Output path")->capture_default_str();

  auto* solve_cmd = app.add_subcommand(
      "solve", "Run one (level, integrator, tau) solve from a JSON config");
  std::string solve_config;
  solve_cmd->add_option("--config", solve_config, "JSON config path")
      ->required();
  solve_cmd->footer(
      "Config schema: {\"level\": 2, \"integrator\": \"be\", \"tau\": 0.00625,\n"
      "  \"T\": 1.0, \"lift_quadrature\": false, \"problem\": \"benchmark\"|\"zero\",\n"
      "  \"nonlinear\": {\"strategy\": \"newton\"|\"picard\", \"rel_tol\": 1e-10,\n"
      "                 \"max_iter\": 50, \"linear_tol\": 1e-12},\n"
      "  \"out\": \"solve_report.json\"}  (all fields optional)");

  auto* conv_cmd = app.add_subcommand(
      "convergence", "Run a convergence study; writes CSV, plot script, JSON");
  ConvergenceCmd conv;
  std::string conv_config;
  conv_cmd->add_option("--config", conv_config, "JSON config path");
  conv_cmd->add_option("--integrator", conv.config.integrator,
                       "be | bdf<k> | libdf<k> | radau<s>")
      ->capture_default_str();
  conv_cmd->add_option("--level-min", conv.config.level_min, "First level")
      ->capture_default_str();
  conv_cmd->add_option("--level-max", conv.config.level_max, "Last level")
      ->capture_default_str();
  conv_cmd->add_option("--tau0", conv.config.tau0, "Step size on first level")
      ->capture_default_str();
  conv_cmd
      ->add_option("--tau-refinement", conv.config.tau_refinement,
                   "tau division factor per level")
      ->capture_default_str();
  conv_cmd->add_option("--T", conv.config.T, "Final time")
      ->capture_default_str();
  conv_cmd->add_flag("--lift-quadrature", conv.config.lift_quadrature,
                     "Lift load quadrature points to the exact surface");
  conv_cmd->add_option(
      "--fixed-level", conv.config.fixed_level,
      "Temporal study on this fixed mesh level (errors vs a self-refinement "
      "reference at tau_min/reference-refinement)");
  conv_cmd
      ->add_option("--reference-refinement", conv.config.reference_refinement,
                   "Reference step refinement for --fixed-level")
      ->capture_default_str();
  conv_cmd->add_flag("--elliptic", conv.elliptic,
                     "Run the static elliptic convergence test instead");
  conv_cmd->add_option("--elliptic-t", conv.elliptic_t,
                       "Surface time for --elliptic")
      ->capture_default_str();
  conv_cmd->add_option("--out-prefix", conv.out_prefix, "Output name prefix")
      ->capture_default_str();
  conv_cmd->footer(
      "Config schema: {\"level_min\": 1, \"level_max\": 4, \"tau0\": 0.1,\n"
      "  \"tau_refinement\": 4, \"integrator\": \"be\", \"T\": 1.0,\n"
      "  \"lift_quadrature\": false, \"fixed_level\": -1,\n"
      "  \"reference_refinement\": 256}  (all fields optional; defaults run\n"
      "the benchmark ladder: levels 1..4, tau 0.1 quartered per level)");

  auto* check_cmd = app.add_subcommand(
      "check", "Check stability properties of an integrator");
  std::string check_spec;
  check_cmd->add_option("spec", check_spec, "be | bdf<k> | libdf<k> | radau<s>")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e); // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (g.out_dir != "." && !g.out_dir.empty())
      std::filesystem::create_directories(g.out_dir);
    if (mesh_cmd->parsed()) {
      if (mesh_level < 0 || mesh_level > 8) {
        std::cerr << "mesh: --level must be in 0..8\n";
        return kExitUsage;
      }
      return cmd_mesh(g, mesh_level, mesh_t, mesh_out);
    }
    if (solve_cmd->parsed()) return cmd_solve(g, solve_config);
    if (conv_cmd->parsed()) {
      if (!conv_config.empty()) {
        // File values fill in whatever was not passed as a flag.
        const experiments::ConvergenceConfig flags = conv.config;
        experiments::ConvergenceConfig merged;
        load_convergence_config(conv_config, merged);
        auto passed = [&](const std::string& name) {
          return conv_cmd->count("--" + name) > 0;
        };
        if (passed("integrator")) merged.integrator = flags.integrator;
        if (passed("level-min")) merged.level_min = flags.level_min;
        if (passed("level-max")) merged.level_max = flags.level_max;
        if (passed("tau0")) merged.tau0 = flags.tau0;
        if (passed("tau-refinement")) merged.tau_refinement = flags.tau_refinement;
        if (passed("T")) merged.T = flags.T;
        if (passed("fixed-level")) merged.fixed_level = flags.fixed_level;
        if (passed("reference-refinement"))
          merged.reference_refinement = flags.reference_refinement;
        if (passed("lift-quadrature"))
          merged.lift_quadrature = flags.lift_quadrature;
        conv.config = merged;
      }
      return cmd_convergence(g, conv);
    }
    if (check_cmd->parsed()) return cmd_check(g, check_spec);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const timestepping::StepFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const timestepping::NonlinearSolveFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const linalg::CgFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}

} // namespace esfem::cli
