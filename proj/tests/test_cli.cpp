#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "esfem/cli.hpp"
#include "esfem/geometry.hpp"
#include "esfem/mesh.hpp"

namespace fs = std::filesystem;
using namespace esfem;

namespace {

int run_cli(std::initializer_list<const char*> args) {
  std::vector<const char*> argv = {"esfem"};
  argv.insert(argv.end(), args.begin(), args.end());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

struct OutDir {
  OutDir() : path(fs::temp_directory_path() / "esfem_cli_test") {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
  fs::path path;
};

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

} // namespace

TEST_CASE("mesh subcommand") {
  OutDir out;
  const std::string mesh_path = out.file("m.txt");
  CHECK(run_cli({"--quiet", "mesh", "--level", "2", "--t", "0", "--out",
                 mesh_path.c_str()}) == 0);
  std::ifstream is(mesh_path);
  REQUIRE(is.good());
  const auto m = mesh::read_mesh(is);
  CHECK(m.vertices.size() == 162);

  CHECK(run_cli({"--quiet", "mesh", "--level", "9", "--out",
                 out.file("never.txt").c_str()}) == 2);

  const std::string evolved = out.file("e.txt");
  CHECK(run_cli({"--quiet", "mesh", "--level", "1", "--t", "0.25", "--out",
                 evolved.c_str()}) == 0);
  std::ifstream eis(evolved);
  const auto me = mesh::read_mesh(eis);
  for (const auto& v : me.vertices)
    CHECK(std::abs(geometry::level_set(geometry::SurfaceSpec{}, v, 0.25)) <
          1e-12);
}

TEST_CASE("solve subcommand") {
  OutDir out;
  const std::string report = out.file("report.json");
  {
    nlohmann::json cfg = {{"level", 1},       {"integrator", "be"},
                          {"tau", 0.1},       {"T", 1.0},
                          {"problem", "zero"}, {"out", report}};
    std::ofstream os(out.file("zero.json"));
    os << cfg.dump();
  }
  CHECK(run_cli({"--quiet", "solve", "--config",
                 out.file("zero.json").c_str()}) == 0);
  const auto parsed = nlohmann::json::parse(slurp(report));
  CHECK(parsed["status"] == "ok");
  CHECK(parsed["err_linf_l2"].get<double>() == 0.0);
  CHECK(parsed["err_l2_h1"].get<double>() == 0.0);

  // a real (tiny) benchmark solve produces finite positive errors
  const std::string report2 = out.file("report2.json");
  {
    nlohmann::json cfg = {{"level", 1},
                          {"integrator", "bdf2"},
                          {"tau", 0.05},
                          {"T", 0.2},
                          {"out", report2}};
    std::ofstream os(out.file("bench.json"));
    os << cfg.dump();
  }
  CHECK(run_cli({"--quiet", "solve", "--config",
                 out.file("bench.json").c_str()}) == 0);
  const auto parsed2 = nlohmann::json::parse(slurp(report2));
  CHECK(parsed2["err_linf_l2"].get<double>() > 0.0);
  CHECK(parsed2["err_linf_l2"].get<double>() < 1.0);
  CHECK(parsed2["final_err_l2"].get<double>() > 0.0);
  CHECK(parsed2["final_err_l2"].get<double>() <=
        parsed2["err_linf_l2"].get<double>() + 1e-15);

  // unknown integrator: usage error listing the grammar
  {
    nlohmann::json cfg = {{"integrator", "leapfrog"}};
    std::ofstream os(out.file("bad.json"));
    os << cfg.dump();
  }
  CHECK(run_cli({"--quiet", "solve", "--config",
                 out.file("bad.json").c_str()}) == 2);

  // nonlinear solver failure is a numerical error (exit 3) with step index
  const std::string report3 = out.file("report3.json");
  {
    nlohmann::json cfg = {{"level", 1},
                          {"integrator", "be"},
                          {"tau", 0.1},
                          {"T", 0.5},
                          {"nonlinear", {{"max_iter", 0}, {"rel_tol", 1e-30}}},
                          {"out", report3}};
    std::ofstream os(out.file("fail.json"));
    os << cfg.dump();
  }
  CHECK(run_cli({"--quiet", "solve", "--config",
                 out.file("fail.json").c_str()}) == 3);
  const auto parsed3 = nlohmann::json::parse(slurp(report3));
  CHECK(parsed3["status"] == "failed");
  CHECK(parsed3["step_index"].get<long>() == 1);

  CHECK(run_cli({"--quiet", "solve", "--config", "missing_config.json"}) == 1);
}

TEST_CASE("convergence subcommand") {
  OutDir out;
  CHECK(run_cli({"--quiet", "--out-dir", out.path.string().c_str(),
                 "convergence", "--elliptic", "--level-min", "1",
                 "--level-max", "2", "--out-prefix", "ell"}) == 0);
  const std::string csv = slurp(out.file("ell.csv"));
  CHECK(csv.rfind("level,dof,h,tau,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3); // header + 2 rows
  CHECK(fs::exists(out.file("ell.gp")));
  CHECK(fs::exists(out.file("ell.json")));

  // config file + flag override
  {
    nlohmann::json cfg = {{"level_min", 1}, {"level_max", 1}, {"tau0", 0.1}};
    std::ofstream os(out.file("conv.json"));
    os << cfg.dump();
  }
  CHECK(run_cli({"--quiet", "--out-dir", out.path.string().c_str(),
                 "convergence", "--config", out.file("conv.json").c_str(),
                 "--integrator", "libdf2", "--out-prefix", "study"}) == 0);
  const std::string study_json = slurp(out.file("study.json"));
  CHECK(study_json.find("libdf2") != std::string::npos);
  CHECK(study_json.find("\"level_max\": 1") != std::string::npos);

  CHECK(run_cli({"--quiet", "convergence", "--integrator", "rk4"}) == 2);

  // temporal mode on a fixed mesh
  CHECK(run_cli({"--quiet", "--out-dir", out.path.string().c_str(),
                 "convergence", "--fixed-level", "1", "--integrator", "libdf2",
                 "--level-min", "1", "--level-max", "2", "--tau0", "0.1",
                 "--tau-refinement", "2", "--reference-refinement", "16",
                 "--out-prefix", "temporal"}) == 0);
  const std::string temporal_csv = slurp(out.file("temporal.csv"));
  CHECK(std::count(temporal_csv.begin(), temporal_csv.end(), '\n') == 3);
}

TEST_CASE("check subcommand") {
  CHECK(run_cli({"--quiet", "check", "radau2"}) == 0);
  CHECK(run_cli({"--quiet", "check", "radau3"}) == 0);
  CHECK(run_cli({"--quiet", "check", "be"}) == 0);
  CHECK(run_cli({"--quiet", "check", "bdf5"}) == 0);
  CHECK(run_cli({"--quiet", "check", "libdf4"}) == 0);
  CHECK(run_cli({"--quiet", "check", "bdf6"}) == 2);
  CHECK(run_cli({"--quiet", "check", "what"}) == 2);
}

TEST_CASE("usage errors") {
  CHECK(run_cli({"unknown-subcommand"}) == 2);
  CHECK(run_cli({}) == 2);
  CHECK(run_cli({"--threads", "0", "check", "be"}) == 2);
}

TEST_CASE("the installed binary runs end to end") {
  OutDir out;
  const std::string cmd = std::string(ESFEM_CLI_PATH) + " --quiet --out-dir " +
                          out.path.string() + " mesh --level 1 --out m.txt";
  CHECK(std::system(cmd.c_str()) == 0);
  std::ifstream is(out.file("m.txt"));
  REQUIRE(is.good());
  CHECK(mesh::read_mesh(is).vertices.size() == 42);
}
