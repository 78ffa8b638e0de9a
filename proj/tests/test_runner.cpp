// Command layer: configuration/manifest loading, lattice and spectra
// commands, simulation with bit-exact manifest reruns, deterministic
// evolution, comparison runs, sweeps with resume, and the self-test.
//
// Commands write into scratch directories under the working directory; each
// scenario wipes its directory up front so reruns are deterministic.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "abrw/config.hpp"
#include "abrw/errors.hpp"
#include "abrw/lattice.hpp"
#include "abrw/manifest.hpp"
#include "abrw/runner.hpp"
#include "abrw/spectral.hpp"

using namespace abrw;
namespace fs = std::filesystem;

namespace {

std::string summary_value(const RunManifest& m, const std::string& key) {
  for (const auto& [k, v] : m.summary)
    if (k == key) return v;
  return "<missing " + key + ">";
}

std::string output_digest(const RunManifest& m, const std::string& path) {
  for (const auto& o : m.outputs)
    if (o.path == path) return o.digest;
  return "<missing " + path + ">";
}

struct Scratch {
  std::string dir;
  explicit Scratch(const std::string& name) : dir("tmp_runner_" + name) {
    fs::remove_all(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string file(const std::string& rel) const { return dir + "/" + rel; }
};

Config small_sim_config(const std::string& out_dir) {
  Config cfg;
  cfg.shape = "rectangle";
  cfg.extent = {1.0, 1.0, 1.0};
  cfg.eps = 0.125;
  cfg.particles = 64;
  cfg.t_end = 0.1;
  cfg.seed = 11;
  cfg.preset = "eigenmode:1,0";
  cfg.sample_times = {0.0, 0.05, 0.1};
  cfg.modes = {1};
  cfg.n_modes = 2;
  cfg.record_events = true;
  cfg.snapshots = true;
  cfg.delta = 0.25;
  cfg.out_dir = out_dir;
  cfg.write_svg = true;
  return cfg;
}

int run_cli(const std::string& args) {
  const int status = std::system(("./abrw " + args).c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("configuration and manifest loading") {
  SUBCASE("INI file") {
    const Scratch sc("load_ini");
    fs::create_directories(sc.dir);
    std::ofstream(sc.file("run.ini"))
        << "[lattice]\neps = 1/16\n[dynamics]\nseed = 5\n";
    const LoadedConfig lc = load_config_or_manifest(sc.file("run.ini"));
    CHECK(!lc.from_manifest);
    CHECK(lc.cfg.eps == 0.0625);
    CHECK(lc.cfg.seed == 5);
  }
  SUBCASE("manifest file wins its recorded seed") {
    const Scratch sc("load_manifest");
    fs::create_directories(sc.dir);
    Config cfg;
    cfg.seed = 5;
    RunManifest m;
    m.command = "simulate";
    m.seed = 99;  // the run was executed with this seed
    m.config_text = render_config(cfg);
    write_manifest(m, sc.file("manifest.json"));
    const LoadedConfig lc = load_config_or_manifest(sc.file("manifest.json"));
    CHECK(lc.from_manifest);
    CHECK(lc.cfg.seed == 99);
    CHECK(lc.manifest.command == "simulate");
  }
  SUBCASE("command-line overrides") {
    Config cfg;
    CliOverrides ov;
    ov.out_dir = "elsewhere";
    ov.seed = 123;
    ov.budget_events = 555;
    ov.replicas = 3;
    apply_overrides(cfg, ov);
    CHECK(cfg.out_dir == "elsewhere");
    CHECK(cfg.seed == 123);
    CHECK(cfg.budget_events == 555);
    CHECK(cfg.replicas == 3);
    apply_overrides(cfg, CliOverrides{});  // empty overrides change nothing
    CHECK(cfg.seed == 123);
  }
}

TEST_CASE("lattice command") {
  SUBCASE("unit square") {
    const Scratch sc("lattice_square");
    Config cfg;
    cfg.eps = 0.125;
    cfg.out_dir = sc.dir;
    CHECK(cmd_lattice(cfg) == exit_ok);
    REQUIRE(fs::exists(sc.file("lattice.txt")));
    REQUIRE(fs::exists(sc.file("manifest.json")));
    const RunManifest m = read_manifest(sc.file("manifest.json"));
    CHECK(m.command == "lattice");
    CHECK(summary_value(m, "sites") == "81");
    CHECK(summary_value(m, "pruned") == "0");
    CHECK(summary_value(m, "boundary") == "32");
    // the recorded digest matches the file on disk, and the export reimports
    CHECK(output_digest(m, "lattice.txt") ==
          fnv1a64_file_hex(sc.file("lattice.txt")));
    const Lattice back = import_lattice_file(sc.file("lattice.txt"));
    CHECK(back.n_sites() == 81);
    CHECK(!back.has_normals);
  }
  SUBCASE("disc") {
    const Scratch sc("lattice_disc");
    Config cfg;
    cfg.shape = "disc";
    cfg.center = {0.5, 0.5, 0.0};
    cfg.radius = 0.5;
    cfg.eps = 0.125;
    cfg.out_dir = sc.dir;
    CHECK(cmd_lattice(cfg) == exit_ok);
    const RunManifest m = read_manifest(sc.file("manifest.json"));
    CHECK(summary_value(m, "sites") == "45");
    CHECK(summary_value(m, "pruned") == "4");
  }
}

TEST_CASE("eigenbasis command") {
  const Scratch sc("eig");
  Config cfg;
  cfg.eps = 0.25;
  cfg.n_modes = 3;
  cfg.out_dir = sc.dir;
  CHECK(cmd_eig(cfg) == exit_ok);
  REQUIRE(fs::exists(sc.file("basis.txt")));
  std::ifstream in(sc.file("basis.txt"));
  const SpectralBasis b = import_basis(in);
  CHECK(b.k() == 3);
  const RunManifest m = read_manifest(sc.file("manifest.json"));
  CHECK(std::stod(summary_value(m, "lambda_0")) <= 1e-8);
  CHECK(std::stod(summary_value(m, "lambda_1")) > 1.0);
}

TEST_CASE("simulate command: determinism, artifacts, exact rerun") {
  const Scratch a("sim_a"), b("sim_b"), c("sim_c"), d("sim_d");

  REQUIRE(cmd_simulate(small_sim_config(a.dir), nullptr) == exit_ok);
  for (const char* f :
       {"series.csv", "final.grid", "final.svg", "events.ndjson",
        "manifest.json"})
    CHECK(fs::exists(a.file(f)));
  const RunManifest ma = read_manifest(a.file("manifest.json"));
  CHECK(ma.outputs.size() == 4);

  SUBCASE("the same seed reproduces every output bit for bit") {
    REQUIRE(cmd_simulate(small_sim_config(b.dir), nullptr) == exit_ok);
    const RunManifest mb = read_manifest(b.file("manifest.json"));
    for (const char* f : {"series.csv", "final.grid", "events.ndjson"})
      CHECK(output_digest(ma, f) == output_digest(mb, f));
    CHECK(summary_value(ma, "annihilations") ==
          summary_value(mb, "annihilations"));
  }
  SUBCASE("rerun from the manifest verifies recorded digests") {
    LoadedConfig lc = load_config_or_manifest(a.file("manifest.json"));
    REQUIRE(lc.from_manifest);
    lc.cfg.out_dir = c.dir;
    CHECK(cmd_simulate(lc.cfg, &lc) == exit_ok);
  }
  SUBCASE("a tampered digest makes the rerun fail") {
    RunManifest tampered = ma;
    REQUIRE(!tampered.outputs.empty());
    tampered.outputs[0].digest = "0123456789abcdef";
    fs::create_directories(d.dir);
    write_manifest(tampered, d.file("manifest.json"));
    LoadedConfig lc = load_config_or_manifest(d.file("manifest.json"));
    lc.cfg.out_dir = d.dir + "_fresh";
    CHECK(cmd_simulate(lc.cfg, &lc) == exit_failure);
    fs::remove_all(d.dir + "_fresh");
  }
  SUBCASE("projected event budget is enforced before running") {
    Config cfg = small_sim_config(b.dir);
    cfg.t_end = 1.0;
    cfg.sample_times = {0.0, 1.0};
    cfg.budget_events = 10;  // projected rate 2 N / eps^2 = 8192 per unit time
    CHECK_THROWS_AS(cmd_simulate(cfg, nullptr), BudgetError);
  }
}

TEST_CASE("evolve command") {
  const Scratch sc("evolve");
  Config cfg;
  cfg.eps = 0.125;
  cfg.t_end = 0.1;
  cfg.preset = "eigenmode:1,0";
  cfg.sample_dt = 0.05;
  cfg.out_dir = sc.dir;
  CHECK(cmd_evolve(cfg) == exit_ok);
  REQUIRE(fs::exists(sc.file("evolve.csv")));
  REQUIRE(fs::exists(sc.file("evolve_final.grid")));

  std::ifstream in(sc.file("evolve.csv"));
  std::string header, row0;
  REQUIRE(std::getline(in, header));
  CHECK(header == "t,total_variation,C,logC_over_t");
  REQUIRE(std::getline(in, row0));
  std::stringstream ss(row0);
  std::string cell;
  std::vector<double> cells;
  while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
  REQUIRE(cells.size() == 4);
  CHECK(cells[0] == 0.0);
  CHECK(std::abs(cells[1] - 2.0) <= 1e-12);  // normalized start: TV = 2
  CHECK(std::abs(cells[2] - 1.0) <= 1e-12);  // so C = 1 at t = 0

  const RunManifest m = read_manifest(sc.file("manifest.json"));
  CHECK(std::stod(summary_value(m, "final_tv")) < 2.0);
  // the first-mode profile decays at the numeric spectral gap (about 2.3
  // at this resolution), so the normalizer growth rate sits near it
  const double rate = std::stod(summary_value(m, "final_logC_over_t"));
  CHECK(rate > 1.8);
  CHECK(rate < 2.8);
}

TEST_CASE("compare command at t_end = 0") {
  const Scratch sc("compare0");
  Config cfg;
  cfg.eps = 0.25;
  cfg.particles = 16;  // N eps^d = 1: block masses match exactly
  cfg.t_end = 0.0;
  cfg.sample_times = {0.0};
  cfg.preset = "eigenmode:1,0";
  cfg.modes = {1};
  cfg.n_modes = 2;
  cfg.delta = 0.5;
  cfg.out_dir = sc.dir;
  cfg.write_svg = false;
  CHECK(cmd_compare(cfg) == exit_ok);
  const RunManifest m = read_manifest(sc.file("manifest.json"));
  CHECK(summary_value(m, "final_block_l1") == "0");
  CHECK(summary_value(m, "avg_V_second_half") == "0");
  std::ifstream in(sc.file("compare.csv"));
  std::string header, row;
  REQUIRE(std::getline(in, header));
  CHECK(header == "t,block_l1,deficit");
  REQUIRE(std::getline(in, row));
  CHECK(row.rfind("0,0,", 0) == 0);
}

TEST_CASE("sweep command: small runs, resume, validation") {
  const Scratch sc("sweep");
  Config cfg;
  cfg.eps = 0.25;
  cfg.t_end = 0.05;
  cfg.seed = 9;
  cfg.preset = "eigenmode:1,0";
  cfg.sweep_particles = {8, 16};
  cfg.sample_times = {0.0, 0.05};
  cfg.modes = {1};
  cfg.n_modes = 2;
  cfg.replicas = 4;  // below both analysis thresholds: aggregation only
  cfg.out_dir = sc.dir;
  cfg.write_svg = false;

  REQUIRE(cmd_sweep(cfg) == exit_ok);
  REQUIRE(fs::exists(sc.file("sweep.csv")));
  CHECK(fs::exists(sc.file("sweep/n8/rep00/series.csv")));
  CHECK(fs::exists(sc.file("sweep/n16/rep03/manifest.json")));
  const std::string digest1 = fnv1a64_file_hex(sc.file("sweep.csv"));

  // line count: header plus one row per (population, replica)
  {
    std::ifstream in(sc.file("sweep.csv"));
    std::string line;
    int rows = 0;
    REQUIRE(std::getline(in, line));
    CHECK(line == "n_particles,replica,uhat_final,annihilations");
    while (std::getline(in, line))
      if (!line.empty()) ++rows;
    CHECK(rows == 8);
  }

  SUBCASE("a second invocation resumes from verified replica digests") {
    REQUIRE(cmd_sweep(cfg) == exit_ok);
    CHECK(fnv1a64_file_hex(sc.file("sweep.csv")) == digest1);
  }
  SUBCASE("population list is required") {
    Config bad = cfg;
    bad.sweep_particles.clear();
    CHECK_THROWS_AS(cmd_sweep(bad), ConfigError);
  }
}

TEST_CASE("self-test passes") { CHECK(cmd_selftest() == exit_ok); }

TEST_CASE("command-line exit codes") {
  if (!fs::exists("./abrw")) {
    MESSAGE("abrw binary not in working directory; skipping CLI checks");
    return;
  }
  const Scratch sc("cli");
  fs::create_directories(sc.dir);

  SUBCASE("configuration errors exit 2") {
    std::ofstream(sc.file("bad.ini")) << "[lattice]\neps = -1/16\n";
    CHECK(run_cli("lattice --config " + sc.file("bad.ini") + " 2>/dev/null") ==
          exit_config);
  }
  SUBCASE("budget refusal exits 3") {
    std::ofstream(sc.file("big.ini"))
        << "[lattice]\neps = 1/8\n[dynamics]\nt_end = 1\nbudget_events = 10\n"
        << "preset = eigenmode:1,0\n[observables]\nmodes = 1\nn_modes = 2\n"
        << "[output]\ndir = " << sc.file("out") << "\n";
    CHECK(run_cli("simulate --config " + sc.file("big.ini") +
                  " 2>/dev/null") == exit_budget);
  }
  SUBCASE("success exits 0") {
    CHECK(run_cli("selftest >/dev/null") == exit_ok);
  }
}
