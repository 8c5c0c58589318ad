#include "catch_amalgamated.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tbc/experiment.hpp"

using namespace tbc;
namespace fs = std::filesystem;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tbc_experiment_" + name);
  fs::remove_all(p);
  return p;
}

const char* kSmall2d = R"(schema_version = 1
[experiment]
kind = free_packets
modes = fully_discrete_tbc, discretized_bp
[grid]
dim = 2
half_width = 40
cells = 20
[time]
tau = 5
steps = 12
[packets]
preset = custom
waist = 6
rows = 0.3 0.6 0.8 0
[solver]
method = banded
[output]
checkpoint_every = 4
snapshot_every = 6
)";

}  // namespace

TEST_CASE("config defaults and overrides", "[experiment][config]") {
  const ExperimentConfig d = parse("schema_version = 1\n");
  CHECK(d.kind == ExperimentKind::free_packets);
  CHECK(d.dim == 3);
  CHECK(d.cells == 60);
  CHECK(d.tau == 25.0);
  CHECK(d.packets.packets.size() == 3);
  CHECK(d.modes == std::vector<BoundaryMode>{BoundaryMode::fully_discrete_tbc});

  const ExperimentConfig c = parse(kSmall2d);
  CHECK(c.dim == 2);
  CHECK(c.modes.size() == 2);
  CHECK(c.modes[1] == BoundaryMode::discretized_bp);
  REQUIRE(c.packets.packets.size() == 1);
  CHECK(c.packets.packets[0].xi == 0.3);
  CHECK(c.packets.packets[0].waist == 6.0);
  CHECK(c.policy.method == SolverMethod::banded_direct);
  CHECK(c.checkpoint_every == 4);

  const auto j = config_to_json(c);
  CHECK(j["grid"]["cells"] == 20);
  CHECK(j["modes"][1] == "discretized_bp");
}

TEST_CASE("config errors", "[experiment][config]") {
  CHECK_THROWS_AS(parse("[grid]\ncells = 10\n"), ConfigError);
  CHECK_THROWS_AS(parse("schema_version = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse("schema_version = 1\ncolour = red\n"), ConfigError);
  CHECK_THROWS_AS(parse("schema_version = 1\n[grid]\nspacing = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("schema_version = 1\n[physics]\nmass = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("schema_version = 1\n[experiment]\nkind = lattice\n"), ConfigError);
  CHECK_THROWS_AS(parse("schema_version = 1\n[experiment]\nmodes = pml\n"), ConfigError);
  CHECK_THROWS_AS(parse("schema_version = 1\n[grid]\ncells = ten\n"), ConfigError);
  CHECK_THROWS_AS(parse("schema_version = 1\n[grid]\ncells = 4\n"), ConfigError);
  CHECK_THROWS_AS(parse("schema_version = 1\n[time]\ntau = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse("schema_version = 1\n[packets]\npreset = custom\n"), ConfigError);
  CHECK_THROWS_AS(parse("schema_version = 1\n[packets]\nrows = 0.1 1 0 0\n"), ConfigError);
  CHECK_THROWS_AS(parse("schema_version = 1\n[packets]\npreset = custom\nrows = 0.1 1 1 0\n"), ArgumentError);
  CHECK_THROWS_AS(parse("schema_version = 1\n[solver]\nmethod = lu\n"), ConfigError);
  CHECK_THROWS_AS(parse("schema_version = 1\n[solver]\ntolerance = 0.1\n"), ConfigError);
  CHECK_THROWS_AS(parse("schema_version = 1\n[experiment]\nkind = plane_wave_1d\n[grid]\ndim = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse("schema_version = 1\n[experiment]\nkind = plane_wave_1d\nmodes = discretized_bp\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse("schema_version = 1\n[experiment]\nkind = barrier\n[grid]\ndim = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse("schema_version = 1\n[barrier]\nr0 = 95\nr1 = 90\n[experiment]\nkind = barrier\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse("schema_version = 1\n[limits]\nmemory_budget_gib = 0\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.ini"), ConfigError);
}

TEST_CASE("memory watchdog", "[experiment][memory]") {
  ExperimentConfig c;
  c.dim = 3;
  c.cells = 60;
  c.steps = 100;
  const MemoryEstimate m = estimate_memory(c);
  CHECK(m.hierarchy_values == nv_estimate(3, 61, 101));
  CHECK_NOTHROW(check_memory(c, false));

  c.cells = 120;
  c.steps = 200;
  CHECK_THROWS_AS(check_memory(c, false), ConfigError);
  c.memory_budget_gib = 16.0;
  CHECK_NOTHROW(check_memory(c, true));
  c.memory_budget_gib = 0.5;
  CHECK_THROWS_AS(check_memory(c, true), ConfigError);
}

TEST_CASE("barrier snapshot times scale with the horizon", "[experiment]") {
  CHECK(barrier_checkpoint_steps(2.0, 2000) == std::vector<int>{160, 320, 640, 960});
  CHECK(barrier_checkpoint_steps(20.0, 100) == std::vector<int>{8, 16, 32, 48});
  CHECK(barrier_checkpoint_steps(25.0, 100) == std::vector<int>{8, 16, 32, 48});
}

TEST_CASE("plane-wave experiment", "[experiment]") {
  const ExperimentConfig c = parse(
      "schema_version = 1\n[experiment]\nkind = plane_wave_1d\n[grid]\nhalf_width = 50\ncells = 100\n"
      "[time]\ntau = 2\nsteps = 200\n[solver]\nmethod = banded\n");
  RunOptions opt;
  opt.write_files = false;
  const ExperimentResult r = run_experiment(c, opt);
  REQUIRE(r.series.size() == 1);
  REQUIRE(r.series[0].max_error);
  CHECK(*r.series[0].max_error < 1e-10);
  CHECK(r.series[0].steps_run == 200);
  CHECK(r.report["config"]["kind"] == "plane_wave_1d");
}

TEST_CASE("run outputs and V reproducibility", "[experiment][io]") {
  const ExperimentConfig c = parse(kSmall2d);
  RunOptions opt;
  opt.out_dir = scratch_dir("outputs");
  const ExperimentResult r = run_experiment(c, opt);
  REQUIRE(r.series.size() == 2);
  const fs::path dir = opt.out_dir / "fully_discrete_tbc";
  CHECK(fs::exists(opt.out_dir / "report.json"));
  CHECK(fs::exists(dir / "steps.jsonl"));
  CHECK_FALSE(fs::exists(dir / "checkpoint.tbck"));
  const auto rows = detail::read_metrics(dir / "metrics.csv", 12);
  REQUIRE(rows.size() == 13);

  // V at step 6 from the snapshot and the analytic field
  const FieldSnapshot snap = load_snapshot(dir / "snapshots" / "step_6.tbcf");
  CHECK(snap.step == 6);
  const auto exact = sample_packets(c.grid(), c.packets, 6 * c.tau);
  REQUIRE(rows[6].v);
  CHECK(error_metric_V(snap.field.data(), exact) == Catch::Approx(*rows[6].v).epsilon(1e-12));

  const auto report = nlohmann::json::parse(slurp(opt.out_dir / "report.json"));
  CHECK(report["series"].size() == 2);
  CHECK(report.contains("environment"));
  fs::remove_all(opt.out_dir);
}

TEST_CASE("interrupted runs resume to the same metrics", "[experiment][checkpoint]") {
  const ExperimentConfig c = parse(kSmall2d);
  RunOptions whole;
  whole.out_dir = scratch_dir("whole");
  const ExperimentResult a = run_experiment(c, whole);

  RunOptions part;
  part.out_dir = scratch_dir("part");
  part.stop_after = 8;
  const ExperimentResult first = run_experiment(c, part);
  CHECK(first.series[0].steps_run == 8);
  CHECK(fs::exists(part.out_dir / "fully_discrete_tbc" / "checkpoint.tbck"));
  part.stop_after = 0;
  part.resume = true;
  const ExperimentResult b = run_experiment(c, part);
  CHECK(b.series[0].resumed);

  for (std::size_t s = 0; s < 2; ++s) {
    const auto& ma = a.series[s].metrics;
    const auto& mb = b.series[s].metrics;
    REQUIRE(ma.size() == mb.size());
    for (std::size_t i = 0; i < ma.size(); ++i) {
      CHECK(mb[i].norm == Catch::Approx(ma[i].norm).epsilon(1e-12));
      CHECK(*mb[i].v == Catch::Approx(*ma[i].v).epsilon(1e-12).margin(1e-300));
    }
  }
  CHECK(slurp(whole.out_dir / "fully_discrete_tbc" / "metrics.csv") ==
        slurp(part.out_dir / "fully_discrete_tbc" / "metrics.csv"));
  fs::remove_all(whole.out_dir);
  fs::remove_all(part.out_dir);
}

TEST_CASE("identical runs give identical metrics", "[experiment]") {
  const ExperimentConfig c = parse(kSmall2d);
  RunOptions opt;
  opt.write_files = false;
  const auto a = run_experiment(c, opt);
  const auto b = run_experiment(c, opt);
  for (std::size_t i = 0; i < a.series[0].metrics.size(); ++i)
    CHECK(detail::metric_row(a.series[0].metrics[i]) == detail::metric_row(b.series[0].metrics[i]));
}
