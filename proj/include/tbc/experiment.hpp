#pragma once

// Declarative experiment runner: free packet sums, the half-shell barrier and
// the 1D discrete plane wave.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tbc/analytic.hpp"
#include "tbc/errors.hpp"
#include "tbc/estimates.hpp"
#include "tbc/field_io.hpp"
#include "tbc/grid.hpp"
#include "tbc/solvers.hpp"

namespace tbc {

inline constexpr int kConfigSchemaVersion = 1;

enum class ExperimentKind { free_packets, barrier, plane_wave_1d };

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::free_packets;
  std::vector<BoundaryMode> modes{BoundaryMode::fully_discrete_tbc};
  int dim = 3;
  double half_width = 100.0;
  int cells = 60;
  double tau = 25.0;
  int steps = 100;
  PacketSum packets = table1_packets(18.0);
  SemiSphericalShell shell;
  double barrier_waist = 14.0;
  bool barrier_control = true;
  double plane_q = 0.3;
  double plane_amplitude = 1.0;
  SolverPolicy policy;
  int slice_axis = 1;
  int slice_every = 0;
  int snapshot_every = 0;
  int checkpoint_every = 0;
  double memory_budget_gib = 8.0;

  GridSpec grid() const { return GridSpec::make(dim, half_width, cells); }
  TimeSpec time() const { return TimeSpec::make(tau, steps); }
};

inline std::string to_string(BoundaryMode m) {
  switch (m) {
    case BoundaryMode::fully_discrete_tbc: return "fully_discrete_tbc";
    case BoundaryMode::discretized_bp: return "discretized_bp";
    case BoundaryMode::hard_wall: return "hard_wall";
  }
  return "unknown";
}

inline BoundaryMode parse_boundary_mode(const std::string& s) {
  if (s == "fully_discrete_tbc") return BoundaryMode::fully_discrete_tbc;
  if (s == "discretized_bp") return BoundaryMode::discretized_bp;
  if (s == "hard_wall") return BoundaryMode::hard_wall;
  throw ConfigError("unknown boundary mode '" + s + "'");
}

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::free_packets: return "free_packets";
    case ExperimentKind::barrier: return "barrier";
    case ExperimentKind::plane_wave_1d: return "plane_wave_1d";
  }
  return "unknown";
}

namespace detail {

inline const std::map<std::string, std::set<std::string>>& config_schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"", {"schema_version"}},
      {"experiment", {"kind", "modes"}},
      {"grid", {"dim", "half_width", "cells"}},
      {"time", {"tau", "steps"}},
      {"packets", {"preset", "waist", "rows"}},
      {"barrier", {"r0", "r1", "u0", "waist", "control"}},
      {"plane_wave", {"q", "amplitude"}},
      {"solver", {"method", "tolerance", "max_iterations", "preconditioner", "gmres_restart", "gmres_fallback"}},
      {"output", {"slice_axis", "slice_every", "snapshot_every", "checkpoint_every"}},
      {"limits", {"memory_budget_gib"}},
  };
  return s;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T get_value(const boost::property_tree::ptree& pt, const std::string& path, T fallback) {
  const auto v = pt.get_optional<std::string>(path);
  if (!v) return fallback;
  std::istringstream is(trim(*v));
  T out{};
  if constexpr (std::is_same_v<T, bool>) {
    const std::string t = trim(*v);
    if (t == "true" || t == "1") return true;
    if (t == "false" || t == "0") return false;
    throw ConfigError("config: '" + path + "' must be true or false");
  } else {
    is >> out;
    if (!is || !is.eof()) throw ConfigError("config: cannot parse '" + path + "' = '" + *v + "'");
  }
  return out;
}

inline PacketSum parse_packet_rows(const std::string& rows, double waist) {
  PacketSum sum;
  for (const auto& row : split(rows, ';')) {
    std::istringstream is(row);
    GaussianPacketParams p;
    p.waist = waist;
    is >> p.xi >> p.cosines[0] >> p.cosines[1] >> p.cosines[2];
    if (!is) throw ConfigError("config: packet row '" + row + "' needs xi and three direction cosines");
    sum.packets.push_back(p);
  }
  if (sum.packets.empty()) throw ConfigError("config: packet list is empty");
  return sum;
}

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& is) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const auto& schema = detail::config_schema();
  for (const auto& [key, node] : tree) {
    if (node.empty()) {
      if (!schema.at("").count(key)) throw ConfigError("config: unknown key '" + key + "'");
      continue;
    }
    const auto it = schema.find(key);
    if (it == schema.end() || key.empty()) throw ConfigError("config: unknown section [" + key + "]");
    for (const auto& [k, v] : node)
      if (!it->second.count(k)) throw ConfigError("config: unknown key '" + k + "' in [" + key + "]");
  }
  const int version = detail::get_value<int>(tree, "schema_version", -1);
  if (version != kConfigSchemaVersion)
    throw ConfigError("config: schema_version must be " + std::to_string(kConfigSchemaVersion));

  ExperimentConfig c;
  const std::string kind = detail::trim(tree.get<std::string>("experiment.kind", "free_packets"));
  if (kind == "free_packets") c.kind = ExperimentKind::free_packets;
  else if (kind == "barrier") c.kind = ExperimentKind::barrier;
  else if (kind == "plane_wave_1d") c.kind = ExperimentKind::plane_wave_1d;
  else throw ConfigError("config: unknown experiment kind '" + kind + "'");

  if (const auto modes = tree.get_optional<std::string>("experiment.modes")) {
    c.modes.clear();
    for (const auto& m : detail::split(*modes, ',')) c.modes.push_back(parse_boundary_mode(m));
    if (c.modes.empty()) throw ConfigError("config: experiment.modes is empty");
  }

  c.dim = detail::get_value(tree, "grid.dim", c.kind == ExperimentKind::plane_wave_1d ? 1 : 3);
  c.half_width = detail::get_value(tree, "grid.half_width", c.half_width);
  c.cells = detail::get_value(tree, "grid.cells", c.cells);
  c.tau = detail::get_value(tree, "time.tau", c.tau);
  c.steps = detail::get_value(tree, "time.steps", c.steps);

  const double waist = detail::get_value(tree, "packets.waist", 18.0);
  const std::string preset = detail::trim(tree.get<std::string>("packets.preset", "table1"));
  if (preset == "table1") {
    if (tree.get_optional<std::string>("packets.rows")) throw ConfigError("config: packets.rows needs preset = custom");
    c.packets = table1_packets(waist);
  } else if (preset == "custom") {
    const auto rows = tree.get_optional<std::string>("packets.rows");
    if (!rows) throw ConfigError("config: preset = custom needs packets.rows");
    c.packets = detail::parse_packet_rows(*rows, waist);
  } else {
    throw ConfigError("config: unknown packet preset '" + preset + "'");
  }
  for (const auto& p : c.packets.packets) p.validate();

  c.shell.r0 = detail::get_value(tree, "barrier.r0", c.shell.r0);
  c.shell.r1 = detail::get_value(tree, "barrier.r1", c.shell.r1);
  c.shell.u0 = detail::get_value(tree, "barrier.u0", c.shell.u0);
  c.barrier_waist = detail::get_value(tree, "barrier.waist", c.barrier_waist);
  c.barrier_control = detail::get_value(tree, "barrier.control", c.barrier_control);
  c.plane_q = detail::get_value(tree, "plane_wave.q", c.plane_q);
  c.plane_amplitude = detail::get_value(tree, "plane_wave.amplitude", c.plane_amplitude);

  const std::string method = detail::trim(tree.get<std::string>("solver.method", "bicgstab"));
  if (method == "bicgstab") c.policy.method = SolverMethod::bicgstab;
  else if (method == "gmres") c.policy.method = SolverMethod::gmres;
  else if (method == "banded") c.policy.method = SolverMethod::banded_direct;
  else throw ConfigError("config: unknown solver method '" + method + "'");
  c.policy.rel_tolerance = detail::get_value(tree, "solver.tolerance", c.policy.rel_tolerance);
  c.policy.max_iterations = detail::get_value(tree, "solver.max_iterations", c.policy.max_iterations);
  const std::string pre = detail::trim(tree.get<std::string>("solver.preconditioner", "diagonal"));
  if (pre == "diagonal") c.policy.preconditioner = Preconditioner::diagonal;
  else if (pre == "none") c.policy.preconditioner = Preconditioner::none;
  else throw ConfigError("config: unknown preconditioner '" + pre + "'");
  c.policy.gmres_restart = detail::get_value(tree, "solver.gmres_restart", c.policy.gmres_restart);
  c.policy.gmres_fallback = detail::get_value(tree, "solver.gmres_fallback", c.policy.gmres_fallback);
  c.policy.validate();

  c.slice_axis = detail::get_value(tree, "output.slice_axis", c.slice_axis);
  c.slice_every = detail::get_value(tree, "output.slice_every", c.slice_every);
  c.snapshot_every = detail::get_value(tree, "output.snapshot_every", c.snapshot_every);
  c.checkpoint_every = detail::get_value(tree, "output.checkpoint_every", c.checkpoint_every);
  c.memory_budget_gib = detail::get_value(tree, "limits.memory_budget_gib", c.memory_budget_gib);

  // Field checks beyond parsing.
  (void)c.grid();
  (void)c.time();
  if (c.slice_axis < 0 || c.slice_axis > 2) throw ConfigError("config: output.slice_axis must be 0, 1 or 2");
  if (c.slice_every < 0 || c.snapshot_every < 0 || c.checkpoint_every < 0)
    throw ConfigError("config: output cadences must be non-negative");
  if (!(c.memory_budget_gib > 0.0)) throw ConfigError("config: memory budget must be positive");
  if (c.kind == ExperimentKind::plane_wave_1d) {
    if (c.dim != 1) throw ConfigError("config: plane_wave_1d needs grid.dim = 1");
    if (c.modes != std::vector<BoundaryMode>{BoundaryMode::fully_discrete_tbc})
      throw ConfigError("config: plane_wave_1d runs the fully discrete condition only");
  }
  if (c.kind == ExperimentKind::barrier) {
    if (c.dim != 3) throw ConfigError("config: barrier needs grid.dim = 3");
    validate_potential(PotentialSpec{c.shell});
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  return parse_config(is);
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["kind"] = to_string(c.kind);
  for (auto m : c.modes) j["modes"].push_back(to_string(m));
  j["grid"] = {{"dim", c.dim}, {"half_width", c.half_width}, {"cells", c.cells}, {"h", c.grid().step()}};
  j["time"] = {{"tau", c.tau}, {"steps", c.steps}};
  for (const auto& p : c.packets.packets)
    j["packets"].push_back({{"waist", p.waist}, {"xi", p.xi}, {"cosines", p.cosines}});
  j["barrier"] = {{"r0", c.shell.r0}, {"r1", c.shell.r1}, {"u0", c.shell.u0}, {"waist", c.barrier_waist},
                  {"control", c.barrier_control}};
  j["plane_wave"] = {{"q", c.plane_q}, {"amplitude", c.plane_amplitude}};
  j["solver"] = {{"tolerance", c.policy.rel_tolerance}, {"max_iterations", c.policy.max_iterations}};
  j["output"] = {{"slice_axis", c.slice_axis}, {"slice_every", c.slice_every},
                 {"snapshot_every", c.snapshot_every}, {"checkpoint_every", c.checkpoint_every}};
  j["limits"] = {{"memory_budget_gib", c.memory_budget_gib}};
  return j;
}

// ---------------------------------------------------------------------------
// Memory watchdog

struct MemoryEstimate {
  std::uint64_t hierarchy_values = 0;
  std::uint64_t bytes = 0;
};

inline MemoryEstimate estimate_memory(const ExperimentConfig& c) {
  const auto nodes = static_cast<std::uint64_t>(c.cells + 1);
  MemoryEstimate m;
  m.hierarchy_values = nv_estimate(c.dim, nodes, static_cast<std::uint64_t>(c.steps) + 1);
  // two complex values per memory entry at most (value plus a neighbour reference), plus main work vectors
  const std::uint64_t main_nodes = detail::checked_pow(nodes, c.dim);
  m.bytes = detail::checked_add(detail::checked_mul(m.hierarchy_values, 24),
                                detail::checked_mul(main_nodes, 16 * 12));
  return m;
}

/// Desk-scale ceiling above which a run needs the explicit large flag.
inline constexpr std::uint64_t kDeskBytes = 2ULL << 30;

inline void check_memory(const ExperimentConfig& c, bool large) {
  const MemoryEstimate m = estimate_memory(c);
  const double budget = c.memory_budget_gib * double(1ULL << 30);
  if (static_cast<double>(m.bytes) > budget)
    throw ConfigError("estimated memory " + std::to_string(m.bytes >> 20) + " MiB exceeds the budget of " +
                      std::to_string(c.memory_budget_gib) + " GiB");
  if (m.bytes > kDeskBytes && !large)
    throw ConfigError("estimated memory " + std::to_string(m.bytes >> 20) +
                      " MiB is above desk scale; pass --large to run it");
}

// ---------------------------------------------------------------------------
// Runs

struct MetricRecord {
  int n = 0;
  double t = 0.0;
  double norm = 0.0;
  std::optional<double> v;
  std::optional<double> max_error;
  double norm_x_neg = 0.0;
  double norm_x_pos = 0.0;
  int iterations = 0;
  double residual = 0.0;
};

struct SeriesSummary {
  std::string name;
  BoundaryMode mode = BoundaryMode::fully_discrete_tbc;
  int steps_run = 0;
  double initial_norm = 0.0;
  double final_norm = 0.0;
  double max_norm_ratio = 0.0;  // largest per-step norm ratio
  std::optional<double> final_v;
  std::optional<double> max_v;
  int peak_v_step = -1;
  std::optional<double> max_error;
  std::size_t peak_hierarchy_values = 0;
  long long krylov_iterations = 0;
  double wall_seconds = 0.0;
  bool resumed = false;
  std::vector<MetricRecord> metrics;
};

struct RunOptions {
  std::filesystem::path out_dir = "out";
  bool large = false;
  bool resume = false;
  bool write_files = true;
  int stop_after = 0;  // leave the run (and its checkpoint) after this step; 0 runs to the end
  std::function<void(const std::string&)> log;
};

struct ExperimentResult {
  std::vector<SeriesSummary> series;
  nlohmann::json report;
};

namespace detail {

inline void half_space_split(const GridSpec& g, std::span<const cplx> f, double& neg, double& pos) {
  neg = pos = 0.0;
  const auto n = static_cast<std::size_t>(g.nodes_per_axis());
  std::size_t stride0 = 1;
  for (int d = 1; d < g.dim(); ++d) stride0 *= n;
  for (std::size_t p = 0; p < f.size(); ++p) {
    const double x = g.coord(static_cast<int>((p / stride0) % n));
    if (x < 0.0) neg += std::norm(f[p]);
    else if (x > 0.0) pos += std::norm(f[p]);
  }
}

inline std::string metric_row(const MetricRecord& r) {
  std::ostringstream os;
  os << std::setprecision(17) << r.n << ',' << r.t << ',' << r.norm << ',';
  if (r.v) os << *r.v;
  os << ',';
  if (r.max_error) os << *r.max_error;
  os << ',' << r.norm_x_neg << ',' << r.norm_x_pos << ',' << r.iterations << ',' << r.residual << '\n';
  return os.str();
}

inline constexpr const char* kMetricHeader = "n,t,norm,V,max_error,norm_x_neg,norm_x_pos,iterations,residual\n";

inline std::vector<MetricRecord> read_metrics(const std::filesystem::path& path, int up_to) {
  std::vector<MetricRecord> out;
  std::ifstream is(path);
  if (!is) throw StateError("resume: cannot read " + path.string());
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    if (cols.size() == 8) cols.emplace_back();
    if (cols.size() != 9) throw StateError("resume: malformed metrics row");
    MetricRecord r;
    r.n = std::stoi(cols[0]);
    if (r.n > up_to) break;
    r.t = std::stod(cols[1]);
    r.norm = std::stod(cols[2]);
    if (!cols[3].empty()) r.v = std::stod(cols[3]);
    if (!cols[4].empty()) r.max_error = std::stod(cols[4]);
    r.norm_x_neg = std::stod(cols[5]);
    r.norm_x_pos = std::stod(cols[6]);
    r.iterations = std::stoi(cols[7]);
    r.residual = cols[8].empty() ? 0.0 : std::stod(cols[8]);
    out.push_back(r);
  }
  if (static_cast<int>(out.size()) != up_to + 1) throw StateError("resume: metrics do not reach the checkpoint");
  return out;
}

struct SeriesSpec {
  std::string name;
  SolverSetup setup;
  std::vector<cplx> initial;
  std::function<std::vector<cplx>(double)> reference;        // exact field at time t, if any
  std::function<double(int, std::span<const cplx>)> error;   // max node error at step n, if any
  std::vector<int> slice_steps;
  int slice_axis = 1;
  int slice_every = 0;
  int snapshot_every = 0;
  int checkpoint_every = 0;
};

template <int D>
SeriesSummary run_series(const SeriesSpec& spec, const RunOptions& opt) {
  namespace fs = std::filesystem;
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = opt.out_dir / spec.name;
  const fs::path ckpt = dir / "checkpoint.tbck";
  if (opt.write_files) {
    fs::create_directories(dir / "slices");
    fs::create_directories(dir / "snapshots");
  }
  const GridSpec& g = spec.setup.grid;

  SeriesSummary sum;
  sum.name = spec.name;
  sum.mode = spec.setup.mode;

  std::optional<CnSolver<D>> solver;
  if (opt.resume && opt.write_files && fs::exists(ckpt)) {
    std::ifstream is(ckpt, std::ios::binary);
    solver.emplace(CnSolver<D>::restore(spec.setup, is));
    sum.metrics = read_metrics(dir / "metrics.csv", solver->step_index());
    sum.resumed = true;
  } else {
    solver.emplace(spec.setup, spec.initial);
  }
  CnSolver<D>& sv = *solver;

  auto record = [&](int n, const StepReport* rep) {
    MetricRecord r;
    r.n = n;
    r.t = sv.time();
    r.norm = field_norm_sq(sv.field());
    if (spec.reference) r.v = error_metric_V(sv.field(), spec.reference(r.t));
    if (spec.error) r.max_error = spec.error(n, sv.field());
    half_space_split(g, sv.field(), r.norm_x_neg, r.norm_x_pos);
    if (rep) {
      r.iterations = rep->iterations;
      r.residual = rep->residual;
    }
    return r;
  };

  auto dump = [&](int n) {
    if (!opt.write_files) return;
    const bool slice = (spec.slice_every > 0 && n % spec.slice_every == 0) ||
                       std::find(spec.slice_steps.begin(), spec.slice_steps.end(), n) != spec.slice_steps.end();
    if (slice) {
      std::ofstream os(dir / "slices" / ("step_" + std::to_string(n) + ".csv"));
      write_slice_csv(os, g, sv.field(), spec.slice_axis);
    }
    if (spec.snapshot_every > 0 && n % spec.snapshot_every == 0)
      save_snapshot(dir / "snapshots" / ("step_" + std::to_string(n) + ".tbcf"),
                    FieldSnapshot{sv.snapshot(), g.step(), spec.setup.time.tau, n});
  };

  std::ofstream metrics;
  std::ofstream steps;
  if (opt.write_files) {
    metrics.open(dir / "metrics.csv", std::ios::trunc);
    metrics << kMetricHeader;
    for (const auto& r : sum.metrics) metrics << metric_row(r);
    steps.open(dir / "steps.jsonl", sum.resumed ? std::ios::app : std::ios::trunc);
  }
  if (!sum.resumed) {
    sum.metrics.push_back(record(0, nullptr));
    if (opt.write_files) metrics << metric_row(sum.metrics.back());
    dump(0);
  }

  const int total = spec.setup.time.n_steps;
  while (sv.step_index() < total) {
    const StepReport rep = sv.step();
    const int n = rep.step;
    sum.metrics.push_back(record(n, &rep));
    sum.krylov_iterations += rep.iterations;
    sum.peak_hierarchy_values = std::max(sum.peak_hierarchy_values, sv.hierarchy_values());
    if (opt.write_files) {
      metrics << metric_row(sum.metrics.back()) << std::flush;
      nlohmann::json j{{"step", n},           {"iterations", rep.iterations}, {"residual", rep.residual},
                       {"norm", rep.norm},    {"wall_seconds", rep.wall_seconds},
                       {"converged", rep.converged}};
      steps << j.dump() << '\n' << std::flush;
    }
    dump(n);
    if (opt.write_files && spec.checkpoint_every > 0 && n % spec.checkpoint_every == 0 && n < total) {
      const fs::path tmp = dir / "checkpoint.tmp";
      {
        std::ofstream os(tmp, std::ios::binary);
        sv.save_checkpoint(os);
      }
      fs::rename(tmp, ckpt);
    }
    if (opt.log && (n % 10 == 0 || n == total)) {
      std::ostringstream os;
      os << spec.name << " step " << n << "/" << total << " norm " << rep.norm;
      if (sum.metrics.back().v) os << " V " << *sum.metrics.back().v;
      opt.log(os.str());
    }
    if (opt.stop_after > 0 && n >= opt.stop_after) break;
  }

  sum.steps_run = sv.step_index();
  sum.initial_norm = sum.metrics.front().norm;
  sum.final_norm = sum.metrics.back().norm;
  for (std::size_t i = 1; i < sum.metrics.size(); ++i) {
    const double prev = sum.metrics[i - 1].norm;
    if (prev > 0.0) sum.max_norm_ratio = std::max(sum.max_norm_ratio, sum.metrics[i].norm / prev);
    const auto& r = sum.metrics[i];
    if (r.v) {
      if (!sum.max_v || *r.v > *sum.max_v) {
        sum.max_v = r.v;
        sum.peak_v_step = r.n;
      }
      sum.final_v = r.v;
    }
    if (r.max_error) sum.max_error = std::max(sum.max_error.value_or(0.0), *r.max_error);
  }
  sum.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (opt.write_files && sum.steps_run == total && fs::exists(ckpt)) fs::remove(ckpt);
  return sum;
}

inline SeriesSummary run_any(const SeriesSpec& spec, const RunOptions& opt) {
  switch (spec.setup.grid.dim()) {
    case 1: return run_series<1>(spec, opt);
    case 2: return run_series<2>(spec, opt);
    case 3: return run_series<3>(spec, opt);
  }
  throw ConfigError("grid dimension must be 1, 2 or 3");
}

inline SolverSetup base_setup(const ExperimentConfig& c, BoundaryMode mode) {
  SolverSetup s;
  s.grid = c.grid();
  s.time = c.time();
  s.mode = mode;
  s.policy = c.policy;
  return s;
}

inline nlohmann::json summary_json(const SeriesSummary& s) {
  nlohmann::json j{{"name", s.name},
                   {"mode", to_string(s.mode)},
                   {"steps", s.steps_run},
                   {"initial_norm", s.initial_norm},
                   {"final_norm", s.final_norm},
                   {"max_norm_ratio", s.max_norm_ratio},
                   {"peak_hierarchy_values", s.peak_hierarchy_values},
                   {"krylov_iterations", s.krylov_iterations},
                   {"wall_seconds", s.wall_seconds},
                   {"resumed", s.resumed}};
  if (s.final_v) j["final_V"] = *s.final_v;
  if (s.max_v) {
    j["max_V"] = *s.max_v;
    j["peak_V_step"] = s.peak_v_step;
  }
  if (s.max_error) j["max_error"] = *s.max_error;
  return j;
}

}  // namespace detail

/// Steps at which the four barrier snapshots are taken, scaled from a 4000-unit horizon.
inline std::vector<int> barrier_checkpoint_steps(double tau, int steps) {
  std::vector<int> out;
  const double horizon = tau * steps;
  for (double t : {320.0, 640.0, 1280.0, 1920.0}) {
    const int n = static_cast<int>(std::lround(t * horizon / 4000.0 / tau));
    out.push_back(std::clamp(n, 0, steps));
  }
  return out;
}

inline std::vector<SeriesSummary> run_free_packets(const ExperimentConfig& c, const RunOptions& opt) {
  std::vector<SeriesSummary> out;
  const GridSpec g = c.grid();
  for (BoundaryMode mode : c.modes) {
    detail::SeriesSpec spec;
    spec.name = to_string(mode);
    spec.setup = detail::base_setup(c, mode);
    spec.initial = sample_packets(g, c.packets, 0.0);
    spec.reference = [g, p = c.packets](double t) { return sample_packets(g, p, t); };
    spec.slice_axis = c.slice_axis;
    spec.slice_every = c.slice_every;
    spec.snapshot_every = c.snapshot_every;
    spec.checkpoint_every = c.checkpoint_every;
    out.push_back(detail::run_any(spec, opt));
  }
  return out;
}

inline std::vector<SeriesSummary> run_barrier(const ExperimentConfig& c, const RunOptions& opt) {
  std::vector<SeriesSummary> out;
  const GridSpec g = c.grid();
  GaussianPacketParams packet{c.barrier_waist, 0.0, {1.0, 0.0, 0.0}};
  const std::vector<cplx> initial = sample_packets(g, PacketSum{{packet}}, 0.0);
  const std::vector<int> checkpoints = barrier_checkpoint_steps(c.tau, c.steps);
  std::vector<std::pair<std::string, bool>> runs{{"barrier", true}};
  if (c.barrier_control) runs.emplace_back("control", false);
  for (const auto& [name, shell] : runs) {
    detail::SeriesSpec spec;
    spec.name = name;
    spec.setup = detail::base_setup(c, c.modes.front());
    if (shell) spec.setup.potential = PotentialSpec{c.shell};
    spec.initial = initial;
    spec.slice_steps = checkpoints;
    spec.slice_steps.insert(spec.slice_steps.begin(), 0);
    spec.slice_axis = 1;
    spec.slice_every = c.slice_every;
    spec.snapshot_every = c.snapshot_every;
    spec.checkpoint_every = c.checkpoint_every;
    out.push_back(detail::run_any(spec, opt));
  }
  return out;
}

inline std::vector<SeriesSummary> run_plane_wave_1d(const ExperimentConfig& c, const RunOptions& opt) {
  const GridSpec g = c.grid();
  detail::SeriesSpec spec;
  spec.name = "plane_wave";
  spec.setup = detail::base_setup(c, BoundaryMode::fully_discrete_tbc);
  spec.setup.exterior_amplitude = c.plane_amplitude;
  spec.setup.exterior_q = c.plane_q;
  const double h = g.step();
  const cplx ratio = plane_wave_ratio(make_alpha(h, c.tau), c.plane_q, h);
  spec.initial.resize(g.node_count());
  for (int p = 0; p < g.nodes_per_axis(); ++p) spec.initial[p] = c.plane_amplitude * std::polar(1.0, c.plane_q * h * p);
  spec.error = [=, init = spec.initial](int n, std::span<const cplx> f) {
    const cplx gn = std::pow(ratio, n);
    double e = 0.0;
    for (std::size_t p = 0; p < f.size(); ++p) e = std::max(e, std::abs(f[p] - init[p] * gn));
    return e;
  };
  spec.slice_every = c.slice_every;
  spec.snapshot_every = c.snapshot_every;
  spec.checkpoint_every = c.checkpoint_every;
  return {detail::run_any(spec, opt)};
}

inline ExperimentResult run_experiment(const ExperimentConfig& c, const RunOptions& opt) {
  namespace fs = std::filesystem;
  check_memory(c, opt.large);
  const auto t0 = std::chrono::steady_clock::now();
  if (opt.write_files) fs::create_directories(opt.out_dir);
  ExperimentResult res;
  switch (c.kind) {
    case ExperimentKind::free_packets: res.series = run_free_packets(c, opt); break;
    case ExperimentKind::barrier: res.series = run_barrier(c, opt); break;
    case ExperimentKind::plane_wave_1d: res.series = run_plane_wave_1d(c, opt); break;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  nlohmann::json& r = res.report;
  r["config"] = config_to_json(c);
  r["environment"] = {{"compiler", __VERSION__},
                      {"cplusplus", static_cast<long>(__cplusplus)},
                      {"hardware_threads", std::thread::hardware_concurrency()}};
  r["memory_estimate"] = {{"hierarchy_values", estimate_memory(c).hierarchy_values},
                          {"bytes", estimate_memory(c).bytes}};
  r["wall_seconds"] = wall;
  for (const auto& s : res.series) r["series"].push_back(detail::summary_json(s));
  const int at = barrier_checkpoint_steps(c.tau, c.steps).back();
  if (c.kind == ExperimentKind::barrier && res.series.size() == 2 &&
      res.series[1].metrics.size() > static_cast<std::size_t>(at)) {
    const auto& b = res.series[0].metrics.at(static_cast<std::size_t>(at));
    const auto& ctl = res.series[1].metrics.at(static_cast<std::size_t>(at));
    r["barrier"] = {{"checkpoint_steps", barrier_checkpoint_steps(c.tau, c.steps)},
                    {"evaluated_at_step", at},
                    {"norm", b.norm},
                    {"control_norm", ctl.norm},
                    {"norm_x_neg", b.norm_x_neg},
                    {"norm_x_pos", b.norm_x_pos},
                    {"retains_more_than_control", b.norm > ctl.norm},
                    {"x_neg_share_exceeds_x_pos", b.norm_x_neg > b.norm_x_pos}};
  }
  if (opt.write_files) {
    std::ofstream os(opt.out_dir / "report.json");
    os << r.dump(2) << '\n';
  }
  return res;
}

}  // namespace tbc
