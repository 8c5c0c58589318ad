#include <CLI11.hpp>
#include <iomanip>
#include <iostream>
#include <json.hpp>

#include "tbc/estimates.hpp"
#include "tbc/experiment.hpp"
#include "tbc/tbc1d.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitSolver = 3;

int cmd_run(const std::string& config_path, const std::string& out, bool large, bool resume, int stop_after, bool quiet) {
  const tbc::ExperimentConfig cfg = tbc::load_config(config_path);
  tbc::RunOptions opt;
  opt.out_dir = out;
  opt.large = large;
  opt.resume = resume;
  opt.stop_after = stop_after;
  if (!quiet) opt.log = [](const std::string& s) { std::cerr << s << '\n'; };
  const tbc::ExperimentResult res = tbc::run_experiment(cfg, opt);
  nlohmann::json summary;
  for (const auto& s : res.series) summary.push_back(tbc::detail::summary_json(s));
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_coeffs(double h, double tau, int n, double q, const std::string& format) {
  const tbc::cplx alpha = tbc::make_alpha(h, tau);
  const tbc::TbcCoefficients c = tbc::compute_beta(alpha, n);
  const tbc::PlaneWaveExterior g = tbc::compute_g(alpha, q, h, n);
  if (format == "json") {
    nlohmann::json j;
    j["h"] = h;
    j["tau"] = tau;
    j["q"] = q;
    j["alpha"] = {alpha.real(), alpha.imag()};
    for (int k = 0; k <= n; ++k)
      j["rows"].push_back({{"n", k},
                           {"beta", {c.beta[k].real(), c.beta[k].imag()}},
                           {"phi", {c.phi[k].real(), c.phi[k].imag()}},
                           {"g", {g.g[k].real(), g.g[k].imag()}}});
    std::cout << j.dump(2) << '\n';
    return 0;
  }
  std::cout << "n,re_beta,im_beta,re_phi,im_phi,re_g,im_g\n" << std::setprecision(17);
  for (int k = 0; k <= n; ++k)
    std::cout << k << ',' << c.beta[k].real() << ',' << c.beta[k].imag() << ',' << c.phi[k].real() << ','
              << c.phi[k].imag() << ',' << g.g[k].real() << ',' << g.g[k].imag() << '\n';
  return 0;
}

int cmd_estimate(int dims, std::uint64_t nx, std::uint64_t ntau) {
  const tbc::NvBreakdown b = tbc::nv_breakdown(dims, nx, ntau);
  nlohmann::json j;
  j["dims"] = dims;
  j["nx"] = nx;
  j["ntau"] = ntau;
  j["total_values"] = b.total;
  j["bytes"] = tbc::detail::checked_mul(b.total, sizeof(tbc::cplx));
  for (int s = 0; s < dims; ++s)
    j["levels"].push_back({{"s", s}, {"multiplicity", b.multiplicity[s]}, {"values", b.per_level[s]}});
  const tbc::CostModel m = tbc::implementation_cost_model(dims);
  j["cost_coefficients"] = m.coefficients;
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crank-Nicolson Schroedinger solver with exact discrete transparent boundaries"};
  app.require_subcommand(1);

  std::string config;
  std::string out = "out";
  bool large = false;
  bool resume = false;
  int stop_after = 0;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run an experiment from an INI config");
  run->add_option("--config", config, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory");
  run->add_flag("--large", large, "Allow runs above desk-scale memory");
  run->add_flag("--resume", resume, "Resume from the last checkpoint in the output directory");
  run->add_option("--stop-after", stop_after, "Stop after this step, keeping the checkpoint")
      ->check(CLI::NonNegativeNumber);
  run->add_flag("--quiet", quiet, "No progress lines on stderr");

  double h = 1.0;
  double tau = 2.0;
  int n = 20;
  double q = 0.0;
  std::string format = "csv";
  auto* coeffs = app.add_subcommand("coeffs", "Print boundary kernel coefficients");
  coeffs->set_help_flag("--help", "Print this help message and exit");
  coeffs->add_option("--h", h, "Grid step")->check(CLI::PositiveNumber);
  coeffs->add_option("--tau", tau, "Time step")->check(CLI::PositiveNumber);
  coeffs->add_option("--n", n, "Highest index")->check(CLI::Range(0, 1 << 20));
  coeffs->add_option("--q", q, "Plane-wave number");
  coeffs->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  int dims = 3;
  std::uint64_t nx = 61;
  std::uint64_t ntau = 101;
  auto* estimate = app.add_subcommand("estimate", "Boundary memory breakdown as JSON");
  estimate->add_option("--dims", dims, "Dimension")->check(CLI::Range(1, 4));
  estimate->add_option("--nx", nx, "Nodes per axis")->check(CLI::PositiveNumber);
  estimate->add_option("--ntau", ntau, "Time points")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*run) return cmd_run(config, out, large, resume, stop_after, quiet);
    if (*coeffs) return cmd_coeffs(h, tau, n, q, format);
    if (*estimate) return cmd_estimate(dims, nx, ntau);
  } catch (const tbc::SolverError& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return kExitSolver;
  } catch (const tbc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
