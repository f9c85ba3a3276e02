// Command-line front end: simulate, fit, reproduce, oracle-check.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error,
// 3 convergence failure.

#include <cstdlib>
#include <iostream>
#include <numbers>
#include <random>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "biphoton/biphoton.hpp"

namespace {

using namespace biphoton;

enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kConvergence = 3 };

constexpr const char* kOutEnv = "BIPHOTON_OUT_DIR";

fs::path resolve_out(const std::string& flag, const std::string& fallback) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutEnv); env && *env) return env;
  return fallback;
}

void print_warnings(const SetupGeometry& g) {
  for (const auto& w : g.warnings()) std::cerr << "warning: " << w << '\n';
}

int cmd_simulate(const std::string& config_path, const std::string& scan_id, const std::string& out_flag,
                 std::optional<std::uint64_t> seed, bool noiseless) {
  const RunConfig cfg = load_config(config_path);
  print_warnings(cfg.geometry);
  ScanEntry entry = cfg.scan(scan_id);
  if (seed) entry.noise.rng_seed = *seed;
  if (noiseless) entry.noise.poisson_enabled = false;
  const FringeDataset data = simulate_scan(cfg.geometry, entry.scan, entry.envelope, entry.noise);
  const fs::path out = resolve_out(out_flag, cfg.output_dir);
  const fs::path csv = out / (entry.id + ".csv");
  save_dataset(data, csv);
  std::cout << "wrote " << csv.string() << " and " << sidecar_path(csv).string() << '\n';
  return kOk;
}

int cmd_fit(const std::string& data_path, const std::string& abscissa_flag, const std::string& kernel_flag,
            const std::string& out_flag) {
  const Abscissa axis = abscissa_flag == "B" ? Abscissa::B : Abscissa::A;
  const Kernel kernel = parse_kernel(kernel_flag);
  const fs::path csv = data_path;
  const FringeDataset data = load_dataset(csv);
  const bool has_meta = fs::exists(sidecar_path(csv));

  const FitResult r = fit(data, axis, initial_guess(data, axis, kernel));

  FitReportContext ctx;
  ctx.source = csv.filename().string();
  ctx.abscissa = axis;
  if (has_meta) {
    ctx.alpha = data.scan.alpha;
    ctx.k0 = linearized_k0(data.geometry);
  }
  const fs::path out = resolve_out(out_flag, csv.has_parent_path() ? csv.parent_path().string() : ".");
  const std::string stem = csv.stem().string();
  const fs::path report = out / fmt::format("{}_fit_{}.txt", stem, to_string(axis));
  write_file_atomic(report, fit_report(r, ctx));
  write_file_atomic(out / fmt::format("{}_model_{}.dat", stem, to_string(axis)),
                    model_curve(r.params, data.positions(axis)));

  std::cout << fmt::format("wavevector = {:.6f} rad/mm, visibility = {:.4f}, status = {}\n", r.params.wavevector * 1e-3,
                           r.params.visibility, to_string(r.status));
  if (ctx.k0) std::cout << fmt::format("ratio to linearized k0 = {:.6f}\n", r.params.wavevector / *ctx.k0);
  std::cout << "wrote " << report.string() << '\n';
  if (!r.converged) {
    std::cerr << "error: fit did not converge (" << to_string(r.status) << "); partial report written\n";
    return kConvergence;
  }
  return kOk;
}

int cmd_reproduce(const std::string& config_path, const std::string& out_flag, std::optional<std::uint64_t> seed,
                  bool noiseless) {
  RunConfig cfg = load_config(config_path);
  print_warnings(cfg.geometry);
  if (seed) cfg.reproduce.noise.rng_seed = *seed;
  if (noiseless) cfg.reproduce.noise.poisson_enabled = false;
  const ReproduceReport rep = run_reproduction(cfg.geometry, cfg.reproduce);
  const fs::path out = resolve_out(out_flag, cfg.output_dir);
  write_reproduction(rep, out, cfg.write_csv, cfg.write_plots);
  std::cout << report_markdown(rep);
  std::cout << "wrote " << (out / "reproduce.csv").string() << " and " << (out / "reproduce.md").string() << '\n';
  return rep.all_converged() ? kOk : kConvergence;
}

int cmd_oracle_check(int trials, std::uint64_t seed, double prefactor) {
  if (trials < 1) {
    std::cerr << "error: --trials must be >= 1\n";
    return kUsage;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> path(1e-3, 20.0 * std::numbers::pi);
  double worst = 0.0;
  PhaseConfig worst_cfg;
  for (int t = 0; t < trials; ++t) {
    PhaseConfig c;
    c.phi_1s = phase(rng);
    c.phi_1i = phase(rng);
    c.phi_2s = phase(rng);
    c.phi_2i = phase(rng);
    c.k = 1.0;
    c.r_1s = path(rng);
    c.r_1i = path(rng);
    c.r_2s = path(rng);
    c.r_2i = path(rng);
    const double closed = coincidence_rate_closed(c);
    const double dev = std::abs(coincidence_rate_oracle(c, 2, prefactor) - closed) / std::max(1.0, closed);
    if (dev > worst) {
      worst = dev;
      worst_cfg = c;
    }
  }
  const bool pass = worst <= 1e-12;
  std::cout << fmt::format("oracle-check: {} trials, max deviation {:.3e} -> {}\n", trials, worst, pass ? "PASS" : "FAIL");
  if (!pass) {
    const auto& c = worst_cfg;
    std::cerr << fmt::format(
        "offending config: phi_1s={} phi_1i={} phi_2s={} phi_2i={} k={} r_1s={} r_1i={} r_2s={} r_2i={}\n",
        format_exact(c.phi_1s), format_exact(c.phi_1i), format_exact(c.phi_2s), format_exact(c.phi_2i),
        format_exact(c.k), format_exact(c.r_1s), format_exact(c.r_1i), format_exact(c.r_2s), format_exact(c.r_2i));
    return kData;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Double-crystal biphoton interferometer: simulation, fringe fitting and reproduction"};
  app.require_subcommand(1);

  std::string config, scan_id, out, data, abscissa = "A", kernel = "sinc2";
  std::uint64_t seed = 0;
  bool noiseless = false;
  int trials = 100;
  double prefactor = kOracleScale;

  auto* sim = app.add_subcommand("simulate", "Simulate one configured scan and write <id>.csv + <id>.meta");
  sim->add_option("--config", config, "Config file")->required();
  sim->add_option("--scan", scan_id, "Scan identifier ([scan.<id>] section)")->required();
  sim->add_option("--out", out, std::string("Output directory (default: $") + kOutEnv + ", then [output] dir)");
  auto* sim_seed = sim->add_option("--seed", seed, "Override the scan's RNG seed");
  sim->add_flag("--noiseless", noiseless, "Disable Poisson noise");

  auto* fitc = app.add_subcommand("fit", "Fit the coincidence fringe of a dataset CSV");
  fitc->add_option("--data", data, "Dataset CSV (sidecar .meta read if present)")->required();
  fitc->add_option("--abscissa", abscissa, "Detector coordinate to fit against")->check(CLI::IsMember({"A", "B"}));
  fitc->add_option("--kernel", kernel, "Envelope kernel")->check(CLI::IsMember({"sinc2", "gaussian"}));
  fitc->add_option("--out", out, "Output directory (default: next to the dataset)");

  auto* rep = app.add_subcommand("reproduce", "Run the canonical alpha set and tabulate wavevector ratios");
  rep->add_option("--config", config, "Config file")->required();
  rep->add_option("--out", out, "Output directory");
  auto* rep_seed = rep->add_option("--seed", seed, "Override the reproduction RNG seed");
  rep->add_flag("--noiseless", noiseless, "Disable Poisson noise");

  auto* orc = app.add_subcommand("oracle-check", "Compare Fock-space and closed-form coincidence rates");
  orc->add_option("--trials", trials, "Number of random phase configurations");
  orc->add_option("--seed", seed, "RNG seed");
  orc->add_option("--prefactor", prefactor, "Oracle scale constant (test hook)")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*sim) return cmd_simulate(config, scan_id, out, *sim_seed ? std::optional(seed) : std::nullopt, noiseless);
    if (*fitc) return cmd_fit(data, abscissa, kernel, out);
    if (*rep) return cmd_reproduce(config, out, *rep_seed ? std::optional(seed) : std::nullopt, noiseless);
    if (*orc) return cmd_oracle_check(trials, seed, prefactor);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
