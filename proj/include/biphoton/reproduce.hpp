// The canonical alpha set: simulate each run, fit both detector axes, and
// tabulate fitted wavevectors against the alpha = 0 reference.

#pragma once

#include <cmath>
#include <cstdint>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "biphoton/fitfringe.hpp"
#include "biphoton/io.hpp"
#include "biphoton/scan.hpp"

namespace biphoton {

inline constexpr std::array<double, 6> kCanonicalAlphas{0.0, 1.0, 0.5, -0.5, -2.0, -3.0};

/// File-name tag: 0 -> "alpha_0", +1/2 -> "alpha_p1_2", -3 -> "alpha_m3".
inline std::string alpha_tag(double alpha) {
  if (alpha == 0.0) return "alpha_0";
  const char sign = alpha > 0 ? 'p' : 'm';
  const double a = std::abs(alpha);
  for (int den = 1; den <= 8; ++den) {
    const double num = a * den;
    if (std::abs(num - std::round(num)) < 1e-12) {
      const auto n = static_cast<long long>(std::round(num));
      return den == 1 ? fmt::format("alpha_{}{}", sign, n) : fmt::format("alpha_{}{}_{}", sign, n, den);
    }
  }
  return fmt::format("alpha_{}{}", sign, format_exact(a));
}

/// Scan for one alpha. The abscissa is the detector that moves farther; its
/// half-range is chosen so the fringe phase sweep matches the alpha = 0 run
/// (capped at 4x the base range).
inline ScanSpec canonical_scan(double alpha, const ReproduceSettings& s) {
  ScanSpec spec;
  spec.alpha = alpha;
  spec.n_points = s.n_points;
  spec.abscissa = std::abs(alpha) <= 1.0 ? Abscissa::A : Abscissa::B;
  double gain = 1.0;
  if (alpha != 0.0) gain = spec.abscissa == Abscissa::A ? std::abs(1.0 + alpha) : std::abs(1.0 + 1.0 / alpha);
  const double h = gain > 0.25 ? s.half_range / gain : 4.0 * s.half_range;
  spec.start = -h;
  spec.stop = h;
  return spec;
}

inline std::uint64_t run_seed(std::uint64_t seed, std::size_t run_index) {
  return point_seed(seed ^ 0x72756e73ULL, run_index);
}

struct RunOutcome {
  std::string id;
  double alpha = 0.0;
  std::optional<FringeDataset> data;
  std::optional<FitResult> fit_A;
  std::optional<FitResult> fit_B;
  std::string error;
};

struct ReproduceRow {
  double alpha = 0.0;
  Viewpoint viewpoint = Viewpoint::signal;
  double fitted_wavevector = NAN;
  double k0_reference = NAN;
  double measured_ratio = NAN;
  double predicted_ratio = NAN;
  double relative_error = NAN;
  double visibility = NAN;
  bool converged = false;
  std::string status;  // fit status, or the error that prevented the row
};

struct ReproduceReport {
  std::vector<ReproduceRow> rows;
  std::vector<RunOutcome> runs;
  double k0_fit = NAN;
  double k0_linearized = NAN;

  bool all_converged() const {
    for (const auto& r : rows)
      if (!r.converged) return false;
    return !rows.empty();
  }
};

inline RunOutcome run_one(const SetupGeometry& geom, const ReproduceSettings& s, double alpha, std::size_t index) {
  RunOutcome out;
  out.id = alpha_tag(alpha);
  out.alpha = alpha;
  try {
    NoiseSpec noise = s.noise;
    noise.rng_seed = run_seed(s.noise.rng_seed, index);
    out.data = simulate_scan(geom, canonical_scan(alpha, s), s.envelope, noise);
    out.fit_A = fit(*out.data, Abscissa::A, initial_guess(*out.data, Abscissa::A, s.kernel), s.fit);
    if (alpha != 0.0) out.fit_B = fit(*out.data, Abscissa::B, initial_guess(*out.data, Abscissa::B, s.kernel), s.fit);
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

/// Runs the canonical set concurrently and assembles the table after joining.
inline ReproduceReport run_reproduction(const SetupGeometry& geom, const ReproduceSettings& settings) {
  ReproduceReport rep;
  rep.k0_linearized = linearized_k0(geom);

  std::vector<std::future<RunOutcome>> jobs;
  for (std::size_t i = 0; i < kCanonicalAlphas.size(); ++i)
    jobs.push_back(std::async(std::launch::async, run_one, std::cref(geom), std::cref(settings), kCanonicalAlphas[i], i));
  for (auto& j : jobs) rep.runs.push_back(j.get());

  const RunOutcome& base = rep.runs.front();
  std::string base_error;
  if (!base.error.empty()) {
    base_error = "alpha=0 run failed: " + base.error;
  } else if (!base.fit_A->converged) {
    base_error = "alpha=0 fit did not converge";
  }
  if (base.fit_A) rep.k0_fit = base.fit_A->params.wavevector;

  auto make_row = [&](const RunOutcome& run, Viewpoint vp) {
    ReproduceRow row;
    row.alpha = run.alpha;
    row.viewpoint = vp;
    row.k0_reference = rep.k0_fit;
    row.predicted_ratio = expected_wavevector(run.alpha, vp, 1.0);
    const auto& f = vp == Viewpoint::signal ? run.fit_A : run.fit_B;
    if (!run.error.empty()) {
      row.status = "error: " + run.error;
      return row;
    }
    row.fitted_wavevector = f->params.wavevector;
    row.visibility = f->params.contrast();
    row.measured_ratio = row.fitted_wavevector / rep.k0_fit;
    row.relative_error = std::abs(row.measured_ratio - row.predicted_ratio) / row.predicted_ratio;
    row.converged = f->converged && base_error.empty();
    row.status = base_error.empty() ? to_string(f->status) : "error: " + base_error;
    return row;
  };

  for (const auto& run : rep.runs) {
    rep.rows.push_back(make_row(run, Viewpoint::signal));
    if (run.alpha != 0.0) rep.rows.push_back(make_row(run, Viewpoint::idler));
  }
  return rep;
}

namespace detail {

inline std::string fixed_or_dash(double v, int prec) { return std::isfinite(v) ? fmt::format("{:.{}f}", v, prec) : "-"; }

}  // namespace detail

/// Wavevectors in rad/mm.
inline std::string report_csv(const ReproduceReport& rep) {
  std::string out =
      "alpha,viewpoint,fitted_wavevector_per_mm,k0_per_mm,measured_ratio,predicted_ratio,relative_error,visibility,"
      "converged,status\n";
  for (const auto& r : rep.rows) {
    out += fmt::format("{:.6f},{},{},{},{},{},{},{},{},{}\n", r.alpha, to_string(r.viewpoint),
                       detail::fixed_or_dash(r.fitted_wavevector * 1e-3, 6), detail::fixed_or_dash(r.k0_reference * 1e-3, 6),
                       detail::fixed_or_dash(r.measured_ratio, 6), detail::fixed_or_dash(r.predicted_ratio, 6),
                       detail::fixed_or_dash(r.relative_error, 6), detail::fixed_or_dash(r.visibility, 4),
                       r.converged ? "true" : "false", r.status);
  }
  return out;
}

inline std::string report_markdown(const ReproduceReport& rep) {
  std::string out;
  out += fmt::format("k0 (fitted, alpha = 0): {} rad/mm\n", detail::fixed_or_dash(rep.k0_fit * 1e-3, 6));
  out += fmt::format("k0 (linearized geometry): {} rad/mm\n\n", detail::fixed_or_dash(rep.k0_linearized * 1e-3, 6));
  out += fmt::format("| {:>7} | {:<9} | {:>14} | {:>10} | {:>10} | {:>10} | {:>10} | {:<14} |\n", "alpha", "viewpoint",
                     "k_fit (rad/mm)", "ratio", "predicted", "rel. error", "visibility", "status");
  out += fmt::format("|{:-<9}|{:-<11}|{:-<16}|{:-<12}|{:-<12}|{:-<12}|{:-<12}|{:-<16}|\n", "", "", "", "", "", "", "", "");
  for (const auto& r : rep.rows) {
    out += fmt::format("| {:>7.3f} | {:<9} | {:>14} | {:>10} | {:>10} | {:>10} | {:>10} | {:<14} |\n", r.alpha,
                       to_string(r.viewpoint), detail::fixed_or_dash(r.fitted_wavevector * 1e-3, 6),
                       detail::fixed_or_dash(r.measured_ratio, 6), detail::fixed_or_dash(r.predicted_ratio, 6),
                       detail::fixed_or_dash(r.relative_error, 6), detail::fixed_or_dash(r.visibility, 4), r.status);
  }
  return out;
}

/// Positions (mm), counts and fitted curve, one file per detector axis.
inline std::string run_plot_data(const FringeDataset& d, Abscissa axis, const FitResult& f) {
  const auto& x = d.positions(axis);
  std::string out = fmt::format("# pos_{}_mm coinc fit\n", to_string(axis));
  for (std::size_t j = 0; j < d.size(); ++j)
    out += fmt::format("{:.9f} {} {:.9g}\n", x[j] * 1e3, format_exact(d.coincidences[j]), f.params(x[j]));
  return out;
}

inline void write_reproduction(const ReproduceReport& rep, const fs::path& dir, bool csv, bool plots) {
  write_file_atomic(dir / "reproduce.csv", report_csv(rep));
  write_file_atomic(dir / "reproduce.md", report_markdown(rep));
  for (const auto& run : rep.runs) {
    if (!run.data) continue;
    if (csv) save_dataset(*run.data, dir / (run.id + ".csv"));
    if (plots) {
      if (run.fit_A) write_file_atomic(dir / (run.id + "_A.dat"), run_plot_data(*run.data, Abscissa::A, *run.fit_A));
      if (run.fit_B) write_file_atomic(dir / (run.id + "_B.dat"), run_plot_data(*run.data, Abscissa::B, *run.fit_B));
    }
  }
}

}  // namespace biphoton
