// Persistence: INI-style run configuration, dataset CSV with a metadata
// sidecar, and fit reports.
//
// Config and sidecar values carry their unit in the key suffix
// (`_m`, `_mm`, `_um`, `_nm` for lengths, `_rad`, `_deg` for angles). The
// sidecar is always written in metres/radians with round-trip precision so a
// reload reproduces the in-memory metadata exactly.

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "biphoton/errors.hpp"
#include "biphoton/fitfringe.hpp"
#include "biphoton/geometry.hpp"
#include "biphoton/scan.hpp"

namespace biphoton {

namespace fs = std::filesystem;
using boost::property_tree::ptree;

/// Shortest decimal that parses back to the same double.
inline std::string format_exact(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& what) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v))
    throw DataError(fmt::format("{}: cannot parse '{}' as a number", what, s));
  return v;
}

/// Writes via a temporary file and rename so readers never see partial files.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw DataError(fmt::format("cannot create directory {}: {}", path.parent_path().string(), ec.message()));
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write {}", tmp.string()));
    out << content;
    if (!out) throw DataError(fmt::format("write failed for {}", tmp.string()));
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError(fmt::format("cannot rename {} to {}: {}", tmp.string(), path.string(), ec.message()));
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Keyed sections with unit suffixes

namespace detail {

inline const std::map<std::string, double, std::less<>>& length_units() {
  static const std::map<std::string, double, std::less<>> u{{"m", 1.0}, {"mm", 1e-3}, {"um", 1e-6}, {"nm", 1e-9}};
  return u;
}

inline const std::map<std::string, double, std::less<>>& angle_units() {
  static const std::map<std::string, double, std::less<>> u{{"rad", 1.0}, {"deg", std::numbers::pi / 180.0}};
  return u;
}

/// Reads one section, tracking which keys were consumed so leftovers can be
/// reported as typos.
class Section {
 public:
  Section(const ptree& tree, std::string name) : tree_(tree), name_(std::move(name)) {
    for (const auto& [key, child] : tree_) {
      if (!child.empty()) throw ConfigError(fmt::format("[{}]: unexpected nested key '{}'", name_, key));
    }
  }

  std::optional<std::string> raw(const std::string& key) {
    auto it = tree_.find(key);
    if (it == tree_.not_found()) return std::nullopt;
    used_.insert(key);
    return it->second.data();
  }

  double number(const std::string& key, double fallback) {
    auto v = raw(key);
    return v ? to_number(key, *v) : fallback;
  }

  long long integer(const std::string& key, long long fallback) {
    auto v = raw(key);
    if (!v) return fallback;
    long long out = 0;
    const std::string s = trim(*v);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
      throw ConfigError(fmt::format("[{}] {}: expected an integer, got '{}'", name_, key, s));
    return out;
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    auto v = raw(key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    const std::string s = trim(*v);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
      throw ConfigError(fmt::format("[{}] {}: expected a non-negative integer, got '{}'", name_, key, s));
    return out;
  }

  bool boolean(const std::string& key, bool fallback) {
    auto v = raw(key);
    if (!v) return fallback;
    const std::string s = trim(*v);
    if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
    if (s == "false" || s == "no" || s == "0" || s == "off") return false;
    throw ConfigError(fmt::format("[{}] {}: expected a boolean, got '{}'", name_, key, s));
  }

  std::string text(const std::string& key, const std::string& fallback) {
    auto v = raw(key);
    return v ? trim(*v) : fallback;
  }

  double length(const std::string& base, double fallback) { return with_unit(base, length_units(), fallback); }
  double angle(const std::string& base, double fallback) { return with_unit(base, angle_units(), fallback); }

  void reject_unknown() const {
    for (const auto& [key, child] : tree_) {
      if (!used_.contains(key)) throw ConfigError(fmt::format("[{}]: unknown key '{}'", name_, key));
    }
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  double to_number(const std::string& key, const std::string& v) const {
    try {
      return parse_double(v, fmt::format("[{}] {}", name_, key));
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
  }

  double with_unit(const std::string& base, const std::map<std::string, double, std::less<>>& units, double fallback) {
    std::optional<double> found;
    for (const auto& [suffix, factor] : units) {
      const std::string key = base + "_" + suffix;
      if (auto v = raw(key)) {
        if (found) throw ConfigError(fmt::format("[{}]: '{}' given in more than one unit", name_, base));
        found = factor == 1.0 ? to_number(key, *v) : to_number(key, *v) * factor;
      }
    }
    return found.value_or(fallback);
  }

  const ptree& tree_;
  std::string name_;
  std::set<std::string> used_;
};

inline const ptree& section_or_empty(const ptree& root, const std::string& name) {
  static const ptree empty;
  auto it = root.find(name);
  return it == root.not_found() ? empty : it->second;
}

inline Abscissa parse_abscissa(const std::string& s) {
  if (s == "A" || s == "a") return Abscissa::A;
  if (s == "B" || s == "b") return Abscissa::B;
  throw ConfigError(fmt::format("abscissa must be A or B, got '{}'", s));
}

}  // namespace detail

inline Kernel parse_kernel(const std::string& s) {
  if (s == "sinc2") return Kernel::sinc2;
  if (s == "gaussian") return Kernel::gaussian;
  throw ConfigError(fmt::format("kernel must be sinc2 or gaussian, got '{}'", s));
}

// ---------------------------------------------------------------------------
// Run configuration

struct ScanEntry {
  std::string id;
  ScanSpec scan;
  EnvelopeSpec envelope;
  NoiseSpec noise;
};

/// Settings for the canonical alpha set.
struct ReproduceSettings {
  double half_range = 1e-3;  // abscissa half-range of the alpha = 0 run
  int n_points = 201;
  EnvelopeSpec envelope;
  NoiseSpec noise;
  Kernel kernel = Kernel::sinc2;
  FitOptions fit;
};

struct RunConfig {
  SetupGeometry geometry;
  std::vector<ScanEntry> scans;
  std::string output_dir = "out";
  bool write_csv = true;
  bool write_plots = true;
  ReproduceSettings reproduce;

  const ScanEntry& scan(const std::string& id) const {
    for (const auto& s : scans)
      if (s.id == id) return s;
    throw ConfigError(fmt::format("unknown scan id '{}'", id));
  }
};

namespace detail {

inline SetupGeometry read_geometry(Section& s) {
  SetupGeometry g;
  g.pump_wavelength = s.length("pump_wavelength", g.pump_wavelength);
  g.downconverted_wavelength = s.length("downconverted_wavelength", g.downconverted_wavelength);
  g.crystal_separation = s.length("crystal_separation", g.crystal_separation);
  g.baseline = s.length("baseline", g.baseline);
  g.emission_angle = s.angle("emission_angle", g.emission_angle);
  g.slit_width = s.length("slit_width", g.slit_width);
  g.pump_phase_diff = s.angle("pump_phase_diff", g.pump_phase_diff);
  return g;
}

inline EnvelopeSpec read_envelope(Section& s, EnvelopeSpec e = {}) {
  e.peak_rate = s.number("peak_rate", e.peak_rate);
  e.center = s.length("center", e.center);
  e.width = s.length("width", e.width);
  e.visibility = s.number("visibility", e.visibility);
  return e;
}

inline NoiseSpec read_noise(Section& s, NoiseSpec n = {}) {
  n.poisson_enabled = s.boolean("poisson", n.poisson_enabled);
  n.rng_seed = s.unsigned_integer("seed", n.rng_seed);
  n.slit_quadrature_points = static_cast<int>(s.integer("slit_quadrature_points", n.slit_quadrature_points));
  return n;
}

inline ScanSpec read_scan(Section& s) {
  ScanSpec sc;
  sc.alpha = s.number("alpha", sc.alpha);
  sc.abscissa = parse_abscissa(s.text("abscissa", "A"));
  sc.start = s.length("start", sc.start);
  sc.stop = s.length("stop", sc.stop);
  sc.n_points = static_cast<int>(s.integer("n_points", sc.n_points));
  sc.fixed_position = s.length("fixed_position", sc.fixed_position);
  return sc;
}

template <typename F>
auto wrap_invalid(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("{}: {}", where, e.what()));
  }
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in) {
  ptree root;
  try {
    boost::property_tree::read_ini(in, root);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(fmt::format("config parse error: {}", e.what()));
  }

  RunConfig cfg;
  std::set<std::string> ids;
  for (const auto& [name, tree] : root) {
    if (name == "geometry") {
      detail::Section s(tree, name);
      cfg.geometry = detail::read_geometry(s);
      s.reject_unknown();
    } else if (name == "output") {
      detail::Section s(tree, name);
      cfg.output_dir = s.text("dir", cfg.output_dir);
      cfg.write_csv = s.boolean("csv", cfg.write_csv);
      cfg.write_plots = s.boolean("plots", cfg.write_plots);
      s.reject_unknown();
    } else if (name == "reproduce") {
      detail::Section s(tree, name);
      auto& r = cfg.reproduce;
      r.half_range = s.length("half_range", r.half_range);
      r.n_points = static_cast<int>(s.integer("n_points", r.n_points));
      r.envelope = detail::read_envelope(s, r.envelope);
      r.noise = detail::read_noise(s, r.noise);
      r.kernel = parse_kernel(s.text("kernel", to_string(r.kernel)));
      r.fit.max_iter = static_cast<int>(s.integer("max_iter", r.fit.max_iter));
      r.fit.tol = s.number("tol", r.fit.tol);
      s.reject_unknown();
      if (!(r.half_range > 0.0)) throw ConfigError("[reproduce] half_range must be > 0");
      if (r.n_points < 8) throw ConfigError("[reproduce] n_points must be >= 8");
      if (r.fit.max_iter < 1 || !(r.fit.tol > 0.0)) throw ConfigError("[reproduce] max_iter >= 1 and tol > 0 required");
      detail::wrap_invalid("[reproduce]", [&] {
        r.envelope.validate();
        r.noise.validate();
        return 0;
      });
    } else if (name.starts_with("scan.")) {
      ScanEntry e;
      e.id = name.substr(5);
      if (e.id.empty()) throw ConfigError("scan section needs an identifier: [scan.<id>]");
      if (!ids.insert(e.id).second) throw ConfigError(fmt::format("duplicate scan id '{}'", e.id));
      detail::Section s(tree, name);
      e.scan = detail::read_scan(s);
      e.envelope = detail::read_envelope(s);
      e.noise = detail::read_noise(s);
      s.reject_unknown();
      detail::wrap_invalid("[" + name + "]", [&] {
        e.scan.validate();
        e.envelope.validate();
        e.noise.validate();
        return 0;
      });
      cfg.scans.push_back(std::move(e));
    } else {
      throw ConfigError(fmt::format("unknown section [{}]", name));
    }
  }
  detail::wrap_invalid("[geometry]", [&] {
    cfg.geometry.validate();
    return 0;
  });
  return cfg;
}

inline RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config {}", path.string()));
  return parse_config(in);
}

// ---------------------------------------------------------------------------
// Dataset CSV + sidecar

inline constexpr std::string_view kCsvHeader = "index,pos_A_mm,pos_B_mm,singles_A,singles_B,coinc";

inline std::string format_count(double v, bool integral) {
  return integral ? fmt::format("{}", static_cast<long long>(v)) : format_exact(v);
}

inline std::string dataset_csv(const FringeDataset& d) {
  d.check_shape();
  const bool integral = d.noise.poisson_enabled;
  std::string out(kCsvHeader);
  out += '\n';
  for (std::size_t j = 0; j < d.size(); ++j) {
    out += fmt::format("{},{},{},{},{},{}\n", j, format_exact(d.positions_A[j] * 1e3), format_exact(d.positions_B[j] * 1e3),
                       format_count(d.singles_A[j], integral), format_count(d.singles_B[j], integral),
                       format_count(d.coincidences[j], integral));
  }
  return out;
}

inline std::string dataset_meta(const FringeDataset& d) {
  const auto& g = d.geometry;
  const auto& s = d.scan;
  const auto& e = d.envelope;
  const auto& n = d.noise;
  std::string out;
  out += "[geometry]\n";
  out += fmt::format("pump_wavelength_m = {}\n", format_exact(g.pump_wavelength));
  out += fmt::format("downconverted_wavelength_m = {}\n", format_exact(g.downconverted_wavelength));
  out += fmt::format("crystal_separation_m = {}\n", format_exact(g.crystal_separation));
  out += fmt::format("baseline_m = {}\n", format_exact(g.baseline));
  out += fmt::format("emission_angle_rad = {}\n", format_exact(g.emission_angle));
  out += fmt::format("slit_width_m = {}\n", format_exact(g.slit_width));
  out += fmt::format("pump_phase_diff_rad = {}\n", format_exact(g.pump_phase_diff));
  out += "\n[scan]\n";
  out += fmt::format("alpha = {}\n", format_exact(s.alpha));
  out += fmt::format("abscissa = {}\n", to_string(s.abscissa));
  out += fmt::format("start_m = {}\n", format_exact(s.start));
  out += fmt::format("stop_m = {}\n", format_exact(s.stop));
  out += fmt::format("n_points = {}\n", s.n_points);
  out += fmt::format("fixed_position_m = {}\n", format_exact(s.fixed_position));
  out += "\n[envelope]\n";
  out += fmt::format("peak_rate = {}\n", format_exact(e.peak_rate));
  out += fmt::format("center_m = {}\n", format_exact(e.center));
  out += fmt::format("width_m = {}\n", format_exact(e.width));
  out += fmt::format("visibility = {}\n", format_exact(e.visibility));
  out += "\n[noise]\n";
  out += fmt::format("poisson = {}\n", n.poisson_enabled ? "true" : "false");
  out += fmt::format("seed = {}\n", n.rng_seed);
  out += fmt::format("slit_quadrature_points = {}\n", n.slit_quadrature_points);
  out += "\n[computed]\n";
  out += fmt::format("reference_position_m = {}\n", format_exact(g.reference_position()));
  out += fmt::format("linearized_k0_per_m = {}\n", format_exact(linearized_k0(g)));
  return out;
}

/// `<stem>.meta` next to `<stem>.csv`.
inline fs::path sidecar_path(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension(".meta");
  return p;
}

inline void save_dataset(const FringeDataset& d, const fs::path& csv) {
  write_file_atomic(csv, dataset_csv(d));
  write_file_atomic(sidecar_path(csv), dataset_meta(d));
}

inline FringeDataset parse_dataset_csv(const std::string& text) {
  FringeDataset d;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw DataError(fmt::format("unexpected CSV header '{}'", line));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest = line;
    for (;;) {
      const auto c = rest.find(',');
      f.push_back(rest.substr(0, c));
      if (c == std::string_view::npos) break;
      rest.remove_prefix(c + 1);
    }
    const std::string where = fmt::format("CSV line {}", line_no);
    if (f.size() != 6) throw DataError(fmt::format("{}: expected 6 fields, got {}", where, f.size()));
    const double idx = parse_double(f[0], where);
    if (idx != static_cast<double>(d.coincidences.size()))
      throw DataError(fmt::format("{}: index {} out of sequence", where, f[0]));
    d.positions_A.push_back(parse_double(f[1], where) / 1e3);
    d.positions_B.push_back(parse_double(f[2], where) / 1e3);
    d.singles_A.push_back(parse_double(f[3], where));
    d.singles_B.push_back(parse_double(f[4], where));
    d.coincidences.push_back(parse_double(f[5], where));
    for (double v : {d.singles_A.back(), d.singles_B.back(), d.coincidences.back()})
      if (v < 0.0) throw DataError(fmt::format("{}: negative count", where));
  }
  return d;
}

inline void parse_dataset_meta(const std::string& text, FringeDataset& d) {
  ptree root;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, root);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw DataError(fmt::format("sidecar parse error: {}", e.what()));
  }
  try {
    detail::Section g(detail::section_or_empty(root, "geometry"), "geometry");
    d.geometry = detail::read_geometry(g);
    detail::Section s(detail::section_or_empty(root, "scan"), "scan");
    d.scan = detail::read_scan(s);
    detail::Section e(detail::section_or_empty(root, "envelope"), "envelope");
    d.envelope = detail::read_envelope(e);
    detail::Section n(detail::section_or_empty(root, "noise"), "noise");
    d.noise = detail::read_noise(n);
  } catch (const ConfigError& e) {
    throw DataError(fmt::format("sidecar: {}", e.what()));
  }
}

/// Checks the dataset invariants that a loaded file must satisfy.
inline void validate_dataset(const FringeDataset& d, double rel_tol = 1e-9) {
  d.check_shape();
  if (d.size() != static_cast<std::size_t>(d.scan.n_points))
    throw DataError(fmt::format("dataset has {} rows but metadata says {}", d.size(), d.scan.n_points));
  const double ref = d.geometry.reference_position();
  const double span = std::abs(d.scan.stop - d.scan.start) * std::max(1.0, std::abs(d.scan.alpha));
  if (d.scan.alpha == 0.0) return;
  for (std::size_t j = 0; j < d.size(); ++j) {
    const double mismatch = (d.positions_B[j] - ref) - d.scan.alpha * (d.positions_A[j] - ref);
    if (std::abs(mismatch) > rel_tol * span)
      throw DataError(fmt::format("row {}: detector positions violate the scan ratio alpha = {}", j, d.scan.alpha));
  }
}

/// Loads `<stem>.csv` and, when present, its sidecar. Without a sidecar the
/// metadata keeps defaults and n_points follows the file.
inline FringeDataset load_dataset(const fs::path& csv) {
  FringeDataset d = parse_dataset_csv(read_file(csv));
  const fs::path meta = sidecar_path(csv);
  if (fs::exists(meta)) {
    parse_dataset_meta(read_file(meta), d);
    validate_dataset(d);
  } else {
    d.scan.n_points = static_cast<int>(d.size());
  }
  return d;
}

// ---------------------------------------------------------------------------
// Fit report

struct FitReportContext {
  std::string source;
  Abscissa abscissa = Abscissa::A;
  std::optional<double> alpha;
  std::optional<double> k0;  // reference wavevector (per metre)
};

inline std::string fit_report(const FitResult& r, const FitReportContext& ctx) {
  static constexpr std::array<const char*, kNumParams> units{"", "", "_m", "_m", "", "_per_m", "_rad"};
  std::string out;
  out += "[fit]\n";
  out += fmt::format("source = {}\n", ctx.source);
  out += fmt::format("abscissa = {}\n", to_string(ctx.abscissa));
  out += fmt::format("kernel = {}\n", to_string(r.params.kernel));
  out += fmt::format("status = {}\n", to_string(r.status));
  out += fmt::format("converged = {}\n", r.converged ? "true" : "false");
  out += fmt::format("iterations = {}\n", r.iterations);
  out += fmt::format("residual_ssq = {}\n", format_exact(r.residual_ssq));
  out += "\n[params]\n";
  for (std::size_t i = 0; i < kNumParams; ++i)
    out += fmt::format("{}{} = {}\n", kParamNames[i], units[i], format_exact(r.params.get(static_cast<Param>(i))));
  out += "\n[std_errors]\n";
  for (std::size_t i = 0; i < kNumParams; ++i)
    out += fmt::format("{}{} = {}\n", kParamNames[i], units[i], format_exact(r.std_errors[i]));
  if (ctx.alpha || ctx.k0) {
    out += "\n[reference]\n";
    if (ctx.alpha) out += fmt::format("alpha = {}\n", format_exact(*ctx.alpha));
    if (ctx.k0) {
      out += fmt::format("k0_per_m = {}\n", format_exact(*ctx.k0));
      out += fmt::format("wavevector_ratio = {}\n", format_exact(r.params.wavevector / *ctx.k0));
    }
  }
  return out;
}

/// Two columns: position (mm) and model value on a grid 4x denser than the data.
inline std::string model_curve(const FringeModel& m, std::span<const double> positions) {
  const auto [lo, hi] = std::minmax_element(positions.begin(), positions.end());
  const std::size_t n = std::max<std::size_t>(2, positions.size() * 4);
  std::string out = "# pos_mm model\n";
  for (std::size_t j = 0; j < n; ++j) {
    const double x = *lo + (*hi - *lo) * static_cast<double>(j) / static_cast<double>(n - 1);
    out += fmt::format("{:.9f} {:.9g}\n", x * 1e3, m(x));
  }
  return out;
}

}  // namespace biphoton
