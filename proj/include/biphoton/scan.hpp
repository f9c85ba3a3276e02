// Synthetic scans: correlated detector trajectories, envelope and slit
// smearing, and Poisson counting noise.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "biphoton/geometry.hpp"

namespace biphoton {

enum class Abscissa { A, B };
enum class Viewpoint { signal, idler };

inline const char* to_string(Abscissa a) { return a == Abscissa::A ? "A" : "B"; }
inline const char* to_string(Viewpoint v) { return v == Viewpoint::signal ? "signal" : "idler"; }

/// One run. `alpha` is the ratio delta_i / delta_s, realized as
/// (x_B - ref_B) = alpha * (x_A - ref_A). `start`, `stop` and
/// `fixed_position` are displacements from the reference positions.
struct ScanSpec {
  double alpha = 0.0;
  Abscissa abscissa = Abscissa::A;
  double start = -1e-3;
  double stop = 1e-3;
  int n_points = 201;
  double fixed_position = 0.0;  // conjugate detector offset when alpha == 0

  void validate() const {
    if (n_points < 2) throw std::invalid_argument("ScanSpec: n_points must be >= 2");
    if (!(std::isfinite(start) && std::isfinite(stop) && start < stop))
      throw std::invalid_argument("ScanSpec: require start < stop");
    if (!std::isfinite(alpha) || !std::isfinite(fixed_position))
      throw std::invalid_argument("ScanSpec: non-finite alpha or fixed position");
    if (abscissa == Abscissa::B && alpha == 0.0)
      throw std::invalid_argument("ScanSpec: abscissa B with alpha = 0 leaves the abscissa detector fixed");
  }
};

struct EnvelopeSpec {
  double peak_rate = 200.0;
  double center = 0.0;  // displacement from reference
  double width = 1.5e-3;
  double visibility = 0.8;

  void validate() const {
    if (!(peak_rate > 0.0 && std::isfinite(peak_rate))) throw std::invalid_argument("EnvelopeSpec: peak_rate must be > 0");
    if (!(width > 0.0 && std::isfinite(width))) throw std::invalid_argument("EnvelopeSpec: width must be > 0");
    if (!(visibility >= 0.0 && visibility <= 1.0)) throw std::invalid_argument("EnvelopeSpec: visibility outside [0, 1]");
    if (!std::isfinite(center)) throw std::invalid_argument("EnvelopeSpec: non-finite center");
  }
};

struct NoiseSpec {
  bool poisson_enabled = true;
  std::uint64_t rng_seed = 0;
  int slit_quadrature_points = 11;

  void validate() const {
    if (slit_quadrature_points < 1 || slit_quadrature_points % 2 == 0)
      throw std::invalid_argument("NoiseSpec: slit_quadrature_points must be odd and >= 1");
  }
};

struct FringeDataset {
  std::vector<double> positions_A;
  std::vector<double> positions_B;
  std::vector<double> singles_A;
  std::vector<double> singles_B;
  std::vector<double> coincidences;

  ScanSpec scan;
  EnvelopeSpec envelope;
  NoiseSpec noise;
  SetupGeometry geometry;

  std::size_t size() const noexcept { return coincidences.size(); }

  const std::vector<double>& positions(Abscissa a) const { return a == Abscissa::A ? positions_A : positions_B; }

  void check_shape() const {
    const std::size_t n = coincidences.size();
    if (positions_A.size() != n || positions_B.size() != n || singles_A.size() != n || singles_B.size() != n)
      throw std::invalid_argument("FringeDataset: column lengths differ");
  }
};

struct ModelRates {
  double singles_A = 0.0;
  double singles_B = 0.0;
  double coincidence = 0.0;
};

inline DetectorPositions trajectory(const ScanSpec& spec, const SetupGeometry& geom, int index) {
  if (index < 0 || index >= spec.n_points) throw std::out_of_range("trajectory: index out of range");
  DetectorPositions pos = DetectorPositions::at_reference(geom);
  const double u = spec.start + (spec.stop - spec.start) * index / (spec.n_points - 1);
  if (spec.abscissa == Abscissa::A) {
    pos.x_A += u;
    pos.x_B += spec.alpha == 0.0 ? spec.fixed_position : spec.alpha * u;
  } else {
    pos.x_B += u;
    pos.x_A += u / spec.alpha;
  }
  return pos;
}

namespace detail {

inline double gaussian(double u, double center, double width) {
  const double z = (u - center) / width;
  return std::exp(-0.5 * z * z);
}

// Midpoint nodes spanning one slit, centred on zero.
inline std::vector<double> slit_nodes(double slit_width, int n) {
  std::vector<double> nodes(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) nodes[static_cast<std::size_t>(j)] = slit_width * ((j + 0.5) / n - 0.5);
  return nodes;
}

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Per-point generator seed; each point's stream depends only on (seed, index).
inline std::uint64_t point_seed(std::uint64_t seed, std::uint64_t index) {
  return detail::mix64(seed ^ detail::mix64(index));
}

/// Expected singles and coincidence counts at one trajectory point.
///
/// Singles are fringe-free Gaussians of the respective detector displacement.
/// The coincidence rate is peak * g_A * g_B * (1 + V cos(arg)) / 2, i.e. the
/// ideal rate C/4 with the fringe term scaled by V, averaged over a tensor
/// product of midpoint nodes across each detector's slit.
inline ModelRates mean_model(const SetupGeometry& geom, const ScanSpec& spec, const EnvelopeSpec& env,
                             const NoiseSpec& noise, int index) {
  const DetectorPositions pos = trajectory(spec, geom, index);
  const double u_A = pos.x_A - pos.ref_A;
  const double u_B = pos.x_B - pos.ref_B;

  ModelRates rates;
  rates.singles_A = env.peak_rate * detail::gaussian(u_A, env.center, env.width);
  rates.singles_B = env.peak_rate * detail::gaussian(u_B, env.center, env.width);

  const auto nodes = detail::slit_nodes(geom.slit_width, noise.slit_quadrature_points);
  double acc = 0.0;
  for (double a : nodes) {
    for (double b : nodes) {
      DetectorPositions p = pos;
      p.x_A += a;
      p.x_B += b;
      const double envelope =
          detail::gaussian(u_A + a, env.center, env.width) * detail::gaussian(u_B + b, env.center, env.width);
      acc += envelope * 0.5 * (1.0 + env.visibility * std::cos(coincidence_argument(geom, p)));
    }
  }
  rates.coincidence = env.peak_rate * acc / static_cast<double>(nodes.size() * nodes.size());
  return rates;
}

namespace detail {

inline double poisson_draw(std::mt19937_64& rng, double mean) {
  if (mean <= 0.0) return 0.0;
  std::poisson_distribution<long long> dist(mean);
  return static_cast<double>(dist(rng));
}

}  // namespace detail

inline FringeDataset simulate_scan(const SetupGeometry& geom, const ScanSpec& spec, const EnvelopeSpec& env,
                                   const NoiseSpec& noise) {
  geom.validate();
  spec.validate();
  env.validate();
  noise.validate();

  FringeDataset data;
  data.scan = spec;
  data.envelope = env;
  data.noise = noise;
  data.geometry = geom;

  const auto n = static_cast<std::size_t>(spec.n_points);
  for (auto* col : {&data.positions_A, &data.positions_B, &data.singles_A, &data.singles_B, &data.coincidences})
    col->resize(n);

  for (int i = 0; i < spec.n_points; ++i) {
    const auto j = static_cast<std::size_t>(i);
    const DetectorPositions pos = trajectory(spec, geom, i);
    const ModelRates m = mean_model(geom, spec, env, noise, i);
    data.positions_A[j] = pos.x_A;
    data.positions_B[j] = pos.x_B;
    if (noise.poisson_enabled) {
      std::mt19937_64 rng(point_seed(noise.rng_seed, j));
      data.singles_A[j] = detail::poisson_draw(rng, m.singles_A);
      data.singles_B[j] = detail::poisson_draw(rng, m.singles_B);
      data.coincidences[j] = detail::poisson_draw(rng, m.coincidence);
    } else {
      data.singles_A[j] = m.singles_A;
      data.singles_B[j] = m.singles_B;
      data.coincidences[j] = m.coincidence;
    }
  }
  return data;
}

/// Fringe wavevector predicted for a scan ratio alpha: |1 + alpha| k0 in the
/// signal (detector A) coordinate, |1 + 1/alpha| k0 in the idler (detector B)
/// coordinate.
inline double expected_wavevector(double alpha, Viewpoint viewpoint, double k0) {
  if (viewpoint == Viewpoint::signal) return std::abs(1.0 + alpha) * k0;
  if (alpha == 0.0) throw std::invalid_argument("expected_wavevector: idler viewpoint undefined for alpha = 0");
  return std::abs(1.0 + 1.0 / alpha) * k0;
}

}  // namespace biphoton
