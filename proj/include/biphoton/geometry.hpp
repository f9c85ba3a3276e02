// Planar model of the two-crystal setup.
//
// The pump runs along z. Crystal 1 sits at z = 0, crystal 2 at
// z = -crystal_separation, both treated as point sources on the pump axis.
// The detection plane is z = baseline. Each detector has its own transverse
// coordinate: the distance from the pump axis on its side (signal/A on one
// side, idler/B on the other). Nominal reference positions lie on crystal 1's
// emission direction, x = baseline * tan(emission_angle); crystal 2's ray to
// the same point leaves at a slightly larger angle by construction.
//
// All lengths are metres and angles radians.

#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "biphoton/fockcore.hpp"

namespace biphoton {

enum class Crystal { one = 1, two = 2 };
enum class Side { signal, idler };

struct SetupGeometry {
  double pump_wavelength = 442e-9;
  double downconverted_wavelength = 884e-9;
  double crystal_separation = 0.02;
  double baseline = 1.5;
  double emission_angle = 7.0 * std::numbers::pi / 180.0;
  double slit_width = 0.05e-3;  // effective aperture
  double pump_phase_diff = 0.0;

  double wavenumber() const { return 2.0 * std::numbers::pi / downconverted_wavelength; }

  /// Nominal detector coordinate (same on both sides).
  double reference_position() const { return baseline * std::tan(emission_angle); }

  void validate() const {
    for (double v : {pump_wavelength, downconverted_wavelength, crystal_separation, baseline}) {
      if (!(std::isfinite(v) && v > 0.0)) throw std::invalid_argument("SetupGeometry: lengths must be positive");
    }
    if (!(std::isfinite(slit_width) && slit_width >= 0.0))
      throw std::invalid_argument("SetupGeometry: slit width must be non-negative");
    if (!(emission_angle > 0.0 && emission_angle < std::numbers::pi / 2))
      throw std::invalid_argument("SetupGeometry: emission angle must lie in (0, pi/2)");
    if (!std::isfinite(pump_phase_diff)) throw std::invalid_argument("SetupGeometry: non-finite pump phase");
  }

  std::vector<std::string> warnings() const {
    std::vector<std::string> w;
    if (baseline < 10.0 * crystal_separation) w.emplace_back("baseline is less than 10x the crystal separation");
    return w;
  }
};

struct DetectorPositions {
  double x_A = 0.0;
  double x_B = 0.0;
  double ref_A = 0.0;
  double ref_B = 0.0;

  static DetectorPositions at_reference(const SetupGeometry& geom) {
    const double r = geom.reference_position();
    return {r, r, r, r};
  }

  std::vector<std::string> warnings(const SetupGeometry& geom) const {
    std::vector<std::string> w;
    if (std::abs(x_A - ref_A) > geom.baseline / 100 || std::abs(x_B - ref_B) > geom.baseline / 100)
      w.emplace_back("detector displacement beyond baseline/100; linearized phases are unreliable");
    return w;
  }
};

struct PathPhases {
  double delta_s = 0.0;
  double delta_i = 0.0;
  double phi = 0.0;  // wrapped to [-pi, pi)
};

/// Wraps an angle into [-pi, pi).
inline double wrap_phase(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a + std::numbers::pi, two_pi);
  if (w < 0.0) w += two_pi;
  w -= std::numbers::pi;
  return w >= std::numbers::pi ? -std::numbers::pi : w;
}

namespace detail {

inline double axial_distance(const SetupGeometry& geom, Crystal c) {
  return c == Crystal::one ? geom.baseline : geom.baseline + geom.crystal_separation;
}

// r(x) - r(x_ref) for one crystal, without cancellation.
inline double path_change(const SetupGeometry& geom, Crystal c, double x, double x_ref) {
  const double z = axial_distance(geom, c);
  return (x - x_ref) * (x + x_ref) / (std::hypot(z, x) + std::hypot(z, x_ref));
}

// r_1(x) - r_2(x), again without cancellation.
inline double crystal_path_difference(const SetupGeometry& geom, double x) {
  const double z1 = axial_distance(geom, Crystal::one);
  const double z2 = axial_distance(geom, Crystal::two);
  return (z1 - z2) * (z1 + z2) / (std::hypot(z1, x) + std::hypot(z2, x));
}

}  // namespace detail

/// Distance from crystal j to a detector at transverse coordinate x.
inline double path_length(const SetupGeometry& geom, Crystal crystal, Side /*side*/, double x) {
  return std::hypot(detail::axial_distance(geom, crystal), x);
}

inline PathPhases path_deltas(const SetupGeometry& geom, const DetectorPositions& pos) {
  using detail::path_change;
  PathPhases p;
  p.delta_s = path_change(geom, Crystal::one, pos.x_A, pos.ref_A) - path_change(geom, Crystal::two, pos.x_A, pos.ref_A);
  p.delta_i = path_change(geom, Crystal::one, pos.x_B, pos.ref_B) - path_change(geom, Crystal::two, pos.x_B, pos.ref_B);
  const double ref_paths =
      detail::crystal_path_difference(geom, pos.ref_B) + detail::crystal_path_difference(geom, pos.ref_A);
  p.phi = wrap_phase(geom.pump_phase_diff + geom.wavenumber() * ref_paths);
  return p;
}

/// Cosine argument k (delta_i + delta_s) + phi.
inline double coincidence_argument(const SetupGeometry& geom, const DetectorPositions& pos) {
  const PathPhases p = path_deltas(geom, pos);
  return geom.wavenumber() * (p.delta_i + p.delta_s) + p.phi;
}

inline double coincidence_at(const SetupGeometry& geom, const DetectorPositions& pos) {
  return 2.0 * (1.0 + std::cos(coincidence_argument(geom, pos)));
}

/// Packs the detector positions into the operator-level description. The pump
/// phase difference is carried on the crystal-1 signal emission phase; only
/// the per-crystal sums enter the rate.
inline PhaseConfig to_phase_config(const SetupGeometry& geom, const DetectorPositions& pos) {
  PhaseConfig cfg;
  cfg.phi_1s = geom.pump_phase_diff;
  cfg.k = geom.wavenumber();
  cfg.r_1s = path_length(geom, Crystal::one, Side::signal, pos.x_A);
  cfg.r_2s = path_length(geom, Crystal::two, Side::signal, pos.x_A);
  cfg.r_1i = path_length(geom, Crystal::one, Side::idler, pos.x_B);
  cfg.r_2i = path_length(geom, Crystal::two, Side::idler, pos.x_B);
  return cfg;
}

/// Single-detector fringe wavevector at the reference point, in radians per
/// unit transverse displacement, by central difference with step baseline*1e-6.
inline double linearized_k0(const SetupGeometry& geom) {
  geom.validate();
  const double h = geom.baseline * 1e-6;
  DetectorPositions plus = DetectorPositions::at_reference(geom);
  DetectorPositions minus = plus;
  plus.x_A += h;
  minus.x_A -= h;
  return geom.wavenumber() * (path_deltas(geom, plus).delta_s - path_deltas(geom, minus).delta_s) / (2.0 * h);
}

}  // namespace biphoton
