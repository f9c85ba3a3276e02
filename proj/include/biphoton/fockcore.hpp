// Truncated four-mode Fock space for the double-crystal biphoton state.
//
// Modes are ordered (s1, i1, s2, i2): signal/idler emitted by crystal 1 and
// crystal 2. Amplitudes are stored densely, (n_max+1)^4 entries, with the
// occupation of s1 as the most significant digit.
//
// Two routes to the coincidence rate live here: the operator route
// (coincidence_rate_oracle), which applies the detector field operators to
// the state vector, and the closed cosine form (coincidence_rate_closed).

#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace biphoton {

using complex = std::complex<double>;

enum class ModeLabel : std::size_t { s1 = 0, i1 = 1, s2 = 2, i2 = 3 };

inline constexpr std::array<ModeLabel, 4> kAllModes{ModeLabel::s1, ModeLabel::i1, ModeLabel::s2,
                                                    ModeLabel::i2};

enum class Detector { A, B };

using Occupation = std::array<int, 4>;

class FockState {
 public:
  /// Zero vector at the given cutoff.
  explicit FockState(int n_max) : n_max_(n_max) {
    if (n_max < 1) throw std::invalid_argument("FockState: n_max must be >= 1");
    const std::size_t d = dim();
    amplitudes_.assign(d * d * d * d, complex{0.0, 0.0});
  }

  int n_max() const noexcept { return n_max_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(n_max_) + 1; }
  std::size_t size() const noexcept { return amplitudes_.size(); }

  // Physical states are normalized; the result of any operator application
  // is an intermediate vector and has this flag cleared.
  bool physical() const noexcept { return physical_; }
  void set_physical(bool p) noexcept { physical_ = p; }

  std::size_t index(const Occupation& n) const {
    std::size_t idx = 0;
    for (int v : n) {
      if (v < 0 || v > n_max_) throw std::out_of_range("FockState: occupation outside cutoff");
      idx = idx * dim() + static_cast<std::size_t>(v);
    }
    return idx;
  }

  Occupation occupation(std::size_t idx) const noexcept {
    Occupation n{};
    for (int m = 3; m >= 0; --m) {
      n[static_cast<std::size_t>(m)] = static_cast<int>(idx % dim());
      idx /= dim();
    }
    return n;
  }

  complex amplitude(const Occupation& n) const { return amplitudes_[index(n)]; }
  complex& amplitude(const Occupation& n) { return amplitudes_[index(n)]; }

  const std::vector<complex>& amplitudes() const noexcept { return amplitudes_; }
  std::vector<complex>& amplitudes() noexcept { return amplitudes_; }

  double squared_norm() const noexcept {
    double s = 0.0;
    for (const auto& a : amplitudes_) s += std::norm(a);
    return s;
  }

 private:
  int n_max_;
  bool physical_ = false;
  std::vector<complex> amplitudes_;
};

/// Emission phases, the common wavenumber and the four crystal-to-detector
/// path lengths. Signal goes to detector A, idler to detector B.
struct PhaseConfig {
  double phi_1s = 0.0;
  double phi_1i = 0.0;
  double phi_2s = 0.0;
  double phi_2i = 0.0;
  double k = 0.0;
  double r_1s = 1.0;
  double r_1i = 1.0;
  double r_2s = 1.0;
  double r_2i = 1.0;

  void validate() const {
    for (double v : {phi_1s, phi_1i, phi_2s, phi_2i, k, r_1s, r_1i, r_2s, r_2i}) {
      if (!std::isfinite(v)) throw std::invalid_argument("PhaseConfig: non-finite field");
    }
    for (double r : {r_1s, r_1i, r_2s, r_2i}) {
      if (!(r > 0.0)) throw std::invalid_argument("PhaseConfig: path lengths must be positive");
    }
  }
};

/// (|1,1,0,0> + |0,0,1,1>)/sqrt(2) in (s1, i1, s2, i2) ordering.
inline FockState biphoton_state(int n_max = 2) {
  FockState psi(n_max);
  const double a = 1.0 / std::numbers::sqrt2;
  psi.amplitude({1, 1, 0, 0}) = a;
  psi.amplitude({0, 0, 1, 1}) = a;
  psi.set_physical(true);
  return psi;
}

/// Ladder action a|n> = sqrt(n)|n-1> on one mode, over the whole vector.
inline FockState annihilate(const FockState& state, ModeLabel mode) {
  FockState out(state.n_max());
  const auto m = static_cast<std::size_t>(mode);
  const auto& in = state.amplitudes();
  auto& dst = out.amplitudes();
  for (std::size_t idx = 0; idx < in.size(); ++idx) {
    Occupation n = state.occupation(idx);
    if (n[m] >= state.n_max()) continue;  // source occupation above cutoff is absent
    Occupation up = n;
    ++up[m];
    dst[idx] = std::sqrt(static_cast<double>(up[m])) * in[state.index(up)];
  }
  return out;
}

namespace detail {

inline FockState axpy(const FockState& x, complex ax, const FockState& y, complex ay) {
  FockState out(x.n_max());
  auto& dst = out.amplitudes();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = ax * x.amplitudes()[i] + ay * y.amplitudes()[i];
  return out;
}

inline complex phase_factor(double phi, double k, double r) {
  return std::polar(1.0, -(phi + k * r));
}

}  // namespace detail

/// Positive-frequency field at detector A (signal modes) or B (idler modes).
inline FockState apply_detector_field(const FockState& state, Detector det, const PhaseConfig& cfg) {
  if (det == Detector::A) {
    return detail::axpy(annihilate(state, ModeLabel::s1), detail::phase_factor(cfg.phi_1s, cfg.k, cfg.r_1s),
                        annihilate(state, ModeLabel::s2), detail::phase_factor(cfg.phi_2s, cfg.k, cfg.r_2s));
  }
  return detail::axpy(annihilate(state, ModeLabel::i1), detail::phase_factor(cfg.phi_1i, cfg.k, cfg.r_1i),
                      annihilate(state, ModeLabel::i2), detail::phase_factor(cfg.phi_2i, cfg.k, cfg.r_2i));
}

// |E_A E_B psi|^2 evaluates to 1 + cos(arg) for the normalized biphoton
// state; scaling by 2 puts it on the same [0, 4] range as the closed form.
inline constexpr double kOracleScale = 2.0;

/// Coincidence rate from the operator algebra on the truncated Fock space.
/// `scale` exists so tests can verify that a wrong prefactor is detected.
inline double coincidence_rate_oracle(const PhaseConfig& cfg, int n_max = 2, double scale = kOracleScale) {
  cfg.validate();
  const FockState psi = biphoton_state(n_max);
  const FockState out = apply_detector_field(apply_detector_field(psi, Detector::B, cfg), Detector::A, cfg);
  return scale * out.squared_norm();
}

/// Total phase difference between the crystal-2 and crystal-1 pair amplitudes.
/// Path differences are formed per side first; for comparable lengths those
/// subtractions are exact.
inline double coincidence_argument(const PhaseConfig& cfg) {
  const double emission = (cfg.phi_1i + cfg.phi_1s) - (cfg.phi_2i + cfg.phi_2s);
  const double path = (cfg.r_1i - cfg.r_2i) + (cfg.r_1s - cfg.r_2s);
  return emission + cfg.k * path;
}

/// 2[1 + cos(phi_1i + phi_1s + k r_1i + k r_1s - phi_2i - phi_2s - k r_2i - k r_2s)]
inline double coincidence_rate_closed(const PhaseConfig& cfg) {
  cfg.validate();
  return 2.0 * (1.0 + std::cos(coincidence_argument(cfg)));
}

}  // namespace biphoton
