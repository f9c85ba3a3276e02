// Envelope-times-sinusoid fringe model and its damped least-squares fit.
//
//   m(x) = baseline + amplitude * K((x - env_center) / env_width)
//                   * [1 + visibility * cos(wavevector * x + phase)]
//
// with K(u) = exp(-u^2/2) (gaussian) or (sin u / u)^2 (sinc2).
//
// The fit works in transformed parameters so that bounds hold without
// clipping: visibility = 1 / (1 + exp(-t)) and wavevector = exp(s). Internally
// abscissa and counts are also rescaled to O(1); results are reported in the
// caller's units.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "biphoton/errors.hpp"
#include "biphoton/geometry.hpp"
#include "biphoton/scan.hpp"

namespace biphoton {

enum class Kernel { gaussian, sinc2 };

inline const char* to_string(Kernel k) { return k == Kernel::gaussian ? "gaussian" : "sinc2"; }

enum class Param : std::size_t { baseline, amplitude, env_center, env_width, visibility, wavevector, phase };
inline constexpr std::size_t kNumParams = 7;
inline constexpr std::array<const char*, kNumParams> kParamNames{
    "baseline", "amplitude", "env_center", "env_width", "visibility", "wavevector", "phase"};

inline double kernel_value(Kernel kernel, double u) {
  if (kernel == Kernel::gaussian) return std::exp(-0.5 * u * u);
  if (std::abs(u) < 1e-4) {
    const double s = 1.0 - u * u / 6.0;
    return s * s;
  }
  const double s = std::sin(u) / u;
  return s * s;
}

inline double kernel_derivative(Kernel kernel, double u) {
  if (kernel == Kernel::gaussian) return -u * std::exp(-0.5 * u * u);
  if (std::abs(u) < 1e-4) {
    // d/du (1 - u^2/6)^2 to the same order
    return 2.0 * (1.0 - u * u / 6.0) * (-u / 3.0);
  }
  const double s = std::sin(u) / u;
  return 2.0 * s * (u * std::cos(u) - std::sin(u)) / (u * u);
}

struct FringeModel {
  double baseline = 0.0;
  double amplitude = 1.0;
  double env_center = 0.0;
  double env_width = 1.0;
  double visibility = 0.5;
  double wavevector = 1.0;
  double phase = 0.0;
  Kernel kernel = Kernel::sinc2;

  double operator()(double x) const {
    const double k = kernel_value(kernel, (x - env_center) / env_width);
    return baseline + amplitude * k * (1.0 + visibility * std::cos(wavevector * x + phase));
  }

  /// (max - min) / (max + min) of the fringe at the envelope peak. Equals
  /// `visibility` only when baseline = 0; with a free baseline the two trade
  /// off, and this is the quantity the data pin down.
  double contrast() const {
    const double top = baseline + amplitude;
    return top != 0.0 ? std::abs(amplitude * visibility / top) : 0.0;
  }

  double get(Param p) const {
    switch (p) {
      case Param::baseline: return baseline;
      case Param::amplitude: return amplitude;
      case Param::env_center: return env_center;
      case Param::env_width: return env_width;
      case Param::visibility: return visibility;
      case Param::wavevector: return wavevector;
      case Param::phase: return phase;
    }
    return 0.0;
  }
};

enum class FitStatus { converged, max_iterations, singular };

inline const char* to_string(FitStatus s) {
  switch (s) {
    case FitStatus::converged: return "converged";
    case FitStatus::max_iterations: return "max_iterations";
    case FitStatus::singular: return "singular";
  }
  return "unknown";
}

struct FitResult {
  FringeModel params;
  std::array<double, kNumParams> std_errors{};
  double residual_ssq = 0.0;
  bool converged = false;
  int iterations = 0;
  FitStatus status = FitStatus::max_iterations;
  std::vector<double> accepted_ssq;  // residual after each accepted step, in data units
};

struct FitOptions {
  int max_iter = 200;
  double tol = 1e-10;
  std::array<bool, kNumParams> free{true, true, true, true, true, true, true};
};

/// Analytic derivatives of m(x) with respect to
/// (baseline, amplitude, env_center, env_width, logit visibility,
///  log wavevector, phase), one row per position.
inline Eigen::MatrixXd jacobian(const FringeModel& model, std::span<const double> positions) {
  Eigen::MatrixXd J(static_cast<Eigen::Index>(positions.size()), static_cast<Eigen::Index>(kNumParams));
  const double V = model.visibility;
  for (std::size_t j = 0; j < positions.size(); ++j) {
    const double x = positions[j];
    const double u = (x - model.env_center) / model.env_width;
    const double K = kernel_value(model.kernel, u);
    const double dK = kernel_derivative(model.kernel, u);
    const double arg = model.wavevector * x + model.phase;
    const double c = std::cos(arg);
    const double s = std::sin(arg);
    const double fringe = 1.0 + V * c;
    const auto r = static_cast<Eigen::Index>(j);
    J(r, 0) = 1.0;
    J(r, 1) = K * fringe;
    J(r, 2) = -model.amplitude * dK * fringe / model.env_width;
    J(r, 3) = -model.amplitude * dK * u * fringe / model.env_width;
    J(r, 4) = model.amplitude * K * c * V * (1.0 - V);
    J(r, 5) = -model.amplitude * K * V * s * x * model.wavevector;
    J(r, 6) = -model.amplitude * K * V * s;
  }
  return J;
}

namespace detail {

using ParamVector = Eigen::Matrix<double, kNumParams, 1>;

inline double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

inline ParamVector to_internal(const FringeModel& m) {
  constexpr double eps = 1e-9;
  const double V = std::clamp(m.visibility, eps, 1.0 - eps);
  ParamVector p;
  p << m.baseline, m.amplitude, m.env_center, m.env_width, std::log(V / (1.0 - V)), std::log(m.wavevector), m.phase;
  return p;
}

inline FringeModel from_internal(const ParamVector& p, Kernel kernel) {
  FringeModel m;
  m.baseline = p(0);
  m.amplitude = p(1);
  m.env_center = p(2);
  m.env_width = p(3);
  m.visibility = logistic(p(4));
  m.wavevector = std::exp(p(5));
  m.phase = p(6);
  m.kernel = kernel;
  return m;
}

inline double residual_ssq(const FringeModel& m, std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double r = y[j] - m(x[j]);
    s += r * r;
  }
  return s;
}

struct Scaling {
  double x_ref = 0.0;
  double x_scale = 1.0;
  double y_scale = 1.0;
};

inline Scaling make_scaling(std::span<const double> x, std::span<const double> y) {
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  if (!(*xmax > *xmin)) throw DataError("degenerate axis: abscissa coordinate is constant");
  Scaling s;
  s.x_ref = 0.5 * (*xmin + *xmax);
  s.x_scale = 0.5 * (*xmax - *xmin);
  double ymax = 0.0;
  for (double v : y) ymax = std::max(ymax, std::abs(v));
  s.y_scale = ymax > 0.0 ? ymax : 1.0;
  return s;
}

inline FringeModel normalize(const FringeModel& m, const Scaling& s) {
  FringeModel n = m;
  n.baseline = m.baseline / s.y_scale;
  n.amplitude = m.amplitude / s.y_scale;
  n.env_center = (m.env_center - s.x_ref) / s.x_scale;
  n.env_width = m.env_width / s.x_scale;
  n.wavevector = m.wavevector * s.x_scale;
  n.phase = wrap_phase(m.phase + m.wavevector * s.x_ref);
  return n;
}

inline FringeModel denormalize(const FringeModel& n, const Scaling& s) {
  FringeModel m = n;
  m.baseline = n.baseline * s.y_scale;
  m.amplitude = n.amplitude * s.y_scale;
  m.env_center = n.env_center * s.x_scale + s.x_ref;
  m.env_width = std::abs(n.env_width) * s.x_scale;
  m.wavevector = n.wavevector / s.x_scale;
  m.phase = wrap_phase(n.phase - m.wavevector * s.x_ref);
  return m;
}

}  // namespace detail

/// Starting point for `fit`: range-based baseline and amplitude, moment-based
/// envelope, and the wavevector/phase of the strongest periodogram line of
/// the envelope-detrended counts.
inline FringeModel initial_guess(std::span<const double> x, std::span<const double> y, Kernel kernel = Kernel::sinc2) {
  const std::size_t n = x.size();
  if (y.size() != n) throw DataError("initial_guess: length mismatch");
  if (n < 8) throw DataError("too few points: need at least 8");
  const auto [ymin_it, ymax_it] = std::minmax_element(y.begin(), y.end());
  const double ymin = *ymin_it;
  const double ymax = *ymax_it;
  if (!(ymax > ymin)) throw DataError("zero variance: counts are constant");
  const auto [xmin_it, xmax_it] = std::minmax_element(x.begin(), x.end());
  const double span = *xmax_it - *xmin_it;
  if (!(span > 0.0)) throw DataError("degenerate axis: abscissa coordinate is constant");
  const double x_ref = 0.5 * (*xmin_it + *xmax_it);

  FringeModel g;
  g.kernel = kernel;
  g.baseline = ymin;
  g.amplitude = ymax - ymin;
  g.visibility = 0.5;

  double w0 = 0.0, w1 = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    w0 += y[j] - ymin;
    w1 += (y[j] - ymin) * x[j];
  }
  g.env_center = w1 / w0;
  double w2 = 0.0;
  for (std::size_t j = 0; j < n; ++j) w2 += (y[j] - ymin) * (x[j] - g.env_center) * (x[j] - g.env_center);
  const double sigma = std::sqrt(w2 / w0);
  // sinc^2(u) ~ exp(-u^2/3) near the peak
  g.env_width = kernel == Kernel::gaussian ? sigma : sigma * std::sqrt(2.0 / 3.0);

  std::vector<double> env(n), resid(n);
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    env[j] = kernel_value(kernel, (x[j] - g.env_center) / g.env_width);
    num += (y[j] - ymin) * env[j];
    den += env[j] * env[j];
  }
  const double env_scale = den > 0.0 ? num / den : 0.0;
  for (std::size_t j = 0; j < n; ++j) resid[j] = y[j] - ymin - env_scale * env[j];

  const double step = span / static_cast<double>(n - 1);
  const double w_lo = 2.0 * std::numbers::pi / span;
  const double w_hi = std::numbers::pi / step;
  const auto n_freq = std::max<std::size_t>(256, static_cast<std::size_t>(std::ceil(4.0 * (w_hi - w_lo) / w_lo)) + 1);

  double best_power = -1.0, best_w = w_lo, best_c = 0.0, best_s = 0.0;
  for (std::size_t m = 0; m < n_freq; ++m) {
    const double w = w_lo + (w_hi - w_lo) * static_cast<double>(m) / static_cast<double>(n_freq - 1);
    double c = 0.0, s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double a = w * (x[j] - x_ref);
      c += resid[j] * std::cos(a);
      s += resid[j] * std::sin(a);
    }
    const double power = c * c + s * s;
    if (power > best_power) {  // strict: ties keep the lowest frequency
      best_power = power;
      best_w = w;
      best_c = c;
      best_s = s;
    }
  }
  g.wavevector = best_w;
  g.phase = wrap_phase(std::atan2(-best_s, best_c) - best_w * x_ref);
  return g;
}

inline FringeModel initial_guess(const FringeDataset& data, Abscissa abscissa, Kernel kernel = Kernel::sinc2) {
  data.check_shape();
  return initial_guess(data.positions(abscissa), data.coincidences, kernel);
}

/// Damped normal-equations (Levenberg-Marquardt) fit of m(x) to (x, y).
///
/// Solves (J^T J + lambda diag(J^T J)) delta = J^T r, starting from
/// lambda = 1e-3; an accepted step divides lambda by 10, a rejected one
/// multiplies it by 10. Converged when an accepted step lowers the residual by
/// a relative amount below tol with a relative step below tol, when a
/// rejected step is itself below tol, or when the residual is at rounding
/// level. Parameters with `free[i] == false` are held at their initial value.
inline FitResult fit(std::span<const double> x, std::span<const double> y, const FringeModel& init,
                     const FitOptions& opt = {}) {
  if (x.size() != y.size()) throw DataError("fit: length mismatch");
  if (opt.max_iter < 1) throw std::invalid_argument("fit: max_iter must be >= 1");
  if (!(opt.tol > 0.0)) throw std::invalid_argument("fit: tol must be > 0");
  if (!(init.env_width != 0.0 && init.wavevector > 0.0))
    throw std::invalid_argument("fit: initial model needs nonzero width and positive wavevector");

  const detail::Scaling sc = detail::make_scaling(x, y);
  const std::size_t n = x.size();
  std::vector<double> xn(n), yn(n);
  double y_ss = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    xn[j] = (x[j] - sc.x_ref) / sc.x_scale;
    yn[j] = y[j] / sc.y_scale;
    y_ss += yn[j] * yn[j];
  }

  std::vector<Eigen::Index> free_idx;
  for (std::size_t i = 0; i < kNumParams; ++i)
    if (opt.free[i]) free_idx.push_back(static_cast<Eigen::Index>(i));
  const auto nf = static_cast<Eigen::Index>(free_idx.size());
  if (nf == 0) throw std::invalid_argument("fit: no free parameters");

  const Kernel kernel = init.kernel;
  detail::ParamVector p = detail::to_internal(detail::normalize(init, sc));
  FringeModel model = detail::from_internal(p, kernel);
  double ssq = detail::residual_ssq(model, xn, yn);
  const double floor_ssq = 1e-28 * std::max(y_ss, 1e-300);

  FitResult result;
  result.status = FitStatus::max_iterations;
  double lambda = 1e-3;

  auto reduced_system = [&](const FringeModel& m, Eigen::MatrixXd& N, Eigen::VectorXd& g) {
    const Eigen::MatrixXd Jfull = jacobian(m, xn);
    Eigen::MatrixXd J(static_cast<Eigen::Index>(n), nf);
    for (Eigen::Index c = 0; c < nf; ++c) J.col(c) = Jfull.col(free_idx[static_cast<std::size_t>(c)]);
    Eigen::VectorXd r(static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) r(static_cast<Eigen::Index>(j)) = yn[j] - m(xn[j]);
    N = J.transpose() * J;
    g = J.transpose() * r;
  };

  Eigen::MatrixXd N;
  Eigen::VectorXd g;
  reduced_system(model, N, g);

  if (ssq <= floor_ssq) {
    result.status = FitStatus::converged;
  } else {
    for (int it = 1; it <= opt.max_iter; ++it) {
      result.iterations = it;
      Eigen::VectorXd d = N.diagonal();
      const double d_max = d.allFinite() ? d.maxCoeff() : 0.0;
      if (!(d_max > 0.0)) {
        result.status = FitStatus::singular;
        break;
      }
      // A column that vanished (V saturated at 0 or 1) still gets damping,
      // so its parameter stays put instead of stalling the solve.
      d = d.cwiseMax(1e-12 * d_max);
      Eigen::MatrixXd A = N;
      A.diagonal() += lambda * d;
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
      Eigen::VectorXd delta = ldlt.solve(g);
      if (ldlt.info() != Eigen::Success || !delta.allFinite()) {
        result.status = FitStatus::singular;
        break;
      }

      detail::ParamVector trial = p;
      for (Eigen::Index c = 0; c < nf; ++c) trial(free_idx[static_cast<std::size_t>(c)]) += delta(c);
      double p_norm = 0.0;
      for (Eigen::Index c = 0; c < nf; ++c) p_norm += p(free_idx[static_cast<std::size_t>(c)]) * p(free_idx[static_cast<std::size_t>(c)]);
      const double rel_step = delta.norm() / (std::sqrt(p_norm) + opt.tol);

      const FringeModel trial_model = detail::from_internal(trial, kernel);
      const double trial_ssq = detail::residual_ssq(trial_model, xn, yn);

      if (std::isfinite(trial_ssq) && trial_ssq < ssq) {
        const double rel_decrease = (ssq - trial_ssq) / ssq;
        p = trial;
        model = trial_model;
        ssq = trial_ssq;
        result.accepted_ssq.push_back(ssq * sc.y_scale * sc.y_scale);
        lambda = std::max(lambda / 10.0, 1e-15);
        reduced_system(model, N, g);
        if ((rel_decrease < opt.tol && rel_step < opt.tol) || ssq <= floor_ssq) {
          result.status = FitStatus::converged;
          break;
        }
      } else {
        lambda *= 10.0;
        if (rel_step < opt.tol) {
          result.status = FitStatus::converged;
          break;
        }
        if (lambda > 1e30) break;
      }
    }
  }

  result.converged = result.status == FitStatus::converged;
  result.params = detail::denormalize(model, sc);
  result.residual_ssq = ssq * sc.y_scale * sc.y_scale;

  // Covariance s^2 (J^T J)^-1 in internal coordinates, mapped to reported units.
  const auto dof = static_cast<double>(n) - static_cast<double>(nf);
  const double s2 = dof > 0 ? ssq / dof : 0.0;
  Eigen::MatrixXd cov_free;
  bool cov_ok = false;
  {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(N);
    if (lu.isInvertible()) {
      cov_free = s2 * lu.inverse();
      cov_ok = cov_free.allFinite();
    }
  }
  Eigen::Matrix<double, kNumParams, kNumParams> cov = Eigen::Matrix<double, kNumParams, kNumParams>::Zero();
  for (Eigen::Index a = 0; a < nf; ++a)
    for (Eigen::Index b = 0; b < nf; ++b)
      cov(free_idx[static_cast<std::size_t>(a)], free_idx[static_cast<std::size_t>(b)]) = cov_ok ? cov_free(a, b) : 0.0;

  const FringeModel& out = result.params;
  Eigen::Matrix<double, kNumParams, kNumParams> T = Eigen::Matrix<double, kNumParams, kNumParams>::Zero();
  T(0, 0) = sc.y_scale;
  T(1, 1) = sc.y_scale;
  T(2, 2) = sc.x_scale;
  T(3, 3) = sc.x_scale;
  T(4, 4) = out.visibility * (1.0 - out.visibility);
  T(5, 5) = out.wavevector;
  T(6, 6) = 1.0;
  T(6, 5) = -out.wavevector * sc.x_ref;
  const Eigen::Matrix<double, kNumParams, kNumParams> cov_out = T * cov * T.transpose();
  for (std::size_t i = 0; i < kNumParams; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (!opt.free[i]) {
      result.std_errors[i] = 0.0;
    } else {
      result.std_errors[i] = cov_ok ? std::sqrt(std::max(cov_out(ii, ii), 0.0)) : std::numeric_limits<double>::infinity();
    }
  }
  return result;
}

inline FitResult fit(const FringeDataset& data, Abscissa abscissa, const FringeModel& init, const FitOptions& opt = {}) {
  data.check_shape();
  return fit(data.positions(abscissa), data.coincidences, init, opt);
}

/// Fits the coincidence counts against detector A's and detector B's
/// coordinate independently, each from its own periodogram start.
inline std::pair<FitResult, FitResult> fit_both_viewpoints(const FringeDataset& data, Kernel kernel = Kernel::sinc2,
                                                           const FitOptions& opt = {}) {
  if (data.scan.alpha == 0.0) throw DataError("degenerate axis: alpha = 0 keeps one detector fixed");
  FitResult on_a = fit(data, Abscissa::A, initial_guess(data, Abscissa::A, kernel), opt);
  FitResult on_b = fit(data, Abscissa::B, initial_guess(data, Abscissa::B, kernel), opt);
  return {std::move(on_a), std::move(on_b)};
}

}  // namespace biphoton
