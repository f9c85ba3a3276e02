#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "biphoton/fitfringe.hpp"
#include "biphoton/scan.hpp"

namespace {

using namespace biphoton;

NoiseSpec noiseless(int quad = 11) {
  NoiseSpec n;
  n.poisson_enabled = false;
  n.slit_quadrature_points = quad;
  return n;
}

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

}  // namespace

TEST(Trajectory, AlphaZeroHoldsDetectorB) {
  const SetupGeometry g;
  ScanSpec s;
  s.fixed_position = 0.2e-3;
  for (int i = 0; i < s.n_points; i += 50) {
    const DetectorPositions p = trajectory(s, g, i);
    EXPECT_EQ(p.x_B, p.ref_B + 0.2e-3);
  }
  EXPECT_NEAR(trajectory(s, g, 0).x_A - g.reference_position(), -1e-3, 1e-15);
  EXPECT_NEAR(trajectory(s, g, s.n_points - 1).x_A - g.reference_position(), 1e-3, 1e-15);
}

TEST(Trajectory, AlphaOneMovesTogether) {
  const SetupGeometry g;
  ScanSpec s;
  s.alpha = 1.0;
  for (int i = 0; i < s.n_points; i += 20) {
    const DetectorPositions p = trajectory(s, g, i);
    EXPECT_DOUBLE_EQ(p.x_A - p.ref_A, p.x_B - p.ref_B);
  }
}

TEST(Trajectory, RatioInvariantOnEitherAbscissa) {
  const SetupGeometry g;
  for (double alpha : {0.5, -0.5, -2.0, -3.0, 1.0}) {
    for (Abscissa a : {Abscissa::A, Abscissa::B}) {
      ScanSpec s;
      s.alpha = alpha;
      s.abscissa = a;
      for (int i = 0; i < s.n_points; ++i) {
        const DetectorPositions p = trajectory(s, g, i);
        EXPECT_NEAR(p.x_B - p.ref_B, alpha * (p.x_A - p.ref_A), 1e-15) << alpha << ' ' << to_string(a);
      }
    }
  }
}

TEST(Trajectory, AbscissaBHalfRatio) {
  const SetupGeometry g;
  ScanSpec s;
  s.alpha = 0.5;
  s.abscissa = Abscissa::B;
  const DetectorPositions p = trajectory(s, g, s.n_points - 1);
  EXPECT_NEAR(p.x_B - p.ref_B, 1e-3, 1e-15);
  EXPECT_NEAR(p.x_A - p.ref_A, 2e-3, 1e-15);
}

TEST(Trajectory, RejectsBadSpecs) {
  const SetupGeometry g;
  ScanSpec s;
  EXPECT_THROW(trajectory(s, g, s.n_points), std::out_of_range);
  s.abscissa = Abscissa::B;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = ScanSpec{};
  s.n_points = 1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = ScanSpec{};
  s.start = s.stop;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(MeanModel, ZeroVisibilityIsEnvelopeOnly) {
  const SetupGeometry g;
  ScanSpec s;
  EnvelopeSpec e;
  e.visibility = 0.0;
  for (int i = 0; i < s.n_points; i += 10) {
    const DetectorPositions p = trajectory(s, g, i);
    const double env = e.peak_rate * detail::gaussian(p.x_A - p.ref_A, 0.0, e.width) * detail::gaussian(0.0, 0.0, e.width);
    // slit averaging of a smooth envelope moves it only at second order
    EXPECT_NEAR(mean_model(g, s, e, noiseless(), i).coincidence, 0.5 * env, 1e-3 * env);
    EXPECT_NEAR(mean_model(g, s, e, noiseless(1), i).coincidence, 0.5 * env, 1e-12 * env);
  }
}

TEST(MeanModel, FullVisibilitySpansZeroToPeak) {
  SetupGeometry g;
  g.slit_width = 0.0;
  ScanSpec s;
  s.n_points = 2001;
  EnvelopeSpec e;
  e.visibility = 1.0;
  e.width = 1e3;
  double lo = 1e300, hi = -1e300;
  for (int i = 0; i < s.n_points; ++i) {
    const double c = mean_model(g, s, e, noiseless(1), i).coincidence;
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  EXPECT_NEAR(lo, 0.0, 1e-3 * e.peak_rate);
  EXPECT_NEAR(hi, e.peak_rate, 1e-3 * e.peak_rate);
}

// Uniform averaging over a slit of width w multiplies the fringe term by
// sin(k w / 2) / (k w / 2) for each detector.
TEST(MeanModel, SlitSmearingReducesContrastBySincProduct) {
  SetupGeometry g;
  g.slit_width = 0.2e-3;
  const double k0 = linearized_k0(g);
  ScanSpec s;
  s.start = -std::numbers::pi / k0;  // one fringe period
  s.stop = std::numbers::pi / k0;
  s.n_points = 801;
  EnvelopeSpec e;
  e.visibility = 1.0;
  e.width = 1e3;
  double lo = 1e300, hi = -1e300;
  for (int i = 0; i < s.n_points; ++i) {
    const double c = mean_model(g, s, e, noiseless(101), i).coincidence;
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  const double contrast = (hi - lo) / (hi + lo);
  const double expected = sinc(k0 * g.slit_width / 2) * sinc(k0 * g.slit_width / 2);
  EXPECT_LT(expected, 0.7);
  EXPECT_NEAR(contrast / expected, 1.0, 0.02);
}

TEST(SimulateScan, NoiselessEqualsMean) {
  const SetupGeometry g;
  ScanSpec s;
  s.alpha = 0.5;
  const EnvelopeSpec e;
  const NoiseSpec n = noiseless();
  const FringeDataset d = simulate_scan(g, s, e, n);
  ASSERT_EQ(d.size(), static_cast<std::size_t>(s.n_points));
  for (int i = 0; i < s.n_points; ++i) {
    const ModelRates m = mean_model(g, s, e, n, i);
    const auto j = static_cast<std::size_t>(i);
    EXPECT_EQ(d.coincidences[j], m.coincidence);
    EXPECT_EQ(d.singles_A[j], m.singles_A);
    EXPECT_EQ(d.singles_B[j], m.singles_B);
  }
}

TEST(SimulateScan, SameSeedSameCounts) {
  const SetupGeometry g;
  ScanSpec s;
  s.alpha = -2.0;
  s.abscissa = Abscissa::B;
  NoiseSpec n;
  n.rng_seed = 99;
  const FringeDataset a = simulate_scan(g, s, EnvelopeSpec{}, n);
  const FringeDataset b = simulate_scan(g, s, EnvelopeSpec{}, n);
  EXPECT_EQ(a.coincidences, b.coincidences);
  EXPECT_EQ(a.singles_A, b.singles_A);
  EXPECT_EQ(a.positions_B, b.positions_B);
  n.rng_seed = 100;
  EXPECT_NE(simulate_scan(g, s, EnvelopeSpec{}, n).coincidences, a.coincidences);
}

TEST(SimulateScan, CountsAreIntegral) {
  const FringeDataset d = simulate_scan(SetupGeometry{}, ScanSpec{}, EnvelopeSpec{}, NoiseSpec{});
  for (double v : d.coincidences) {
    EXPECT_GE(v, 0.0);
    EXPECT_EQ(v, std::floor(v));
  }
}

TEST(SimulateScan, PoissonMeanOverReplicates) {
  const SetupGeometry g;
  ScanSpec s;
  s.n_points = 3;
  const EnvelopeSpec e;
  NoiseSpec n;
  const double mean = mean_model(g, s, e, n, 1).coincidence;
  constexpr int reps = 10000;
  double sum = 0.0;
  for (int r = 0; r < reps; ++r) {
    n.rng_seed = static_cast<std::uint64_t>(r);
    sum += simulate_scan(g, s, e, n).coincidences[1];
  }
  const double se = std::sqrt(mean / reps);
  EXPECT_NEAR(sum / reps, mean, 3.0 * se);
}

TEST(ExpectedWavevector, SignalAndIdlerLaws) {
  const double k0 = 11.0;
  EXPECT_DOUBLE_EQ(expected_wavevector(0.0, Viewpoint::signal, k0), k0);
  EXPECT_DOUBLE_EQ(expected_wavevector(1.0, Viewpoint::signal, k0), 2 * k0);
  EXPECT_DOUBLE_EQ(expected_wavevector(1.0, Viewpoint::idler, k0), 2 * k0);
  EXPECT_DOUBLE_EQ(expected_wavevector(0.5, Viewpoint::signal, k0), 1.5 * k0);
  EXPECT_DOUBLE_EQ(expected_wavevector(0.5, Viewpoint::idler, k0), 3 * k0);
  EXPECT_DOUBLE_EQ(expected_wavevector(-0.5, Viewpoint::signal, k0), 0.5 * k0);
  EXPECT_DOUBLE_EQ(expected_wavevector(-0.5, Viewpoint::idler, k0), k0);
  EXPECT_DOUBLE_EQ(expected_wavevector(-3.0, Viewpoint::signal, k0), 2 * k0);
  EXPECT_NEAR(expected_wavevector(-3.0, Viewpoint::idler, k0), 2.0 / 3.0 * k0, 1e-12);
  EXPECT_THROW(expected_wavevector(0.0, Viewpoint::idler, k0), std::invalid_argument);
}

// Exchanging the roles of the detectors maps alpha to 1/alpha.
TEST(ExpectedWavevector, ViewpointDuality) {
  for (double alpha : {0.5, -0.5, -2.0, -3.0, 1.0, 4.0}) {
    EXPECT_NEAR(expected_wavevector(alpha, Viewpoint::idler, 1.0), expected_wavevector(1.0 / alpha, Viewpoint::signal, 1.0),
                1e-12);
    EXPECT_NEAR(expected_wavevector(alpha, Viewpoint::signal, 1.0) / expected_wavevector(alpha, Viewpoint::idler, 1.0),
                std::abs(alpha), 1e-12);
  }
}

TEST(SimulateScan, SinglesCarryNoFringe) {
  const SetupGeometry g;
  ScanSpec s;
  s.alpha = 1.0;
  EnvelopeSpec e;
  e.peak_rate = 1000.0;
  NoiseSpec n;
  n.rng_seed = 17;
  const FringeDataset d = simulate_scan(g, s, e, n);
  const double k = expected_wavevector(s.alpha, Viewpoint::signal, linearized_k0(g));
  // project the envelope-normalised singles onto the fringe frequency
  double c = 0.0, sn = 0.0, w = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    const double u = d.positions_A[j] - g.reference_position();
    const double env = e.peak_rate * detail::gaussian(u, e.center, e.width);
    const double r = d.singles_A[j] - env;
    c += r * std::cos(k * u);
    sn += r * std::sin(k * u);
    w += env;
  }
  const double apparent_visibility = 2.0 * std::hypot(c, sn) / w;
  EXPECT_LT(apparent_visibility, 0.05);

  const FringeDataset clean = simulate_scan(g, s, e, noiseless());
  for (std::size_t j = 0; j < clean.size(); ++j) {
    const double u = clean.positions_A[j] - g.reference_position();
    EXPECT_DOUBLE_EQ(clean.singles_A[j], e.peak_rate * detail::gaussian(u, e.center, e.width));
  }
}

TEST(SimulateScan, AlphaZeroPeriodogramPeaksAtK0) {
  const SetupGeometry g;
  ScanSpec s;
  const FringeDataset d = simulate_scan(g, s, EnvelopeSpec{}, noiseless());
  const FringeModel guess = initial_guess(d, Abscissa::A);
  const double span = s.stop - s.start;
  const double w_lo = 2.0 * std::numbers::pi / span;
  const double w_hi = std::numbers::pi / (span / (s.n_points - 1));
  const double n_freq = std::max(256.0, std::ceil(4.0 * (w_hi - w_lo) / w_lo) + 1);
  const double bin = (w_hi - w_lo) / (n_freq - 1);
  EXPECT_LE(std::abs(guess.wavevector - linearized_k0(g)), bin);
}

// The 0.5 mm slit spans most of a fringe period at this geometry, so the
// fringe is washed out; the default aperture is narrower for that reason.
TEST(MeanModel, HalfMillimetreSlitWashesOutFringe) {
  SetupGeometry g;
  g.slit_width = 0.5e-3;
  const double k0 = linearized_k0(g);
  ScanSpec s;
  s.start = -std::numbers::pi / k0;
  s.stop = std::numbers::pi / k0;
  s.n_points = 401;
  EnvelopeSpec e;
  e.visibility = 1.0;
  e.width = 1e3;
  double lo = 1e300, hi = -1e300;
  for (int i = 0; i < s.n_points; ++i) {
    const double c = mean_model(g, s, e, noiseless(101), i).coincidence;
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  EXPECT_LT((hi - lo) / (hi + lo), 0.05);
}
