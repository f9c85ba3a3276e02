#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>

#include "biphoton/io.hpp"
#include "biphoton/scan.hpp"

namespace {

using namespace biphoton;

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("biphoton_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

}  // namespace

TEST(FormatExact, RoundTripsShortest) {
  for (double v : {0.1, 1.0 / 3.0, 183.48e-3, -2.5e-17, 1e300}) EXPECT_EQ(parse_double(format_exact(v), "v"), v);
  EXPECT_EQ(format_exact(0.25), "0.25");
  EXPECT_THROW(parse_double("1.5x", "v"), DataError);
  EXPECT_THROW(parse_double("", "v"), DataError);
}

TEST(Config, UnitSuffixesConvertToSi) {
  const RunConfig c = parse(
      "[geometry]\n"
      "downconverted_wavelength_um = 0.884\n"
      "crystal_separation_mm = 20\n"
      "emission_angle_deg = 7\n"
      "slit_width_m = 5e-5\n");
  EXPECT_NEAR(c.geometry.downconverted_wavelength, 884e-9, 1e-20);
  EXPECT_NEAR(c.geometry.crystal_separation, 0.02, 1e-15);
  EXPECT_NEAR(c.geometry.emission_angle, 7.0 * std::numbers::pi / 180.0, 1e-15);
  EXPECT_DOUBLE_EQ(c.geometry.slit_width, 5e-5);
  EXPECT_DOUBLE_EQ(c.geometry.baseline, SetupGeometry{}.baseline);
}

TEST(Config, ScanSectionsKeepOrderAndDefaults) {
  const RunConfig c = parse(
      "[scan.first]\nalpha = 0.5\nstart_mm = -0.5\nstop_mm = 0.5\nseed = 7\n"
      "[scan.second]\nalpha = -2\nabscissa = B\npoisson = false\n");
  ASSERT_EQ(c.scans.size(), 2u);
  EXPECT_EQ(c.scans[0].id, "first");
  EXPECT_DOUBLE_EQ(c.scan("first").scan.start, -0.5e-3);
  EXPECT_EQ(c.scan("first").noise.rng_seed, 7u);
  EXPECT_EQ(c.scan("second").scan.abscissa, Abscissa::B);
  EXPECT_FALSE(c.scan("second").noise.poisson_enabled);
  EXPECT_EQ(c.scan("second").scan.n_points, ScanSpec{}.n_points);
}

TEST(Config, Rejections) {
  EXPECT_THROW(parse("[geometry]\nbaseline_mm = 1500\nbaseline_m = 1.5\n"), ConfigError);
  EXPECT_THROW(parse("[geometry]\nbaselin_m = 1.5\n"), ConfigError);
  EXPECT_THROW(parse("[geometry]\nbaseline_m = far\n"), ConfigError);
  EXPECT_THROW(parse("[geometry]\nemission_angle_deg = 95\n"), ConfigError);
  EXPECT_THROW(parse("[mystery]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse("[scan.]\nalpha = 1\n"), ConfigError);
  EXPECT_THROW(parse("[scan.a]\nalpha = 0\nabscissa = B\n"), ConfigError);
  EXPECT_THROW(parse("[scan.a]\nn_points = 2.5\n"), ConfigError);
  EXPECT_THROW(parse("[scan.a]\nslit_quadrature_points = 4\n"), ConfigError);
  EXPECT_THROW(parse("[reproduce]\nkernel = lorentzian\n"), ConfigError);
  EXPECT_THROW(parse("[output]\ncsv = maybe\n"), ConfigError);
  EXPECT_THROW(parse("[geometry\n"), ConfigError);
}

TEST(Config, UnknownScanIdNamesIt) {
  const RunConfig c = parse("[scan.alpha_0]\nalpha = 0\n");
  try {
    (void)c.scan("alpha_9");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("alpha_9"), std::string::npos);
  }
}

TEST(Config, ShippedCanonicalFileParses) {
  const RunConfig c = load_config(fs::path(BIPHOTON_SOURCE_DIR) / "configs" / "canonical.ini");
  EXPECT_GE(c.scans.size(), 3u);
  EXPECT_NEAR(c.geometry.downconverted_wavelength, 884e-9, 1e-18);
  EXPECT_EQ(c.reproduce.noise.rng_seed, 2024u);
  EXPECT_EQ(c.reproduce.kernel, Kernel::sinc2);
}

TEST_F(TempDir, DatasetRoundTrip) {
  ScanSpec s;
  s.alpha = -0.5;
  NoiseSpec n;
  n.rng_seed = 12;
  const FringeDataset d = simulate_scan(SetupGeometry{}, s, EnvelopeSpec{}, n);
  const fs::path csv = dir_ / "run.csv";
  save_dataset(d, csv);
  ASSERT_TRUE(fs::exists(sidecar_path(csv)));
  const FringeDataset back = load_dataset(csv);
  ASSERT_EQ(back.size(), d.size());
  EXPECT_EQ(back.coincidences, d.coincidences);
  EXPECT_EQ(back.singles_A, d.singles_A);
  EXPECT_EQ(back.singles_B, d.singles_B);
  for (std::size_t j = 0; j < d.size(); ++j) {
    EXPECT_NEAR(back.positions_A[j], d.positions_A[j], 1e-12 * std::abs(d.positions_A[j]));
    EXPECT_NEAR(back.positions_B[j], d.positions_B[j], 1e-12 * std::abs(d.positions_B[j]));
  }
  EXPECT_EQ(back.scan.alpha, s.alpha);
  EXPECT_EQ(back.noise.rng_seed, 12u);
  EXPECT_EQ(back.geometry.emission_angle, d.geometry.emission_angle);
  EXPECT_EQ(dataset_csv(back), dataset_csv(d));
  EXPECT_EQ(dataset_meta(back), dataset_meta(d));
}

TEST_F(TempDir, NoiselessCountsSurviveExactly) {
  NoiseSpec n;
  n.poisson_enabled = false;
  const FringeDataset d = simulate_scan(SetupGeometry{}, ScanSpec{}, EnvelopeSpec{}, n);
  save_dataset(d, dir_ / "clean.csv");
  EXPECT_EQ(load_dataset(dir_ / "clean.csv").coincidences, d.coincidences);
}

TEST_F(TempDir, CsvWithoutSidecarTakesRowCount) {
  const std::string text = std::string(kCsvHeader) + "\n0,183.4,183.4,1,2,3\n1,183.5,183.4,1,2,4\n";
  write_file_atomic(dir_ / "bare.csv", text);
  const FringeDataset d = load_dataset(dir_ / "bare.csv");
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.scan.n_points, 2);
  EXPECT_DOUBLE_EQ(d.positions_A[1], 0.1835);
}

TEST(DatasetCsv, MalformedInputs) {
  const std::string h = std::string(kCsvHeader) + "\n";
  EXPECT_THROW(parse_dataset_csv(""), DataError);
  EXPECT_THROW(parse_dataset_csv("index,x\n0,1\n"), DataError);
  EXPECT_THROW(parse_dataset_csv(h + "0,1,2,3,4\n"), DataError);
  EXPECT_THROW(parse_dataset_csv(h + "0,1,2,3,4,five\n"), DataError);
  EXPECT_THROW(parse_dataset_csv(h + "1,1,2,3,4,5\n"), DataError);
  EXPECT_THROW(parse_dataset_csv(h + "0,1,2,3,4,-5\n"), DataError);
  EXPECT_NO_THROW(parse_dataset_csv(h + "0,1,2,3,4,5\r\n"));
}

TEST_F(TempDir, SidecarMismatchIsDataError) {
  ScanSpec s;
  s.alpha = 1.0;
  const FringeDataset d = simulate_scan(SetupGeometry{}, s, EnvelopeSpec{}, NoiseSpec{});
  const fs::path csv = dir_ / "run.csv";
  save_dataset(d, csv);
  std::string text = read_file(csv);
  text.resize(text.find("\n3,") + 1);  // keep three data rows
  write_file_atomic(csv, text);
  EXPECT_THROW(load_dataset(csv), DataError);

  save_dataset(d, csv);
  std::string meta = read_file(sidecar_path(csv));
  meta.replace(meta.find("alpha = 1"), 9, "alpha = 2");
  write_file_atomic(sidecar_path(csv), meta);
  EXPECT_THROW(load_dataset(csv), DataError);
}

TEST(FitReport, ListsParametersAndRatio) {
  FitResult r;
  r.params.wavevector = 22463.0;
  r.converged = true;
  r.status = FitStatus::converged;
  FitReportContext ctx;
  ctx.source = "x.csv";
  ctx.alpha = 1.0;
  ctx.k0 = 11231.5;
  const std::string text = fit_report(r, ctx);
  EXPECT_NE(text.find("wavevector_per_m = 22463"), std::string::npos);
  EXPECT_NE(text.find("wavevector_ratio = 2"), std::string::npos);
  EXPECT_NE(text.find("status = converged"), std::string::npos);
}
