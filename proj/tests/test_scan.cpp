#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <Eigen/Geometry>

#include "hero/error.hpp"
#include "hero/scan.hpp"
#include "support.hpp"

using namespace hero;
namespace fs = std::filesystem;

namespace {

// Direct evaluation of the azimuth rule, written independently of the library.
BoolGrid mask_oracle(const PolarScan& s, double beta) {
  BoolGrid m(s.num_azimuths(), s.num_bins());
  for (int a = 0; a < s.num_azimuths(); ++a) {
    double sum = 0.0;
    for (int b = 0; b < s.num_bins(); ++b) sum += s.intensities(a, b);
    const double mean = sum / s.num_bins();
    for (int b = 0; b < s.num_bins(); ++b) m(a, b) = s.intensities(a, b) > beta * mean;
  }
  return m;
}

std::vector<bool> cell_oracle(const BoolGrid& mask, int cell, double ratio) {
  const int n = static_cast<int>(mask.rows()) / cell;
  std::vector<bool> out;
  for (int cy = 0; cy < n; ++cy)
    for (int cx = 0; cx < n; ++cx) {
      int count = 0;
      for (int y = 0; y < cell; ++y)
        for (int x = 0; x < cell; ++x) count += mask(cy * cell + y, cx * cell + x);
      out.push_back(static_cast<double>(count) / (cell * cell) >= ratio);
    }
  return out;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hero_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Projection, ResolutionMustBeMultipleOfRangeResolution) {
  const PolarScan s = test::zero_scan(16, 64, 0.25);
  EXPECT_THROW(polar_to_cartesian(s, 32, 0.3), ResolutionMismatch);
  EXPECT_NO_THROW(polar_to_cartesian(s, 32, 0.5));
  const PolarScan navtech = test::zero_scan(16, 64, 0.0432);
  EXPECT_NO_THROW(polar_to_cartesian(navtech, 32, 0.2592));
}

TEST(Projection, ZeroScanGivesZeroImage) {
  const CartesianImage img = polar_to_cartesian(test::zero_scan(64, 128, 0.25), 64, 0.5);
  EXPECT_EQ(img.size(), 64);
  EXPECT_TRUE(img.pixels.isZero(0.0));
  EXPECT_FALSE(img.mask.any());
}

TEST(Projection, SingleBrightBinLandsAtItsRange) {
  PolarScan s = test::zero_scan(64, 128, 0.25);
  const int bin = 40;  // 10 m
  s.intensities(0, bin) = 1.0;
  const int S = 64;
  const double res = 0.5;
  const CartesianImage img = polar_to_cartesian(s, S, res);
  Eigen::Index v, u;
  img.pixels.maxCoeff(&v, &u);
  EXPECT_LE(std::abs(u - (S / 2 + bin * 0.25 / res)), 1.0);
  EXPECT_LE(std::abs(v - S / 2), 1.0);
}

TEST(Projection, BeyondMaxRangeIsZeroAndMasked) {
  std::mt19937_64 rng(1);
  PolarScan s = test::random_scan(rng, 32, 16, 0.25);  // max range 3.75 m
  const CartesianImage img = polar_to_cartesian(s, 32, 0.5, 0.01);
  for (int v = 0; v < 32; ++v)
    for (int u = 0; u < 32; ++u) {
      const double r = std::hypot((u - 16) * 0.5, (v - 16) * 0.5);
      if (r > s.max_range()) {
        EXPECT_EQ(img.pixels(v, u), 0.0);
        EXPECT_FALSE(img.mask(v, u));
      }
    }
}

TEST(Projection, MaskScaleInvariant) {
  std::mt19937_64 rng(2);
  PolarScan s = test::random_scan(rng, 64, 64, 0.25);
  const CartesianImage a = polar_to_cartesian(s, 32, 0.5, 1.5);
  s.intensities *= 7.0;
  const CartesianImage b = polar_to_cartesian(s, 32, 0.5, 1.5);
  EXPECT_EQ(a.mask, b.mask);
}

TEST(Projection, AzimuthShiftRotatesBrightLocus) {
  const int A = 64, S = 64;
  PolarScan s = test::zero_scan(A, 128, 0.25);
  s.intensities(0, 48) = 1.0;
  PolarScan r = s;
  r.intensities.setZero();
  r.intensities(1, 48) = 1.0;
  const CartesianImage a = polar_to_cartesian(s, S, 0.5), b = polar_to_cartesian(r, S, 0.5);
  Eigen::Index va, ua, vb, ub;
  a.pixels.maxCoeff(&va, &ua);
  b.pixels.maxCoeff(&vb, &ub);
  const double step = 2.0 * M_PI / A;
  const Eigen::Vector2d pa(ua - S / 2, va - S / 2);
  const Eigen::Vector2d expected = Eigen::Rotation2Dd(step) * pa;
  EXPECT_LE((Eigen::Vector2d(ub - S / 2, vb - S / 2) - expected).norm(), 1.0 + 1e-9);
}

TEST(AzimuthMask, ConstantAzimuthAllFalse) {
  PolarScan s = test::zero_scan(4, 16, 0.25);
  s.intensities.setConstant(2.0);
  EXPECT_FALSE(azimuth_mask(s, 3.0).any());
}

TEST(AzimuthMask, SpikeOnlyTrue) {
  PolarScan s = test::zero_scan(4, 16, 0.25);
  s.intensities(2, 5) = 1.0;
  const BoolGrid m = azimuth_mask(s, 3.0);
  EXPECT_EQ(m.count(), 1);
  EXPECT_TRUE(m(2, 5));
}

TEST(AzimuthMask, TinyBetaKeepsPositiveBins) {
  std::mt19937_64 rng(3);
  PolarScan s = test::random_scan(rng, 8, 32, 0.25);
  s.intensities.array() += 1e-3;
  EXPECT_TRUE(azimuth_mask(s, 1e-9).all());
}

TEST(AzimuthMask, MatchesOracleOnRandomScans) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> beta(0.5, 3.0);
  for (int i = 0; i < 50; ++i) {
    PolarScan s = test::random_scan(rng, 16, 64, 0.25);
    s.intensities = s.intensities.array().pow(4.0);
    const double b = beta(rng);
    EXPECT_EQ(azimuth_mask(s, b), mask_oracle(s, b));
  }
}

TEST(CellValidity, FullMaskAllTrue) {
  CartesianImage img;
  img.pixels = Grid::Zero(64, 64);
  img.mask = BoolGrid::Constant(64, 64, true);
  const auto v = cell_validity(img, 16, 0.05);
  EXPECT_EQ(v.size(), 16u);
  for (bool b : v) EXPECT_TRUE(b);
}

TEST(CellValidity, FiftyOneOfTenTwentyFourIsRejected) {
  CartesianImage img;
  img.pixels = Grid::Zero(32, 32);
  img.mask = BoolGrid::Constant(32, 32, false);
  for (int i = 0; i < 51; ++i) img.mask(i / 32, i % 32) = true;
  EXPECT_FALSE(cell_validity(img, 32, 0.05)[0]);
  img.mask(5, 5) = true;  // 52 / 1024 >= 0.05
  EXPECT_TRUE(cell_validity(img, 32, 0.05)[0]);
}

TEST(CellValidity, FourHundredCellsAtFullSize) {
  CartesianImage img;
  img.pixels = Grid::Zero(640, 640);
  img.mask = BoolGrid::Constant(640, 640, true);
  EXPECT_EQ(cell_validity(img, 32, 0.05).size(), 400u);
}

TEST(CellValidity, MatchesOracleOnRandomMasks) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 30; ++i) {
    PolarScan s = test::random_scan(rng, 64, 128, 0.25);
    s.intensities = s.intensities.array().pow(6.0);
    const CartesianImage img = polar_to_cartesian(s, 64, 0.5, 2.0);
    EXPECT_EQ(cell_validity(img, 16, 0.05), cell_oracle(img.mask, 16, 0.05));
  }
}

TEST(ScanFile, RoundTrip) {
  const fs::path dir = temp_dir("scanfile");
  std::mt19937_64 rng(6);
  PolarScan s = test::random_scan(rng, 8, 20, 0.0432);
  s.intensities = s.intensities.cast<float>().cast<double>();
  s.timestamp = 12.5;
  write_polar_scan(dir / "a.prsc", s);
  const PolarScan r = read_polar_scan(dir / "a.prsc");
  EXPECT_EQ(r.intensities, s.intensities);
  EXPECT_EQ(r.azimuths, s.azimuths);
  EXPECT_EQ(r.timestamp, s.timestamp);
  EXPECT_EQ(r.range_resolution, s.range_resolution);
}

TEST(ScanFile, MalformedFilesThrow) {
  const fs::path dir = temp_dir("scanbad");
  std::ofstream(dir / "bad.prsc") << "NOPE and more bytes here";
  EXPECT_THROW(read_polar_scan(dir / "bad.prsc"), ParseError);
  std::mt19937_64 rng(7);
  write_polar_scan(dir / "ok.prsc", test::random_scan(rng, 8, 16, 0.25));
  const auto size = fs::file_size(dir / "ok.prsc");
  fs::resize_file(dir / "ok.prsc", size - 10);
  EXPECT_THROW(read_polar_scan(dir / "ok.prsc"), ParseError);
  EXPECT_THROW(read_polar_scan(dir / "missing.prsc"), ParseError);
}

TEST(ScanFile, DirectoryListingIsLexical) {
  const fs::path dir = temp_dir("scanlist");
  std::mt19937_64 rng(8);
  for (const char* n : {"b.prsc", "a.prsc", "c.txt", "10.prsc"}) write_polar_scan(dir / n, test::random_scan(rng, 4, 8, 0.25));
  const auto files = list_scan_files(dir);
  ASSERT_EQ(files.size(), 3u);
  EXPECT_EQ(files[0].filename(), "10.prsc");
  EXPECT_EQ(files[1].filename(), "a.prsc");
  EXPECT_EQ(files[2].filename(), "b.prsc");
}
