/**
 * \file scan.cpp
 * \brief Polar-to-Cartesian projection, masking and scan file I/O.
 */
#include "hero/scan.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "hero/error.hpp"

namespace hero {

static_assert(std::endian::native == std::endian::little,
              "scan and checkpoint files are little-endian; big-endian hosts are unsupported");

void PolarScan::validate() const {
  if (num_azimuths() < 4 || num_bins() < 8)
    throw std::invalid_argument("PolarScan: need at least 4 azimuths and 8 bins");
  if (static_cast<int>(azimuths.size()) != num_azimuths())
    throw std::invalid_argument("PolarScan: azimuth count does not match intensity rows");
  for (std::size_t i = 0; i < azimuths.size(); ++i) {
    if (azimuths[i] < 0.0 || azimuths[i] >= 2.0 * M_PI)
      throw std::invalid_argument("PolarScan: azimuth outside [0, 2pi)");
    if (i > 0 && azimuths[i] <= azimuths[i - 1])
      throw std::invalid_argument("PolarScan: azimuths not strictly increasing");
  }
  if (!(range_resolution > 0.0)) throw std::invalid_argument("PolarScan: range_resolution <= 0");
  if ((intensities.array() < 0.0).any() || !intensities.allFinite())
    throw std::invalid_argument("PolarScan: intensities must be finite and non-negative");
}

BoolGrid azimuth_mask(const PolarScan& scan, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("azimuth_mask: beta must be positive");
  BoolGrid mask(scan.num_azimuths(), scan.num_bins());
  for (int a = 0; a < scan.num_azimuths(); ++a) {
    const double threshold = beta * scan.intensities.row(a).mean();
    mask.row(a) = (scan.intensities.row(a).array() > threshold);
  }
  return mask;
}

namespace {

// Brackets angle phi in [0, 2pi) between two azimuth rows, with wrap-around.
struct AzimuthBracket {
  int lo, hi;
  double frac;  // 0 at lo, 1 at hi
};

AzimuthBracket bracket_azimuth(const std::vector<double>& az, double phi) {
  const int A = static_cast<int>(az.size());
  const auto it = std::upper_bound(az.begin(), az.end(), phi);
  const int hi_idx = static_cast<int>(it - az.begin());
  int lo, hi;
  double a_lo, a_hi;
  if (hi_idx == 0) {
    lo = A - 1;
    hi = 0;
    a_lo = az[A - 1] - 2.0 * M_PI;
    a_hi = az[0];
  } else if (hi_idx == A) {
    lo = A - 1;
    hi = 0;
    a_lo = az[A - 1];
    a_hi = az[0] + 2.0 * M_PI;
  } else {
    lo = hi_idx - 1;
    hi = hi_idx;
    a_lo = az[lo];
    a_hi = az[hi];
  }
  return {lo, hi, (phi - a_lo) / (a_hi - a_lo)};
}

}  // namespace

CartesianImage polar_to_cartesian(const PolarScan& scan, int size, double resolution, double beta) {
  scan.validate();
  if (size <= 0 || size % 2 != 0) throw std::invalid_argument("polar_to_cartesian: size must be even");
  const double ratio = resolution / scan.range_resolution;
  const double multiple = std::round(ratio);
  if (multiple < 1.0 || std::abs(resolution - multiple * scan.range_resolution) > 1e-9)
    throw ResolutionMismatch("polar_to_cartesian: resolution is not an integer multiple of " +
                             std::to_string(scan.range_resolution));

  const BoolGrid valid = azimuth_mask(scan, beta);
  const int B = scan.num_bins();
  const double half = 0.5 * size;

  CartesianImage img;
  img.pixels = Grid::Zero(size, size);
  img.mask = BoolGrid::Constant(size, size, false);
  img.resolution = resolution;
  img.timestamp = scan.timestamp;

  for (int v = 0; v < size; ++v) {
    const double y = (v - half) * resolution;
    for (int u = 0; u < size; ++u) {
      const double x = (u - half) * resolution;
      const double rho = std::hypot(x, y);
      const double fb = rho / scan.range_resolution;
      if (fb > B - 1) continue;
      double phi = std::atan2(y, x);
      if (phi < 0.0) phi += 2.0 * M_PI;
      if (phi >= 2.0 * M_PI) phi = 0.0;
      const AzimuthBracket br = bracket_azimuth(scan.azimuths, phi);
      const int b0 = std::min(static_cast<int>(fb), B - 2);
      const double tb = fb - b0;
      const auto& I = scan.intensities;
      const double lo = (1.0 - tb) * I(br.lo, b0) + tb * I(br.lo, b0 + 1);
      const double hi = (1.0 - tb) * I(br.hi, b0) + tb * I(br.hi, b0 + 1);
      img.pixels(v, u) = (1.0 - br.frac) * lo + br.frac * hi;
      const int an = br.frac < 0.5 ? br.lo : br.hi;
      const int bn = static_cast<int>(std::lround(fb));
      img.mask(v, u) = valid(an, bn);
    }
  }
  return img;
}

std::vector<bool> cell_validity(const CartesianImage& img, int cell_size, double min_valid_ratio) {
  const int S = img.size();
  if (cell_size <= 0 || S % cell_size != 0)
    throw std::invalid_argument("cell_validity: image size not divisible by cell size");
  const int n = S / cell_size;
  std::vector<bool> out(static_cast<std::size_t>(n) * n);
  const double area = static_cast<double>(cell_size) * cell_size;
  for (int cy = 0; cy < n; ++cy)
    for (int cx = 0; cx < n; ++cx) {
      const auto block = img.mask.block(cy * cell_size, cx * cell_size, cell_size, cell_size);
      const double count = static_cast<double>(block.count());
      out[static_cast<std::size_t>(cy) * n + cx] = count / area >= min_valid_ratio;
    }
  return out;
}

namespace {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& what) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ParseError("truncated scan file while reading " + what);
  return v;
}

}  // namespace

PolarScan read_polar_scan(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "PRSC", 4) != 0) throw ParseError("bad magic in " + path.string());
  const auto A = read_pod<std::uint32_t>(is, "azimuth count");
  const auto B = read_pod<std::uint32_t>(is, "bin count");
  if (A < 4 || B < 8 || A > (1u << 20) || B > (1u << 20))
    throw ParseError("implausible scan dimensions in " + path.string());
  PolarScan scan;
  scan.timestamp = read_pod<double>(is, "timestamp");
  scan.range_resolution = read_pod<double>(is, "range resolution");
  scan.azimuths.resize(A);
  for (auto& a : scan.azimuths) a = read_pod<double>(is, "azimuths");
  scan.intensities.resize(A, B);
  std::vector<float> row(B);
  for (std::uint32_t a = 0; a < A; ++a) {
    is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(B * sizeof(float)));
    if (!is) throw ParseError("truncated intensities in " + path.string());
    for (std::uint32_t b = 0; b < B; ++b) scan.intensities(a, b) = row[b];
  }
  try {
    scan.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return scan;
}

void write_polar_scan(const std::filesystem::path& path, const PolarScan& scan) {
  scan.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write("PRSC", 4);
  write_pod(os, static_cast<std::uint32_t>(scan.num_azimuths()));
  write_pod(os, static_cast<std::uint32_t>(scan.num_bins()));
  write_pod(os, scan.timestamp);
  write_pod(os, scan.range_resolution);
  for (double a : scan.azimuths) write_pod(os, a);
  for (int a = 0; a < scan.num_azimuths(); ++a)
    for (int b = 0; b < scan.num_bins(); ++b) write_pod(os, static_cast<float>(scan.intensities(a, b)));
}

std::vector<std::filesystem::path> list_scan_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".prsc") files.push_back(entry.path());
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  return files;
}

void write_pgm(const std::filesystem::path& path, const Grid& pixels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "P5\n" << pixels.cols() << " " << pixels.rows() << "\n255\n";
  const double peak = std::max(pixels.maxCoeff(), 1e-12);
  for (Eigen::Index r = 0; r < pixels.rows(); ++r)
    for (Eigen::Index c = 0; c < pixels.cols(); ++c) {
      const double s = std::clamp(pixels(r, c) / peak, 0.0, 1.0);
      os.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * s))));
    }
}

void write_pgm(const std::filesystem::path& path, const BoolGrid& mask) {
  write_pgm(path, Grid(mask.cast<double>()));
}

}  // namespace hero
