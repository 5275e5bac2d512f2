/**
 * \file scan.hpp
 * \brief Polar radar scans, their Cartesian projection, and validity masking.
 */
#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

namespace hero {

/// Row-major dense array; rows are azimuths for polar data, image rows (y) otherwise.
using Grid = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BoolGrid = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/** \brief One radar sweep: A azimuths by B range bins */
struct PolarScan {
  std::vector<double> azimuths;  ///< rad, strictly increasing in [0, 2pi)
  Grid intensities;              ///< A x B, non-negative
  double timestamp = 0.0;        ///< s
  double range_resolution = 0.0; ///< m/bin; bin b is centred at b * range_resolution

  int num_azimuths() const { return static_cast<int>(intensities.rows()); }
  int num_bins() const { return static_cast<int>(intensities.cols()); }
  double max_range() const { return (num_bins() - 1) * range_resolution; }

  /** \brief Throws std::invalid_argument when shape or value invariants fail */
  void validate() const;
};

/**
 * \brief Metric top-down image of a scan. Pixel (row v, col u) sits at
 *        x = (u - S/2) * resolution, y = (v - S/2) * resolution.
 */
struct CartesianImage {
  Grid pixels;
  BoolGrid mask;
  double resolution = 0.0;  ///< m/pixel
  double timestamp = 0.0;

  int size() const { return static_cast<int>(pixels.rows()); }
};

/** \brief Per-bin validity: intensity strictly above beta times its azimuth's mean */
BoolGrid azimuth_mask(const PolarScan& scan, double beta);

/**
 * \brief Bilinear (azimuth, range) resampling onto an S x S grid; the mask is the
 *        nearest-neighbour projection of azimuth_mask(scan, beta).
 *
 * Throws ResolutionMismatch unless resolution is within 1e-9 of an integer
 * multiple of scan.range_resolution.
 */
CartesianImage polar_to_cartesian(const PolarScan& scan, int size, double resolution,
                                  double beta = 3.0);

/** \brief Row-major cell flags: true iff the valid-pixel fraction reaches min_valid_ratio */
std::vector<bool> cell_validity(const CartesianImage& img, int cell_size, double min_valid_ratio);

/** \brief Reads a binary "PRSC" scan file; throws ParseError on malformed input */
PolarScan read_polar_scan(const std::filesystem::path& path);
void write_polar_scan(const std::filesystem::path& path, const PolarScan& scan);

/** \brief Scan files of a sequence directory in lexical filename order */
std::vector<std::filesystem::path> list_scan_files(const std::filesystem::path& dir);

/** \brief Binary PGM (P5) of the pixels, scaled to the image maximum */
void write_pgm(const std::filesystem::path& path, const Grid& pixels);
void write_pgm(const std::filesystem::path& path, const BoolGrid& mask);

}  // namespace hero
