#pragma once

#include <cstdint>
#include <iosfwd>

#include "priorpose/geometry.hpp"

namespace priorpose {

// Dense feature map at 1/8 image resolution; cells are L2-normalized so the
// inner product is cosine similarity. Flat storage is row-major over
// (row, col): cell (u, v) = (col, row) lives at index v * width + u.
struct FeatureGrid {
  int height = 0;
  int width = 0;
  double cell_to_pixel = 8.0;
  Eigen::MatrixXd values;  // (height * width) x depth

  int cells() const { return height * width; }
  int depth() const { return static_cast<int>(values.cols()); }
  int cellIndex(int u, int v) const { return v * width + u; }

  // Pixel coordinates of a cell center.
  Eigen::Vector2d cellCenter(int u, int v) const {
    return {(u + 0.5) * cell_to_pixel, (v + 0.5) * cell_to_pixel};
  }

  void validate() const;
};

// Per-cell best correspondence [u, v, u', v', r], one row per cell of grid A
// in the same flat order.
struct CorrespondenceMap {
  int height = 0;
  int width = 0;
  double cell_to_pixel = 8.0;
  Eigen::Matrix<double, Eigen::Dynamic, 5> entries;
};

enum class PriorSource { Oracle, Correlation };

struct PriorConfig {
  PriorSource source = PriorSource::Oracle;
  double oracle_sigma_rotation_deg = 2.0;
  double oracle_sigma_translation_deg = 2.0;
  double correlation_floor = 0.2;
  double top_fraction = 0.25;  // rho: share of above-floor cells kept for the fit
  int robust_iterations = 1000;
  // Sampson gate (px^2) for the inner fit; 0 selects (1.25 * cell)^2, wide
  // enough for the half-cell quantization both endpoints carry.
  double robust_threshold = 0.0;
  std::uint64_t seed = 7;

  void validate() const;
};

// Argmax correlation of every cell of A against all cells of B; ties break
// to the lowest flat index.
CorrespondenceMap correlateGrids(const FeatureGrid& ga, const FeatureGrid& gb);

// Robust pose from the highest-correlation cells: top-rho selection, seeded
// RANSAC over eight-point essential fits, inlier refit, cheirality.
Pose coarsePoseFromMap(const CorrespondenceMap& map, const CameraIntrinsics& ka, const CameraIntrinsics& kb,
                       const PriorConfig& cfg);

// Ground-truth pose perturbed by half-normal rotation/translation angles;
// stands in for a trained regressor with a controllable error level.
Pose noisyOraclePrior(const Pose& truth, const PriorConfig& cfg, std::uint64_t seed);

// "h w d scale" header, then h*w rows of d values.
void writeFeatureGrid(std::ostream& out, const FeatureGrid& grid);
FeatureGrid readFeatureGrid(std::istream& in);

}  // namespace priorpose
