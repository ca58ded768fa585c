#pragma once

#include <iosfwd>
#include <vector>

#include "priorpose/geometry.hpp"

namespace priorpose {

// Keypoints with unit-norm descriptors, one row per keypoint.
struct KeypointSet {
  Eigen::Matrix<double, Eigen::Dynamic, 2> positions;    // pixel (u, v)
  Eigen::MatrixXd descriptors;                           // N x D, rows L2-normalized

  int size() const { return static_cast<int>(positions.rows()); }
  int descriptorDim() const { return static_cast<int>(descriptors.cols()); }

  void validate() const;
};

struct Match {
  int index_a = 0;
  int index_b = 0;
  double confidence = 0.0;
};

using MatchResult = std::vector<Match>;

struct MatcherConfig {
  double epipolar_weight = 1.0;  // lambda; 0 disables the prior penalty
  // tau_e, normalized-coordinate line distance. A prior that is two degrees
  // off already displaces epipolar lines by ~0.035, so saturation must sit
  // a few times above that or the penalty vetoes the matches it should
  // guide, while staying below typical dynamic-object displacements.
  double epipolar_saturation = 0.10;
  int sinkhorn_iterations = 100;
  double sinkhorn_tolerance = 1e-6;
  double dustbin_score = 0.3;       // alpha
  // Transport mass spreads over every candidate column, so per-cell
  // probabilities scale like 1/N even for clean matches; selection rests on
  // the row/column argmax and this gate only drops near-empty rows.
  double confidence_threshold = 1e-3;
  bool mutual_check = true;
  double descriptor_scale = 1.0;    // S = <da, db> / sqrt(scale) - penalty
};

struct SinkhornResult {
  Eigen::MatrixXd plan;  // (N_A + 1) x (N_B + 1) transport probabilities
  int iterations = 0;
  double marginal_violation = 0.0;
  bool converged = false;
};

// Pixel keypoints mapped to normalized camera coordinates.
Eigen::Matrix<double, Eigen::Dynamic, 2> normalizeKeypoints(const KeypointSet& kps, const CameraIntrinsics& k);

// penalty(i, j) = lambda * min(d^2, tau^2) / tau^2, d the perpendicular
// distance (normalized coordinates) of keypoint j in B to the prior epipolar
// line of keypoint i in A.
Eigen::MatrixXd epipolarPenaltyMatrix(const Pose& prior, const KeypointSet& ka_set, const KeypointSet& kb_set,
                                      const CameraIntrinsics& ka, const CameraIntrinsics& kb,
                                      const MatcherConfig& cfg);

Eigen::MatrixXd scoreMatrix(const KeypointSet& ka_set, const KeypointSet& kb_set, const Eigen::MatrixXd& penalty,
                            const MatcherConfig& cfg);

// Log-domain Sinkhorn over the dustbin-augmented score matrix with marginals
// (1,...,1,N_B) / (1,...,1,N_A).
SinkhornResult sinkhornAssign(const Eigen::MatrixXd& scores, const MatcherConfig& cfg);

// Row-max (and column-max when mutual_check) cells of the plan above the
// confidence threshold; output is one-to-one on both sides.
MatchResult extractMatches(const Eigen::MatrixXd& plan, const MatcherConfig& cfg);

// Full pipeline: penalty (when prior given), scores, Sinkhorn, extraction.
MatchResult matchKeypoints(const KeypointSet& ka_set, const KeypointSet& kb_set, const Pose* prior,
                           const CameraIntrinsics& ka, const CameraIntrinsics& kb, const MatcherConfig& cfg);

// File formats: "n D" header then "u v d_1 ... d_D" per keypoint;
// matches as "i j confidence" lines.
void writeKeypointSet(std::ostream& out, const KeypointSet& kps);
KeypointSet readKeypointSet(std::istream& in);
void writeMatches(std::ostream& out, const MatchResult& matches);
MatchResult readMatches(std::istream& in);

}  // namespace priorpose
