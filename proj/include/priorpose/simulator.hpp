#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "priorpose/estimator.hpp"
#include "priorpose/geometry.hpp"
#include "priorpose/matcher.hpp"
#include "priorpose/prior.hpp"

namespace priorpose {

enum class MotionPattern { Forward, TurnLeft, TurnRight, Custom };

struct SceneConfig {
  int point_count = 200;
  double depth_near = 4.0;
  double depth_far = 12.0;
  MotionPattern motion = MotionPattern::Forward;
  double forward_magnitude = 1.5;  // arc length (scene units)
  double yaw_degrees = 10.0;       // turn patterns
  Pose custom_pose;                // Custom pattern; direction scaled by forward_magnitude
  double pixel_noise = 0.5;
  double uniform_outlier_fraction = 0.0;
  double coherent_outlier_fraction = 0.0;
  int coherent_cluster_count = 1;
  int descriptor_dim = 256;
  double descriptor_noise = 0.1;
  int image_width = 720;
  int image_height = 540;
  CameraIntrinsics intrinsics{600.0, 600.0, 360.0, 270.0};
  std::uint64_t seed = 1;
  bool emit_grids = false;
  int grid_depth = 32;
  double grid_descriptor_noise = 0.0;

  void validate() const;
};

enum class MatchLabel { TrueInlier, UniformOutlier, CoherentOutlier };

// One synthetic two-view problem. Correspondence i pairs keypoint i of A
// with keypoint corr_b_index[i] of B; labels align with the A-side index.
struct SyntheticPair {
  SceneConfig config;  // echo with this pair's own seed
  Pose truth;
  CameraIntrinsics ka;
  CameraIntrinsics kb;
  KeypointSet keypoints_a;
  KeypointSet keypoints_b;
  std::vector<int> corr_b_index;
  std::vector<MatchLabel> labels;
  bool has_grids = false;
  FeatureGrid grid_a;
  FeatureGrid grid_b;
  // Correspondences whose cells actually received a shared grid feature;
  // colliding cells are skipped first-come.
  std::vector<int> planted_corr_indices;

  int correspondenceCount() const { return static_cast<int>(corr_b_index.size()); }
  std::vector<PixelCorrespondence> correspondences() const;
  CorrespondenceDescriptors correspondenceDescriptors() const;
  int trueInlierCount() const;
};

SyntheticPair generatePair(const SceneConfig& cfg);

// Plants matching unit descriptors at the grid cells of the true-inlier
// keypoints; every other cell gets an independent random unit vector.
// Deterministic per pair seed.
void generateFeatureGrids(SyntheticPair& pair, int depth, double descriptor_noise);

struct Dataset {
  SceneConfig base_config;
  double calibrated_threshold = 0.0;  // px^2 Sampson, 99th pct of true inliers
  std::vector<SyntheticPair> pairs;
};

// Pair i uses seed derive(base.seed, i); the calibrated threshold comes from
// the pooled true-inlier Sampson distances under the ground-truth poses.
Dataset generateDataset(const SceneConfig& base, int pair_count);

void writeDataset(std::ostream& out, const Dataset& dataset);
Dataset readDataset(std::istream& in);
void writeDatasetFile(const std::string& path, const Dataset& dataset);
Dataset readDatasetFile(const std::string& path);

std::string sceneConfigToJson(const SceneConfig& cfg);
SceneConfig sceneConfigFromJson(const std::string& text);

// Match (i, j) counts as correct when j is i's ground-truth partner and the
// correspondence is a true inlier.
struct MatchQuality {
  int correct = 0;
  int total_matches = 0;
  int total_true = 0;

  double precision() const { return total_matches > 0 ? static_cast<double>(correct) / total_matches : 0.0; }
  double recall() const { return total_true > 0 ? static_cast<double>(correct) / total_true : 0.0; }
};

MatchQuality evaluateMatches(const SyntheticPair& pair, const MatchResult& matches);

}  // namespace priorpose
