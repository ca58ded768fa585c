#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "priorpose/geometry.hpp"
#include "priorpose/scorer.hpp"
#include "priorpose/solvers.hpp"

namespace priorpose {

class Rng;

// Cumulative inlier-ratio bins: bins[k-1] = |{d_i < k/n_b * d_eps}| / n_c.
struct InlierHistogram {
  Eigen::VectorXd bins;
  double d_eps = 12.6;

  int binCount() const { return static_cast<int>(bins.size()); }
};

InlierHistogram inlierHistogram(const std::vector<double>& distances, int n_c, double d_eps, int n_b);

struct HypothesisFeatures {
  Eigen::VectorXd prior_distances;      // Sampson of the first 6 seeds under the prior F
  InlierHistogram histogram;
  Eigen::VectorXd descriptor_summary;   // mean over seeds of [desc_A | desc_B]

  // [prior | histogram bins | descriptor summary]
  Eigen::VectorXd flat() const;
};

struct Hypothesis {
  std::vector<int> seeds;
  EssentialMatrix essential;
  int inlier_count = -1;
  bool valid = false;
  std::optional<HypothesisFeatures> features;
};

enum class ScorerKind { InlierCount, Learned };

struct EstimatorConfig {
  int hypothesis_count = 2000;  // N
  int top_k = 100;
  double inlier_threshold = 12.6;  // d_eps, squared-pixel Sampson
  int histogram_bins = 64;
  MinimalSolver solver = MinimalSolver::FivePoint;
  ScorerKind scorer = ScorerKind::InlierCount;
  std::shared_ptr<const ScorerWeights> weights;  // required for Learned
  std::uint64_t seed = 42;

  int seedSize() const { return solver == MinimalSolver::FivePoint ? 6 : 8; }
  void validate() const;
};

// Per-correspondence descriptors (one row each side) backing the scorer's
// descriptor branch; may be empty for the inlier-count scorer.
struct CorrespondenceDescriptors {
  Eigen::MatrixXd a;
  Eigen::MatrixXd b;

  bool empty() const { return a.rows() == 0; }
};

struct EstimatorDiagnostics {
  int hypotheses_sampled = 0;
  int hypotheses_valid = 0;
  int top_k_used = 0;
  int winning_index = -1;
  int winning_inliers = 0;
  double winning_score = 0.0;
  std::vector<int> winning_seeds;
  bool standardization_degenerate = false;
};

struct EstimateResult {
  Pose pose;
  std::vector<bool> inlier_mask;
  EstimatorDiagnostics diagnostics;
};

// N seed sets of distinct uniformly drawn indices (6 for five-point, 8 for
// eight-point), deterministic per rng state.
std::vector<Hypothesis> sampleHypotheses(int correspondence_count, const EstimatorConfig& cfg, Rng& rng);

// F = K_B^-T E K_A^-1; returns the strict-inequality inlier count and the
// per-correspondence Sampson distances.
std::pair<int, std::vector<double>> countInliers(const EssentialMatrix& e,
                                                 const std::vector<PixelCorrespondence>& corrs,
                                                 const CameraIntrinsics& ka, const CameraIntrinsics& kb,
                                                 double d_eps);

HypothesisFeatures hypothesisFeatures(const Hypothesis& hyp, const Pose& prior,
                                      const std::vector<PixelCorrespondence>& corrs,
                                      const CorrespondenceDescriptors& descs, const CameraIntrinsics& ka,
                                      const CameraIntrinsics& kb, const EstimatorConfig& cfg);

// Full pipeline: sample N, solve, rank by inlier count, feature + score the
// top k, decompose the winner and pick the cheirality-consistent pose.
EstimateResult estimatePose(const std::vector<PixelCorrespondence>& corrs, const CorrespondenceDescriptors& descs,
                            const Pose& prior, const CameraIntrinsics& ka, const CameraIntrinsics& kb,
                            const EstimatorConfig& cfg);

// Runs the pipeline with the scorer disabled and labels every top-k
// hypothesis against the ground truth; one training group per call.
TrainingGroup collectTrainingGroup(const std::string& pair_id, const std::vector<PixelCorrespondence>& corrs,
                                   const CorrespondenceDescriptors& descs, const Pose& prior, const Pose& truth,
                                   const CameraIntrinsics& ka, const CameraIntrinsics& kb,
                                   const EstimatorConfig& cfg);

// "key: value" lines.
void writeDiagnostics(std::ostream& out, const EstimatorDiagnostics& diag);

// Correspondence file: "uA vA uB vB confidence" per line.
void writeCorrespondences(std::ostream& out, const std::vector<PixelCorrespondence>& corrs);
std::vector<PixelCorrespondence> readCorrespondences(std::istream& in);

}  // namespace priorpose
