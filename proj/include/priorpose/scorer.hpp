#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace priorpose {

// Flat per-hypothesis feature layout shared with the training dataset file:
// [6 prior Sampson distances | 64 inlier-histogram bins | 2D descriptor summary].
struct FeatureLayout {
  int prior_dim = 6;
  int inlier_dim = 64;
  int descriptor_dim = 512;

  int total() const { return prior_dim + inlier_dim + descriptor_dim; }
};

struct MlpLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;
};

using Mlp = std::vector<MlpLayer>;

// Three ReLU branches whose outputs concatenate (descriptor, prior, inlier)
// into a ReLU head; the final unit passes through a logistic squash.
struct ScorerWeights {
  Mlp descriptor;
  Mlp prior;
  Mlp inlier;
  Mlp head;

  // Paper architecture: 512/256/128/64, 6/16/32/64, 64/64/128/128 branches,
  // 256/256/128/64/32/16/1 head.
  static ScorerWeights zeros();
  static ScorerWeights zeros(const std::vector<int>& descriptor_dims, const std::vector<int>& prior_dims,
                             const std::vector<int>& inlier_dims, const std::vector<int>& head_dims);
  // Uniform +-sqrt(6 / (fan_in + fan_out)) initialization, deterministic per seed.
  static ScorerWeights initialized(std::uint64_t seed);
  static ScorerWeights initialized(const std::vector<int>& descriptor_dims, const std::vector<int>& prior_dims,
                                   const std::vector<int>& inlier_dims, const std::vector<int>& head_dims,
                                   std::uint64_t seed);

  FeatureLayout layout() const;
  void validate() const;
};

// (mean rotation/translation error, degrees) -> [1, 0] over [0, 20] degrees.
double labelFromErrors(double rotation_err_deg, double translation_err_deg);

// Per-column standardization over the hypotheses of one image pair:
// (x - mean) / (stddev + 1e-6), population stddev. With fewer than two rows
// only the mean is subtracted and *degenerate is set.
Eigen::MatrixXd standardizeFeatures(const Eigen::MatrixXd& features, bool* degenerate = nullptr);

// Scores in (0, 1) for standardized feature rows.
Eigen::VectorXd scorerForward(const ScorerWeights& weights, const Eigen::MatrixXd& features);
double scorerForward(const ScorerWeights& weights, const Eigen::VectorXd& features);

double bceLoss(double score, double label);

// Mean BCE over the batch plus the full gradient, shaped like the weights.
struct LossAndGradients {
  double loss = 0.0;
  ScorerWeights gradients;
};
LossAndGradients scorerLossAndGradients(const ScorerWeights& weights, const Eigen::MatrixXd& features,
                                        const Eigen::VectorXd& labels);

// One image pair's top-k hypotheses; the training batch unit.
struct TrainingGroup {
  std::string pair_id;
  Eigen::MatrixXd features;  // k x layout.total(), raw (standardized per step)
  Eigen::VectorXd labels;
};

struct TrainConfig {
  double learning_rate_start = 1e-4;
  double learning_rate_end = 1e-5;
  int epochs = 100;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainResult {
  ScorerWeights weights;
  std::vector<double> loss_curve;  // mean loss per epoch
};

// Adam (0.9 / 0.999 / 1e-8) over groups, one step per group per epoch,
// learning rate annealed linearly across all steps.
TrainResult trainScorer(const std::vector<TrainingGroup>& groups, const TrainConfig& cfg);
TrainResult trainScorer(const std::vector<TrainingGroup>& groups, const TrainConfig& cfg,
                        const ScorerWeights& initial_weights);

// "scorer-v1" text header with the dimension chains, then parameters as
// little-endian float64 (weights row-major, then bias, in layer order).
void saveWeights(const std::string& path, const ScorerWeights& weights);
ScorerWeights loadWeights(const std::string& path);

// Dataset lines "pair_id label f_1 ... f_n" grouped by pair id.
void writeTrainingGroups(const std::string& path, const std::vector<TrainingGroup>& groups);
std::vector<TrainingGroup> readTrainingGroups(const std::string& path);

}  // namespace priorpose
