#include "priorpose/estimator.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>

#include "priorpose/io.hpp"
#include "priorpose/rng.hpp"

namespace priorpose {

void EstimatorConfig::validate() const {
  if (hypothesis_count < top_k || top_k < 1) {
    throw std::invalid_argument("EstimatorConfig: require hypothesis_count >= top_k >= 1");
  }
  if (inlier_threshold <= 0.0) throw std::invalid_argument("EstimatorConfig: inlier_threshold must be positive");
  if (histogram_bins < 1) throw std::invalid_argument("EstimatorConfig: histogram_bins must be >= 1");
  if (scorer == ScorerKind::Learned && !weights) {
    throw std::invalid_argument("EstimatorConfig: learned scorer requires weights");
  }
}

InlierHistogram inlierHistogram(const std::vector<double>& distances, int n_c, double d_eps, int n_b) {
  if (n_c < 1) throw std::invalid_argument("inlierHistogram: n_c must be >= 1");
  if (n_b < 1 || d_eps <= 0.0) throw std::invalid_argument("inlierHistogram: bad bin configuration");

  InlierHistogram hist;
  hist.d_eps = d_eps;
  hist.bins = Eigen::VectorXd::Zero(n_b);
  for (int k = 1; k <= n_b; ++k) {
    const double delta = (static_cast<double>(k) / n_b) * d_eps;
    int count = 0;
    for (const double d : distances) {
      if (d < delta) ++count;
    }
    hist.bins[k - 1] = static_cast<double>(count) / n_c;
  }
  // Cumulative by definition; a violation means the construction above broke.
  for (int k = 1; k < n_b; ++k) {
    if (hist.bins[k] < hist.bins[k - 1]) throw std::logic_error("inlierHistogram: non-monotone bins");
  }
  return hist;
}

Eigen::VectorXd HypothesisFeatures::flat() const {
  Eigen::VectorXd out(prior_distances.size() + histogram.bins.size() + descriptor_summary.size());
  out << prior_distances, histogram.bins, descriptor_summary;
  return out;
}

std::vector<Hypothesis> sampleHypotheses(int correspondence_count, const EstimatorConfig& cfg, Rng& rng) {
  cfg.validate();
  const int k = cfg.seedSize();
  if (correspondence_count < k) {
    throw std::invalid_argument("sampleHypotheses: need at least " + std::to_string(k) + " correspondences");
  }
  std::vector<Hypothesis> hyps(cfg.hypothesis_count);
  for (Hypothesis& hyp : hyps) {
    hyp.seeds.resize(k);
    for (int i = 0; i < k; ++i) {
      int pick;
      bool fresh;
      do {
        pick = static_cast<int>(rng.uniformInt(static_cast<std::uint64_t>(correspondence_count)));
        fresh = std::none_of(hyp.seeds.begin(), hyp.seeds.begin() + i, [&](int s) { return s == pick; });
      } while (!fresh);
      hyp.seeds[i] = pick;
    }
  }
  return hyps;
}

std::pair<int, std::vector<double>> countInliers(const EssentialMatrix& e,
                                                 const std::vector<PixelCorrespondence>& corrs,
                                                 const CameraIntrinsics& ka, const CameraIntrinsics& kb,
                                                 double d_eps) {
  const FundamentalMatrix f = fundamentalFromEssential(ka, kb, e);
  std::vector<double> distances(corrs.size());
  int count = 0;
  for (size_t i = 0; i < corrs.size(); ++i) {
    distances[i] = sampsonDistance(f, corrs[i].a, corrs[i].b);
    if (distances[i] < d_eps) ++count;
  }
  return {count, std::move(distances)};
}

HypothesisFeatures hypothesisFeatures(const Hypothesis& hyp, const Pose& prior,
                                      const std::vector<PixelCorrespondence>& corrs,
                                      const CorrespondenceDescriptors& descs, const CameraIntrinsics& ka,
                                      const CameraIntrinsics& kb, const EstimatorConfig& cfg) {
  HypothesisFeatures feats;

  const FundamentalMatrix f_prior = fundamentalFromPose(ka, kb, prior);
  const int prior_seeds = std::min<int>(6, static_cast<int>(hyp.seeds.size()));
  feats.prior_distances.resize(prior_seeds);
  for (int i = 0; i < prior_seeds; ++i) {
    const auto& c = corrs[hyp.seeds[i]];
    feats.prior_distances[i] = sampsonDistance(f_prior, c.a, c.b);
  }

  const auto [count, distances] = countInliers(hyp.essential, corrs, ka, kb, cfg.inlier_threshold);
  (void)count;
  feats.histogram =
      inlierHistogram(distances, static_cast<int>(corrs.size()), cfg.inlier_threshold, cfg.histogram_bins);

  if (!descs.empty()) {
    const auto dim = descs.a.cols();
    feats.descriptor_summary = Eigen::VectorXd::Zero(2 * dim);
    for (const int s : hyp.seeds) {
      feats.descriptor_summary.head(dim) += descs.a.row(s).transpose();
      feats.descriptor_summary.tail(dim) += descs.b.row(s).transpose();
    }
    feats.descriptor_summary /= static_cast<double>(hyp.seeds.size());
  } else {
    feats.descriptor_summary = Eigen::VectorXd::Zero(0);
  }
  return feats;
}

namespace {

// Top-k indices by (inlier count desc, hypothesis index asc).
std::vector<int> topKByInliers(const std::vector<Hypothesis>& hyps, int k) {
  std::vector<int> order;
  order.reserve(hyps.size());
  for (size_t i = 0; i < hyps.size(); ++i) {
    if (hyps[i].valid) order.push_back(static_cast<int>(i));
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return hyps[a].inlier_count > hyps[b].inlier_count; });
  if (static_cast<int>(order.size()) > k) order.resize(k);
  return order;
}

struct RankedHypotheses {
  std::vector<Hypothesis> hypotheses;
  std::vector<int> top;  // indices into hypotheses
};

RankedHypotheses solveAndRank(const std::vector<PixelCorrespondence>& corrs, const CameraIntrinsics& ka,
                              const CameraIntrinsics& kb, const EstimatorConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(corrs.size()) < cfg.seedSize()) {
    throw std::invalid_argument("estimatePose: need at least " + std::to_string(cfg.seedSize()) +
                                " correspondences");
  }

  Rng rng(cfg.seed);
  RankedHypotheses out;
  out.hypotheses = sampleHypotheses(static_cast<int>(corrs.size()), cfg, rng);

  std::vector<PixelCorrespondence> seeds(cfg.seedSize());
  for (Hypothesis& hyp : out.hypotheses) {
    for (size_t i = 0; i < hyp.seeds.size(); ++i) seeds[i] = corrs[hyp.seeds[i]];
    try {
      hyp.essential = solveMinimal(seeds, ka, kb, cfg.solver);
    } catch (const DegenerateHypothesis&) {
      continue;
    }
    hyp.inlier_count = countInliers(hyp.essential, corrs, ka, kb, cfg.inlier_threshold).first;
    hyp.valid = true;
  }

  out.top = topKByInliers(out.hypotheses, cfg.top_k);
  if (out.top.empty()) throw std::runtime_error("estimatePose: every hypothesis was degenerate");
  return out;
}

Eigen::VectorXd scoreTopK(const std::vector<Hypothesis>& hyps, const std::vector<int>& top,
                          const EstimatorConfig& cfg, bool* standardization_degenerate) {
  Eigen::VectorXd scores(top.size());
  if (cfg.scorer == ScorerKind::InlierCount) {
    for (size_t r = 0; r < top.size(); ++r) scores[r] = hyps[top[r]].inlier_count;
    return scores;
  }
  Eigen::MatrixXd feats(top.size(), hyps[top.front()].features->flat().size());
  for (size_t r = 0; r < top.size(); ++r) feats.row(r) = hyps[top[r]].features->flat().transpose();
  return scorerForward(*cfg.weights, standardizeFeatures(feats, standardization_degenerate));
}

}  // namespace

EstimateResult estimatePose(const std::vector<PixelCorrespondence>& corrs, const CorrespondenceDescriptors& descs,
                            const Pose& prior, const CameraIntrinsics& ka, const CameraIntrinsics& kb,
                            const EstimatorConfig& cfg) {
  if (cfg.scorer == ScorerKind::Learned && descs.empty()) {
    throw std::invalid_argument("estimatePose: learned scorer needs correspondence descriptors");
  }

  RankedHypotheses ranked = solveAndRank(corrs, ka, kb, cfg);
  auto& hyps = ranked.hypotheses;

  EstimatorDiagnostics diag;
  diag.hypotheses_sampled = cfg.hypothesis_count;
  diag.hypotheses_valid = static_cast<int>(std::count_if(hyps.begin(), hyps.end(), [](const auto& h) { return h.valid; }));
  diag.top_k_used = static_cast<int>(ranked.top.size());

  if (cfg.scorer == ScorerKind::Learned) {
    for (const int idx : ranked.top) {
      hyps[idx].features = hypothesisFeatures(hyps[idx], prior, corrs, descs, ka, kb, cfg);
    }
  }
  const Eigen::VectorXd scores = scoreTopK(hyps, ranked.top, cfg, &diag.standardization_degenerate);

  // Ties resolve to the lower hypothesis index; top is already index-sorted
  // within equal inlier counts, so a strict > keeps the earliest.
  int best_rank = 0;
  for (int r = 1; r < scores.size(); ++r) {
    if (scores[r] > scores[best_rank] ||
        (scores[r] == scores[best_rank] && ranked.top[r] < ranked.top[best_rank])) {
      best_rank = r;
    }
  }
  const Hypothesis& winner = hyps[ranked.top[best_rank]];
  diag.winning_index = ranked.top[best_rank];
  diag.winning_score = scores[best_rank];
  diag.winning_inliers = winner.inlier_count;
  diag.winning_seeds = winner.seeds;

  const auto [count, distances] = countInliers(winner.essential, corrs, ka, kb, cfg.inlier_threshold);
  EstimateResult result;
  result.inlier_mask.resize(corrs.size());
  std::vector<PixelCorrespondence> inliers;
  inliers.reserve(count);
  for (size_t i = 0; i < corrs.size(); ++i) {
    result.inlier_mask[i] = distances[i] < cfg.inlier_threshold;
    if (result.inlier_mask[i]) inliers.push_back(corrs[i]);
  }

  const auto candidates = decomposeEssential(winner.essential);
  result.pose = cheiralitySelect(candidates, inliers.empty() ? corrs : inliers, ka, kb);
  result.diagnostics = diag;
  return result;
}

TrainingGroup collectTrainingGroup(const std::string& pair_id, const std::vector<PixelCorrespondence>& corrs,
                                   const CorrespondenceDescriptors& descs, const Pose& prior, const Pose& truth,
                                   const CameraIntrinsics& ka, const CameraIntrinsics& kb,
                                   const EstimatorConfig& cfg) {
  if (descs.empty()) throw std::invalid_argument("collectTrainingGroup: descriptors are required");
  EstimatorConfig ranking_cfg = cfg;
  ranking_cfg.scorer = ScorerKind::InlierCount;
  ranking_cfg.weights.reset();

  RankedHypotheses ranked = solveAndRank(corrs, ka, kb, ranking_cfg);

  TrainingGroup group;
  group.pair_id = pair_id;
  group.labels.resize(ranked.top.size());
  int width = -1;
  for (size_t r = 0; r < ranked.top.size(); ++r) {
    Hypothesis& hyp = ranked.hypotheses[ranked.top[r]];
    const HypothesisFeatures feats = hypothesisFeatures(hyp, prior, corrs, descs, ka, kb, ranking_cfg);
    const Eigen::VectorXd flat = feats.flat();
    if (width < 0) {
      width = static_cast<int>(flat.size());
      group.features.resize(ranked.top.size(), width);
    }
    group.features.row(r) = flat.transpose();

    double label = 0.0;
    try {
      // A subset is enough to disambiguate the decomposition for labeling.
      const size_t n = std::min<size_t>(corrs.size(), 50);
      const std::vector<PixelCorrespondence> subset(corrs.begin(), corrs.begin() + n);
      const Pose pose = cheiralitySelect(decomposeEssential(hyp.essential), subset, ka, kb);
      const PoseError err = poseError(pose, truth);
      label = labelFromErrors(err.rotation_deg, err.translation_deg);
    } catch (const std::exception&) {
      label = 0.0;  // unrecoverable decomposition scores as a negative
    }
    group.labels[r] = label;
  }
  return group;
}

void writeDiagnostics(std::ostream& out, const EstimatorDiagnostics& diag) {
  out << "hypotheses_sampled: " << diag.hypotheses_sampled << '\n';
  out << "hypotheses_valid: " << diag.hypotheses_valid << '\n';
  out << "top_k_used: " << diag.top_k_used << '\n';
  out << "winning_index: " << diag.winning_index << '\n';
  out << "winning_inliers: " << diag.winning_inliers << '\n';
  out << "winning_seeds:";
  for (const int s : diag.winning_seeds) out << ' ' << s;
  out << '\n';
  out << "winning_score: " << fmtDouble(diag.winning_score) << '\n';
  out << "standardization_degenerate: " << (diag.standardization_degenerate ? 1 : 0) << '\n';
}

void writeCorrespondences(std::ostream& out, const std::vector<PixelCorrespondence>& corrs) {
  for (const auto& c : corrs) {
    out << fmtDouble(c.a.x()) << ' ' << fmtDouble(c.a.y()) << ' ' << fmtDouble(c.b.x()) << ' ' << fmtDouble(c.b.y())
        << ' ' << fmtDouble(c.confidence) << '\n';
  }
}

std::vector<PixelCorrespondence> readCorrespondences(std::istream& in) {
  std::vector<PixelCorrespondence> out;
  PixelCorrespondence c;
  while (in >> c.a.x() >> c.a.y() >> c.b.x() >> c.b.y() >> c.confidence) out.push_back(c);
  return out;
}

}  // namespace priorpose
