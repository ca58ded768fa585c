#include "priorpose/estimator.hpp"

#include <doctest.h>
#include <set>
#include <sstream>

#include "priorpose/rng.hpp"
#include "priorpose/simulator.hpp"
#include "test_helpers.hpp"

using namespace priorpose;
using namespace priorpose::testing;

TEST_CASE("sampling uses all indices when exactly six correspondences exist") {
  EstimatorConfig cfg;
  cfg.hypothesis_count = 20;
  cfg.top_k = 5;
  Rng rng(71);
  const auto hyps = sampleHypotheses(6, cfg, rng);
  REQUIRE(hyps.size() == 20);
  for (const auto& hyp : hyps) {
    std::set<int> unique(hyp.seeds.begin(), hyp.seeds.end());
    CHECK(unique.size() == 6);
    CHECK(*unique.begin() == 0);
    CHECK(*unique.rbegin() == 5);
  }
}

TEST_CASE("sampling is deterministic per seed") {
  EstimatorConfig cfg;
  cfg.hypothesis_count = 50;
  cfg.top_k = 10;
  Rng r1(72), r2(72);
  const auto a = sampleHypotheses(40, cfg, r1);
  const auto b = sampleHypotheses(40, cfg, r2);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].seeds == b[i].seeds);
}

TEST_CASE("sampling covers indices uniformly") {
  EstimatorConfig cfg;
  cfg.hypothesis_count = 10000;
  cfg.top_k = 100;
  Rng rng(73);
  const auto hyps = sampleHypotheses(100, cfg, rng);
  std::vector<int> counts(100, 0);
  for (const auto& hyp : hyps) {
    for (const int s : hyp.seeds) ++counts[s];
  }
  // Each index appears in about N * 6 / 100 = 600 hypotheses.
  for (const int c : counts) {
    CHECK(c > 510);
    CHECK(c < 690);
  }
}

TEST_CASE("sampling requires enough correspondences") {
  EstimatorConfig cfg;
  Rng rng(74);
  CHECK_THROWS_AS(sampleHypotheses(5, cfg, rng), std::invalid_argument);
}

TEST_CASE("inlier histogram reproduces the worked example") {
  const InlierHistogram h = inlierHistogram({0.1, 5.0, 13.0}, 3, 12.6, 64);
  CHECK(h.bins[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));  // delta_1 = 0.196875
  CHECK(h.bins[63] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("inlier histogram is all zeros when nothing is below the threshold") {
  const InlierHistogram h = inlierHistogram({12.6, 20.0, 1e9}, 3, 12.6, 64);
  CHECK(h.bins.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("inlier histogram matches a brute-force counting oracle") {
  Rng rng(75);
  for (int t = 0; t < 200; ++t) {
    const int n = 1 + static_cast<int>(rng.uniformInt(40));
    std::vector<double> distances(n);
    for (double& d : distances) d = rng.uniform(0.0, 20.0);
    const InlierHistogram h = inlierHistogram(distances, n, 12.6, 64);
    for (int k = 1; k <= 64; ++k) {
      const double delta = 12.6 * k / 64.0;
      int count = 0;
      for (const double d : distances) {
        if (d < delta) ++count;
      }
      CHECK(h.bins[k - 1] == static_cast<double>(count) / n);
    }
    for (int k = 1; k < 64; ++k) CHECK(h.bins[k] >= h.bins[k - 1]);
  }
}

TEST_CASE("count_inliers counts everything on exact data and matches sampson") {
  Rng rng(76);
  const CameraIntrinsics k(600.0, 600.0, 360.0, 270.0);
  const Pose pose = randomGentlePose(rng);
  const NormalizedScene scene = randomNormalizedScene(rng, 80, pose);
  const auto corrs = toPixels(scene, k);
  const EssentialMatrix e = EssentialMatrix::fromPose(pose);

  const auto [count, distances] = countInliers(e, corrs, k, k, 12.6);
  CHECK(count == 80);

  const FundamentalMatrix f = fundamentalFromEssential(k, k, e);
  for (size_t i = 0; i < corrs.size(); ++i) {
    CHECK(distances[i] == sampsonDistance(f, corrs[i].a, corrs[i].b));
  }
}

TEST_CASE("an unrelated pose scores near the coincidence floor") {
  Rng rng(77);
  const CameraIntrinsics k(600.0, 600.0, 360.0, 270.0);
  int bad_total = 0, n_total = 0;
  for (int t = 0; t < 10; ++t) {
    const Pose pose = randomGentlePose(rng);
    const NormalizedScene scene = randomNormalizedScene(rng, 100, pose);
    const auto corrs = toPixels(scene, k);
    const Pose unrelated = randomPose(rng);
    const auto [count, distances] = countInliers(EssentialMatrix::fromPose(unrelated), corrs, k, k, 12.6);
    bad_total += count;
    n_total += 100;
  }
  CHECK(bad_total < 0.2 * n_total);
}

TEST_CASE("hypothesis features expose prior consistency") {
  Rng rng(78);
  const CameraIntrinsics k(600.0, 600.0, 360.0, 270.0);
  const Pose pose = randomGentlePose(rng);
  const NormalizedScene scene = randomNormalizedScene(rng, 40, pose);
  const auto corrs = toPixels(scene, k);

  CorrespondenceDescriptors descs;
  descs.a = Eigen::MatrixXd::Zero(40, 4);
  descs.b = Eigen::MatrixXd::Zero(40, 4);
  descs.a.col(0).setOnes();  // e_1 everywhere
  descs.b.col(0).setOnes();

  Hypothesis hyp;
  hyp.seeds = {0, 1, 2, 3, 4, 5};
  hyp.essential = EssentialMatrix::fromPose(pose);
  hyp.valid = true;

  EstimatorConfig cfg;
  const HypothesisFeatures feats = hypothesisFeatures(hyp, pose, corrs, descs, k, k, cfg);
  CHECK(feats.prior_distances.size() == 6);
  CHECK(feats.prior_distances.cwiseAbs().maxCoeff() < 1e-12);

  // identical e_1 descriptors: 1.0 at positions 0 and D, zero elsewhere
  CHECK(feats.descriptor_summary.size() == 8);
  CHECK(feats.descriptor_summary[0] == 1.0);
  CHECK(feats.descriptor_summary[4] == 1.0);
  CHECK(feats.descriptor_summary.sum() == 2.0);

  // A far-off prior separates: mean seed distance far beyond the bin range.
  const Pose far_prior(Eigen::Quaterniond(Eigen::AngleAxisd(radians(90.0), Eigen::Vector3d::UnitY())),
                       pose.translation);
  const HypothesisFeatures far = hypothesisFeatures(hyp, far_prior, corrs, descs, k, k, cfg);
  CHECK(far.prior_distances.mean() > 100.0 * cfg.inlier_threshold);

  const Eigen::VectorXd flat = feats.flat();
  CHECK(flat.size() == 6 + 64 + 8);
  CHECK(flat.head(6) == feats.prior_distances);
  CHECK(flat.tail(8) == feats.descriptor_summary);
}

TEST_CASE("estimate recovers the pose on clean matches with either scorer") {
  Rng rng(79);
  const CameraIntrinsics k(600.0, 600.0, 360.0, 270.0);
  const Pose pose = randomGentlePose(rng);
  const NormalizedScene scene = randomNormalizedScene(rng, 200, pose);
  const auto corrs = toPixels(scene, k);

  CorrespondenceDescriptors descs;
  descs.a.resize(200, 8);
  descs.b.resize(200, 8);
  for (int i = 0; i < 200; ++i) {
    const Eigen::VectorXd d = rng.unitVector(8);
    descs.a.row(i) = d.transpose();
    descs.b.row(i) = d.transpose();
  }

  EstimatorConfig cfg;
  cfg.hypothesis_count = 500;
  cfg.top_k = 50;
  cfg.seed = 5;
  const EstimateResult inlier_result = estimatePose(corrs, descs, pose, k, k, cfg);
  CHECK(poseError(inlier_result.pose, pose).combined_deg < 0.1);
  CHECK(inlier_result.diagnostics.winning_inliers == 200);

  cfg.scorer = ScorerKind::Learned;
  cfg.weights = std::make_shared<ScorerWeights>(
      ScorerWeights::initialized({16, 8, 4}, {6, 8, 4}, {64, 16, 8}, {16, 8, 1}, 11));
  const EstimateResult learned_result = estimatePose(corrs, descs, pose, k, k, cfg);
  CHECK(poseError(learned_result.pose, pose).combined_deg < 0.1);
}

TEST_CASE("estimate is deterministic") {
  Rng rng(80);
  const CameraIntrinsics k(600.0, 600.0, 360.0, 270.0);
  const Pose pose = randomGentlePose(rng);
  const NormalizedScene scene = randomNormalizedScene(rng, 60, pose);
  const auto corrs = toPixels(scene, k);

  EstimatorConfig cfg;
  cfg.hypothesis_count = 200;
  cfg.top_k = 30;
  const EstimateResult a = estimatePose(corrs, {}, pose, k, k, cfg);
  const EstimateResult b = estimatePose(corrs, {}, pose, k, k, cfg);
  CHECK((a.pose.quaternionXyzw() - b.pose.quaternionXyzw()).norm() == 0.0);
  CHECK((a.pose.translation - b.pose.translation).norm() == 0.0);
  CHECK(a.inlier_mask == b.inlier_mask);
  CHECK(a.diagnostics.winning_index == b.diagnostics.winning_index);
}

TEST_CASE("estimate rejects too few correspondences") {
  const CameraIntrinsics k;
  std::vector<PixelCorrespondence> corrs(5);
  EstimatorConfig cfg;
  CHECK_THROWS_AS(estimatePose(corrs, {}, Pose{}, k, k, cfg), std::invalid_argument);
}

TEST_CASE("learned scorer requires descriptors and weights") {
  const CameraIntrinsics k;
  std::vector<PixelCorrespondence> corrs(10);
  EstimatorConfig cfg;
  cfg.scorer = ScorerKind::Learned;
  CHECK_THROWS_AS(estimatePose(corrs, {}, Pose{}, k, k, cfg), std::invalid_argument);
}

TEST_CASE("eight-point estimator mode works end to end") {
  Rng rng(81);
  const CameraIntrinsics k(600.0, 600.0, 360.0, 270.0);
  const Pose pose = randomGentlePose(rng);
  const NormalizedScene scene = randomNormalizedScene(rng, 100, pose);
  const auto corrs = toPixels(scene, k);

  EstimatorConfig cfg;
  cfg.solver = MinimalSolver::EightPoint;
  cfg.hypothesis_count = 200;
  cfg.top_k = 20;
  const EstimateResult result = estimatePose(corrs, {}, pose, k, k, cfg);
  CHECK(poseError(result.pose, pose).combined_deg < 0.1);
}

TEST_CASE("with an exact prior and clean data the winner's seeds are true inliers") {
  SceneConfig scfg;
  scfg.point_count = 150;
  scfg.pixel_noise = 0.0;
  scfg.uniform_outlier_fraction = 0.3;
  scfg.descriptor_dim = 16;
  scfg.seed = 84;
  const SyntheticPair pair = generatePair(scfg);
  const auto corrs = pair.correspondences();

  EstimatorConfig cfg;
  cfg.hypothesis_count = 800;
  cfg.top_k = 80;
  cfg.inlier_threshold = 0.05;  // the calibration floor for noise-free data
  const EstimateResult result = estimatePose(corrs, pair.correspondenceDescriptors(), pair.truth, pair.ka,
                                             pair.kb, cfg);
  CHECK(poseError(result.pose, pair.truth).combined_deg < 1e-9);
  for (const int s : result.diagnostics.winning_seeds) {
    CHECK(pair.labels[s] == MatchLabel::TrueInlier);
  }
  for (int i = 0; i < pair.correspondenceCount(); ++i) {
    if (pair.labels[i] == MatchLabel::TrueInlier) {
      CHECK(result.inlier_mask[i]);
    }
  }
}

TEST_CASE("training group collection labels hypotheses against the truth") {
  SceneConfig scfg;
  scfg.point_count = 80;
  scfg.pixel_noise = 0.4;
  scfg.uniform_outlier_fraction = 0.3;
  scfg.descriptor_dim = 16;
  scfg.seed = 83;
  const SyntheticPair pair = generatePair(scfg);

  EstimatorConfig cfg;
  cfg.hypothesis_count = 300;
  cfg.top_k = 40;
  cfg.inlier_threshold = 2.0;
  const TrainingGroup group = collectTrainingGroup("p0", pair.correspondences(), pair.correspondenceDescriptors(),
                                                   pair.truth, pair.truth, pair.ka, pair.kb, cfg);
  CHECK(group.pair_id == "p0");
  CHECK(group.features.rows() == 40);
  CHECK(group.features.cols() == 6 + 64 + 2 * 16);
  CHECK(group.labels.minCoeff() >= 0.0);
  CHECK(group.labels.maxCoeff() <= 1.0);
  CHECK(group.labels.maxCoeff() > 0.5);  // clean hypotheses exist on this scene
}

TEST_CASE("diagnostics serialize as key-value lines") {
  EstimatorDiagnostics diag;
  diag.hypotheses_sampled = 100;
  diag.winning_score = 42.5;
  std::stringstream ss;
  writeDiagnostics(ss, diag);
  CHECK(ss.str().find("hypotheses_sampled: 100") != std::string::npos);
  CHECK(ss.str().find("winning_score: 42.5") != std::string::npos);
}

TEST_CASE("correspondence files round-trip") {
  std::vector<PixelCorrespondence> corrs(3);
  corrs[0] = {{1.5, 2.5}, {3.25, 4.125}, 0.5};
  corrs[1] = {{-1.0, 0.0}, {0.0, 1.0}, 1.0};
  corrs[2] = {{100.0, 200.0}, {300.0, 400.0}, 0.125};
  std::stringstream ss;
  writeCorrespondences(ss, corrs);
  const auto back = readCorrespondences(ss);
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK((back[i].a - corrs[i].a).norm() == 0.0);
    CHECK((back[i].b - corrs[i].b).norm() == 0.0);
    CHECK(back[i].confidence == corrs[i].confidence);
  }
}
