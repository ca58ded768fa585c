#include "priorpose/simulator.hpp"

#include <doctest.h>
#include <sstream>

#include "priorpose/prior.hpp"
#include "priorpose/rng.hpp"

using namespace priorpose;

namespace {

std::string serializeToString(const Dataset& ds) {
  std::stringstream ss;
  writeDataset(ss, ds);
  return ss.str();
}

Dataset singlePairDataset(const SceneConfig& cfg) {
  Dataset ds;
  ds.base_config = cfg;
  ds.calibrated_threshold = 1.0;
  ds.pairs.push_back(generatePair(cfg));
  return ds;
}

}  // namespace

TEST_CASE("noise-free pairs satisfy the epipolar constraint exactly") {
  SceneConfig cfg;
  cfg.point_count = 60;
  cfg.pixel_noise = 0.0;
  cfg.descriptor_dim = 16;
  cfg.seed = 90;
  const SyntheticPair pair = generatePair(cfg);
  REQUIRE(pair.trueInlierCount() == pair.correspondenceCount());

  const FundamentalMatrix f = fundamentalFromPose(pair.ka, pair.kb, pair.truth);
  for (const auto& c : pair.correspondences()) {
    const Eigen::Vector3d pa(c.a.x(), c.a.y(), 1.0);
    const Eigen::Vector3d pb(c.b.x(), c.b.y(), 1.0);
    CHECK(std::abs(pb.dot(f.m * pa)) < 1e-9);
  }
}

TEST_CASE("generation is deterministic per seed") {
  SceneConfig cfg;
  cfg.point_count = 40;
  cfg.uniform_outlier_fraction = 0.2;
  cfg.coherent_outlier_fraction = 0.2;
  cfg.descriptor_dim = 8;
  cfg.emit_grids = true;
  cfg.grid_depth = 8;
  cfg.seed = 91;

  const std::string a = serializeToString(singlePairDataset(cfg));
  const std::string b = serializeToString(singlePairDataset(cfg));
  CHECK(a == b);

  cfg.seed = 92;
  CHECK(serializeToString(singlePairDataset(cfg)) != a);
}

TEST_CASE("labels partition the correspondence list") {
  SceneConfig cfg;
  cfg.point_count = 100;
  cfg.uniform_outlier_fraction = 0.25;
  cfg.coherent_outlier_fraction = 0.25;
  cfg.coherent_cluster_count = 2;
  cfg.descriptor_dim = 8;
  cfg.seed = 93;
  const SyntheticPair pair = generatePair(cfg);

  int uniform = 0, coherent = 0;
  for (const MatchLabel label : pair.labels) {
    if (label == MatchLabel::UniformOutlier) ++uniform;
    if (label == MatchLabel::CoherentOutlier) ++coherent;
  }
  CHECK(uniform == 25);
  CHECK(coherent == 25);
  CHECK(pair.trueInlierCount() + uniform + coherent == pair.correspondenceCount());

  // B-side indices form a permutation.
  std::vector<bool> seen(pair.correspondenceCount(), false);
  for (const int j : pair.corr_b_index) {
    CHECK(!seen[j]);
    seen[j] = true;
  }
}

TEST_CASE("coherent outliers are self-consistent but inconsistent with the truth") {
  SceneConfig cfg;
  cfg.point_count = 100;
  cfg.coherent_outlier_fraction = 0.4;
  cfg.coherent_cluster_count = 1;
  cfg.pixel_noise = 0.0;
  cfg.descriptor_dim = 8;
  cfg.seed = 94;
  const SyntheticPair pair = generatePair(cfg);
  const auto corrs = pair.correspondences();

  std::vector<Eigen::Vector3d> pa, pb;
  for (int i = 0; i < pair.correspondenceCount(); ++i) {
    if (pair.labels[i] == MatchLabel::CoherentOutlier) {
      pa.emplace_back(corrs[i].a.x(), corrs[i].a.y(), 1.0);
      pb.emplace_back(corrs[i].b.x(), corrs[i].b.y(), 1.0);
    }
  }
  REQUIRE(pa.size() == 40);

  // Independent linear fundamental fit to the cluster (scaled for
  // conditioning); a 2D rigid motion admits an exact epipolar model.
  const double s = 1.0 / 300.0;
  Eigen::MatrixXd a(pa.size(), 9);
  for (size_t i = 0; i < pa.size(); ++i) {
    const Eigen::Vector3d x1 = Eigen::Vector3d(pa[i].x() * s, pa[i].y() * s, 1.0);
    const Eigen::Vector3d x2 = Eigen::Vector3d(pb[i].x() * s, pb[i].y() * s, 1.0);
    a.row(i) << x2.x() * x1.x(), x2.x() * x1.y(), x2.x(), x2.y() * x1.x(), x2.y() * x1.y(), x2.y(), x1.x(),
        x1.y(), 1.0;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 1> fvec = svd.matrixV().col(8);
  Eigen::Matrix3d fit = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(fvec.data());
  const Eigen::Matrix3d scale = Eigen::Vector3d(s, s, 1.0).asDiagonal();
  fit = scale.transpose() * fit * scale;  // back to pixel coordinates

  const FundamentalMatrix truth_f = fundamentalFromPose(pair.ka, pair.kb, pair.truth);
  int self_inliers = 0, truth_inliers = 0;
  for (size_t i = 0; i < pa.size(); ++i) {
    const Eigen::Vector2d qa(pa[i].x(), pa[i].y());
    const Eigen::Vector2d qb(pb[i].x(), pb[i].y());
    if (sampsonDistance(fit, qa, qb) < 12.6) ++self_inliers;
    if (sampsonDistance(truth_f, qa, qb) < 12.6) ++truth_inliers;
  }
  CHECK(self_inliers >= 0.9 * pa.size());
  CHECK(truth_inliers < 0.1 * pa.size());
}

TEST_CASE("truth labels are sound under the calibrated threshold") {
  SceneConfig cfg;
  cfg.point_count = 120;
  cfg.pixel_noise = 0.5;
  cfg.uniform_outlier_fraction = 0.3;
  cfg.descriptor_dim = 8;
  cfg.seed = 95;
  const Dataset ds = generateDataset(cfg, 20);

  long true_below = 0, true_total = 0, outlier_above = 0, outlier_total = 0;
  for (const SyntheticPair& pair : ds.pairs) {
    const FundamentalMatrix f = fundamentalFromPose(pair.ka, pair.kb, pair.truth);
    const auto corrs = pair.correspondences();
    for (int i = 0; i < pair.correspondenceCount(); ++i) {
      const double d = sampsonDistance(f, corrs[i].a, corrs[i].b);
      if (pair.labels[i] == MatchLabel::TrueInlier) {
        ++true_total;
        if (d < ds.calibrated_threshold) ++true_below;
      } else if (pair.labels[i] == MatchLabel::UniformOutlier) {
        ++outlier_total;
        if (d >= ds.calibrated_threshold) ++outlier_above;
      }
    }
  }
  CHECK(static_cast<double>(true_below) / true_total >= 0.99);
  CHECK(static_cast<double>(outlier_above) / outlier_total >= 0.95);
}

TEST_CASE("motion patterns honor their names") {
  SceneConfig cfg;
  cfg.point_count = 30;
  cfg.descriptor_dim = 8;
  cfg.seed = 96;

  cfg.motion = MotionPattern::Forward;
  const SyntheticPair forward = generatePair(cfg);
  CHECK(forward.truth.rotation.angularDistance(Eigen::Quaterniond::Identity()) == 0.0);
  CHECK((forward.truth.translation - Eigen::Vector3d::UnitZ()).norm() == 0.0);

  cfg.motion = MotionPattern::TurnLeft;
  cfg.yaw_degrees = 14.0;
  const SyntheticPair left = generatePair(cfg);
  const Eigen::AngleAxisd aa_left(left.truth.rotation);
  CHECK(degrees(aa_left.angle()) == doctest::Approx(14.0).epsilon(1e-9));
  CHECK(std::abs(std::abs(aa_left.axis().y()) - 1.0) < 1e-12);

  cfg.motion = MotionPattern::TurnRight;
  const SyntheticPair right = generatePair(cfg);
  const Eigen::AngleAxisd aa_right(right.truth.rotation);
  CHECK(degrees(aa_right.angle()) == doctest::Approx(14.0).epsilon(1e-9));
  // Opposite turn directions rotate about opposite axes.
  const double dot = (left.truth.rotation.conjugate() * right.truth.rotation).vec().normalized().y();
  CHECK(std::abs(std::abs(dot) - 1.0) < 1e-9);
}

TEST_CASE("a custom pose pattern is passed through") {
  SceneConfig cfg;
  cfg.point_count = 40;
  cfg.descriptor_dim = 8;
  cfg.motion = MotionPattern::Custom;
  cfg.custom_pose = Pose(Eigen::Quaterniond(Eigen::AngleAxisd(radians(5.0), Eigen::Vector3d::UnitX())),
                         Eigen::Vector3d(0.1, 0.0, 1.0));
  cfg.forward_magnitude = 1.0;
  cfg.seed = 97;
  const SyntheticPair pair = generatePair(cfg);
  CHECK(poseError(pair.truth, cfg.custom_pose).combined_deg < 1e-12);
}

TEST_CASE("an impossible scene raises an error") {
  SceneConfig cfg;
  cfg.point_count = 20;
  cfg.descriptor_dim = 8;
  cfg.motion = MotionPattern::Custom;
  // Rotating the camera fully away leaves no point in front of both views.
  cfg.custom_pose = Pose(Eigen::Quaterniond(Eigen::AngleAxisd(M_PI, Eigen::Vector3d::UnitY())),
                         Eigen::Vector3d(0.0, 0.0, 1.0));
  cfg.forward_magnitude = 1.5;
  cfg.seed = 98;
  CHECK_THROWS_AS(generatePair(cfg), std::runtime_error);
}

TEST_CASE("scene config validation rejects bad fractions and depths") {
  SceneConfig cfg;
  cfg.uniform_outlier_fraction = 0.6;
  cfg.coherent_outlier_fraction = 0.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SceneConfig{};
  cfg.depth_near = 5.0;
  cfg.depth_far = 2.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SceneConfig{};
  cfg.point_count = 7;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("feature grids recover planted matches and have ceil(image/8) cells") {
  SceneConfig cfg;
  cfg.point_count = 300;
  cfg.pixel_noise = 0.0;
  cfg.descriptor_dim = 8;
  cfg.image_width = 330;  // not divisible by 8
  cfg.image_height = 250;
  cfg.intrinsics = CameraIntrinsics(280.0, 280.0, 165.0, 125.0);
  cfg.emit_grids = true;
  cfg.grid_depth = 48;
  cfg.grid_descriptor_noise = 0.0;
  cfg.seed = 99;
  const SyntheticPair pair = generatePair(cfg);

  CHECK(pair.grid_a.width == 42);   // ceil(330 / 8)
  CHECK(pair.grid_a.height == 32);  // ceil(250 / 8)

  const CorrespondenceMap map = correlateGrids(pair.grid_a, pair.grid_b);
  int recovered = 0;
  const int planted = static_cast<int>(pair.planted_corr_indices.size());
  for (const int i : pair.planted_corr_indices) {
    const Eigen::Vector2d a = pair.keypoints_a.positions.row(i).transpose();
    const Eigen::Vector2d b = pair.keypoints_b.positions.row(pair.corr_b_index[i]).transpose();
    const int ca = pair.grid_a.cellIndex(static_cast<int>(a.x() / 8), static_cast<int>(a.y() / 8));
    const int expected_u = static_cast<int>(b.x() / 8);
    const int expected_v = static_cast<int>(b.y() / 8);
    if (map.entries(ca, 2) == expected_u && map.entries(ca, 3) == expected_v) ++recovered;
  }
  CHECK(planted > 200);
  CHECK(static_cast<double>(recovered) / planted >= 0.9);
}

TEST_CASE("all-random grids carry no pose signal") {
  Rng rng(100);
  FeatureGrid ga, gb;
  ga.height = gb.height = 40;
  ga.width = gb.width = 52;
  ga.values.resize(ga.cells(), 16);
  gb.values.resize(gb.cells(), 16);
  for (int i = 0; i < ga.cells(); ++i) ga.values.row(i) = rng.unitVector(16).transpose();
  for (int i = 0; i < gb.cells(); ++i) gb.values.row(i) = rng.unitVector(16).transpose();

  const CorrespondenceMap map = correlateGrids(ga, gb);
  const CameraIntrinsics k(300.0, 300.0, 208.0, 160.0);
  PriorConfig cfg;
  try {
    const Pose pose = coarsePoseFromMap(map, k, k, cfg);
    const Pose forward(Eigen::Quaterniond::Identity(), Eigen::Vector3d::UnitZ());
    CHECK(poseError(pose, forward).combined_deg > 20.0);
  } catch (const std::runtime_error&) {
    CHECK(true);  // no usable cells is an equally valid outcome
  }
}

TEST_CASE("datasets round-trip losslessly") {
  SceneConfig cfg;
  cfg.point_count = 25;
  cfg.uniform_outlier_fraction = 0.2;
  cfg.descriptor_dim = 6;
  cfg.emit_grids = true;
  cfg.grid_depth = 5;
  cfg.seed = 101;
  Dataset ds = generateDataset(cfg, 3);

  const std::string first = serializeToString(ds);
  std::stringstream ss(first);
  const Dataset back = readDataset(ss);
  CHECK(serializeToString(back) == first);
  CHECK(back.pairs.size() == 3);
  CHECK(back.calibrated_threshold == ds.calibrated_threshold);
}

TEST_CASE("an empty dataset file round-trips") {
  Dataset ds;
  ds.calibrated_threshold = 0.5;
  const std::string text = serializeToString(ds);
  std::stringstream ss(text);
  const Dataset back = readDataset(ss);
  CHECK(back.pairs.empty());
}

TEST_CASE("a corrupted label token is reported with its record") {
  SceneConfig cfg;
  cfg.point_count = 12;
  cfg.descriptor_dim = 4;
  cfg.seed = 102;
  std::string text = serializeToString(singlePairDataset(cfg));
  const auto pos = text.find(" T\n");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 3, " X\n");
  std::stringstream ss(text);
  try {
    readDataset(ss);
    FAIL("expected a label parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("label") != std::string::npos);
  }
}

TEST_CASE("scene config JSON echoes every field") {
  SceneConfig cfg;
  cfg.point_count = 123;
  cfg.motion = MotionPattern::TurnRight;
  cfg.yaw_degrees = 7.5;
  cfg.seed = 103;
  const std::string text = sceneConfigToJson(cfg);
  const SceneConfig back = sceneConfigFromJson(text);
  CHECK(back.point_count == 123);
  CHECK(back.motion == MotionPattern::TurnRight);
  CHECK(back.yaw_degrees == 7.5);
  CHECK(back.seed == 103);
  CHECK(sceneConfigToJson(back) == text);

  CHECK_THROWS_AS(sceneConfigFromJson("{ not json"), std::runtime_error);
  CHECK_THROWS_AS(sceneConfigFromJson("{\"motion\": \"sideways\"}"), std::runtime_error);
}

TEST_CASE("match evaluation counts only true pairs as correct") {
  SceneConfig cfg;
  cfg.point_count = 30;
  cfg.uniform_outlier_fraction = 0.2;
  cfg.descriptor_dim = 6;
  cfg.seed = 104;
  const SyntheticPair pair = generatePair(cfg);

  MatchResult matches;
  int true_idx = -1, outlier_idx = -1;
  for (int i = 0; i < pair.correspondenceCount(); ++i) {
    if (pair.labels[i] == MatchLabel::TrueInlier && true_idx < 0) true_idx = i;
    if (pair.labels[i] == MatchLabel::UniformOutlier && outlier_idx < 0) outlier_idx = i;
  }
  matches.push_back({true_idx, pair.corr_b_index[true_idx], 0.9});        // correct
  matches.push_back({outlier_idx, pair.corr_b_index[outlier_idx], 0.9});  // right pair, wrong label
  matches.push_back({true_idx, (pair.corr_b_index[true_idx] + 1) % pair.correspondenceCount(), 0.9});

  const MatchQuality q = evaluateMatches(pair, matches);
  CHECK(q.correct == 1);
  CHECK(q.total_matches == 3);
  CHECK(q.total_true == pair.trueInlierCount());
}
