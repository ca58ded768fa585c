#include "priorpose/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "priorpose/io.hpp"
#include "priorpose/rng.hpp"

namespace priorpose {

namespace {

constexpr std::uint64_t kGridSeedTag = 0x67726964;  // stream tag for grid synthesis

struct DraftCorrespondence {
  Eigen::Vector2d a;
  Eigen::Vector2d b;
  Eigen::VectorXd desc_a;
  Eigen::VectorXd desc_b;
  MatchLabel label;
};

bool insideImage(const Eigen::Vector2d& p, const SceneConfig& cfg) {
  return p.x() >= 0.0 && p.x() < cfg.image_width && p.y() >= 0.0 && p.y() < cfg.image_height;
}

// Relative pose plus the metric translation used for projection.
std::pair<Pose, Eigen::Vector3d> motionPose(const SceneConfig& cfg) {
  switch (cfg.motion) {
    case MotionPattern::Forward: {
      const Eigen::Vector3d t(0.0, 0.0, cfg.forward_magnitude);
      return {Pose::fromRt(Eigen::Matrix3d::Identity(), t), t};
    }
    case MotionPattern::TurnLeft:
    case MotionPattern::TurnRight: {
      const double sign = cfg.motion == MotionPattern::TurnLeft ? 1.0 : -1.0;
      const double chi = sign * radians(cfg.yaw_degrees);
      const double s = cfg.forward_magnitude;
      Eigen::Vector3d t;
      if (std::abs(chi) < 1e-12) {
        t = Eigen::Vector3d(0.0, 0.0, s);
      } else {
        const double r = s / chi;  // arc radius; the chord is the translation
        t = Eigen::Vector3d(r * (std::cos(chi) - 1.0), 0.0, r * std::sin(chi));
      }
      const Eigen::Matrix3d rot = Eigen::AngleAxisd(-chi, Eigen::Vector3d::UnitY()).toRotationMatrix();
      return {Pose::fromRt(rot, t), t};
    }
    case MotionPattern::Custom: {
      const Eigen::Vector3d t = cfg.custom_pose.translation * cfg.forward_magnitude;
      return {cfg.custom_pose, t};
    }
  }
  throw std::logic_error("motionPose: unknown pattern");
}

// sigma perturbs along a random unit direction, so the angular noise does
// not grow with the descriptor dimension.
Eigen::VectorXd noisyDescriptor(const Eigen::VectorXd& base, double sigma, Rng& rng) {
  if (sigma == 0.0) return base;
  Eigen::VectorXd d = base + sigma * rng.unitVector(static_cast<int>(base.size()));
  const double n = d.norm();
  return n > 1e-12 ? Eigen::VectorXd(d / n) : base;
}

}  // namespace

void SceneConfig::validate() const {
  if (point_count < 8) throw std::invalid_argument("SceneConfig: point_count must be >= 8");
  if (!(depth_near > 0.0 && depth_near < depth_far)) {
    throw std::invalid_argument("SceneConfig: require 0 < depth_near < depth_far");
  }
  if (uniform_outlier_fraction < 0.0 || coherent_outlier_fraction < 0.0 ||
      uniform_outlier_fraction > 1.0 || coherent_outlier_fraction > 1.0 ||
      uniform_outlier_fraction + coherent_outlier_fraction > 0.9) {
    throw std::invalid_argument("SceneConfig: outlier fractions must lie in [0,1] and sum to <= 0.9");
  }
  if (pixel_noise < 0.0 || descriptor_noise < 0.0 || grid_descriptor_noise < 0.0) {
    throw std::invalid_argument("SceneConfig: noise levels must be >= 0");
  }
  if (coherent_cluster_count < 1) throw std::invalid_argument("SceneConfig: coherent_cluster_count must be >= 1");
  if (descriptor_dim < 1 || grid_depth < 1) throw std::invalid_argument("SceneConfig: descriptor dims must be >= 1");
  if (image_width < 16 || image_height < 16) throw std::invalid_argument("SceneConfig: image too small");
}

std::vector<PixelCorrespondence> SyntheticPair::correspondences() const {
  std::vector<PixelCorrespondence> out(corr_b_index.size());
  for (size_t i = 0; i < corr_b_index.size(); ++i) {
    out[i].a = keypoints_a.positions.row(static_cast<int>(i)).transpose();
    out[i].b = keypoints_b.positions.row(corr_b_index[i]).transpose();
    out[i].confidence = 1.0;
  }
  return out;
}

CorrespondenceDescriptors SyntheticPair::correspondenceDescriptors() const {
  CorrespondenceDescriptors descs;
  descs.a = keypoints_a.descriptors;
  descs.b.resize(corr_b_index.size(), keypoints_b.descriptors.cols());
  for (size_t i = 0; i < corr_b_index.size(); ++i) {
    descs.b.row(static_cast<int>(i)) = keypoints_b.descriptors.row(corr_b_index[i]);
  }
  return descs;
}

int SyntheticPair::trueInlierCount() const {
  return static_cast<int>(std::count(labels.begin(), labels.end(), MatchLabel::TrueInlier));
}

SyntheticPair generatePair(const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  const auto [truth, t_metric] = motionPose(cfg);
  const Eigen::Matrix3d rot = truth.rotationMatrix();
  const Eigen::Matrix3d k_inv = cfg.intrinsics.inverseMatrix();

  std::vector<DraftCorrespondence> drafts;
  drafts.reserve(cfg.point_count);

  // True scene points, sampled in A's frustum and projected into both views.
  for (int i = 0; i < cfg.point_count; ++i) {
    const double u = rng.uniform(0.0, cfg.image_width);
    const double v = rng.uniform(0.0, cfg.image_height);
    const double depth = rng.uniform(cfg.depth_near, cfg.depth_far);
    const Eigen::Vector3d xa = depth * (k_inv * Eigen::Vector3d(u, v, 1.0));
    const Eigen::Vector3d xb = rot * xa + t_metric;
    if (xb.z() <= 1e-6) continue;

    DraftCorrespondence d;
    d.a = Eigen::Vector2d(u, v) + cfg.pixel_noise * Eigen::Vector2d(rng.normal(), rng.normal());
    d.b = cfg.intrinsics.project(xb) + cfg.pixel_noise * Eigen::Vector2d(rng.normal(), rng.normal());
    if (!insideImage(d.a, cfg) || !insideImage(d.b, cfg)) continue;
    d.label = MatchLabel::TrueInlier;
    drafts.push_back(std::move(d));
  }
  if (drafts.size() < 8) {
    throw std::runtime_error("generatePair: fewer than 8 true inliers survive projection; config too aggressive");
  }

  const int n_uniform = static_cast<int>(std::lround(cfg.uniform_outlier_fraction * cfg.point_count));
  for (int i = 0; i < n_uniform; ++i) {
    DraftCorrespondence d;
    d.a = {rng.uniform(0.0, cfg.image_width), rng.uniform(0.0, cfg.image_height)};
    d.b = {rng.uniform(0.0, cfg.image_width), rng.uniform(0.0, cfg.image_height)};
    d.label = MatchLabel::UniformOutlier;
    drafts.push_back(std::move(d));
  }

  // Coherent clusters: a shared 2D rigid motion per cluster, the signature of
  // a dynamic object that is self-consistent but off the camera epipolar
  // geometry.
  const int n_coherent = static_cast<int>(std::lround(cfg.coherent_outlier_fraction * cfg.point_count));
  const int clusters = std::min(cfg.coherent_cluster_count, std::max(1, n_coherent));
  for (int c = 0; c < clusters && n_coherent > 0; ++c) {
    const int quota = n_coherent / clusters + (c < n_coherent % clusters ? 1 : 0);
    const Eigen::Vector2d center(rng.uniform(0.15, 0.85) * cfg.image_width,
                                 rng.uniform(0.15, 0.85) * cfg.image_height);
    const double phi = radians(rng.uniform(-10.0, 10.0));
    const Eigen::Vector2d shift(rng.uniform(-0.12, 0.12) * cfg.image_width,
                                rng.uniform(-0.12, 0.12) * cfg.image_height);
    Eigen::Matrix2d rot2;
    rot2 << std::cos(phi), -std::sin(phi), std::sin(phi), std::cos(phi);
    const double radius = 0.08 * std::min(cfg.image_width, cfg.image_height);

    for (int i = 0; i < quota; ++i) {
      DraftCorrespondence d;
      do {
        const Eigen::Vector2d offset(rng.uniform(-radius, radius), rng.uniform(-radius, radius));
        d.a = center + offset;
        d.b = rot2 * offset + center + shift;
      } while (!insideImage(d.a, cfg) || !insideImage(d.b, cfg));
      d.label = MatchLabel::CoherentOutlier;
      drafts.push_back(std::move(d));
    }
  }

  // Every pair shares a descriptor up to noise; outliers look as plausible
  // as true matches, only their geometry betrays them.
  for (DraftCorrespondence& d : drafts) {
    const Eigen::VectorXd base = rng.unitVector(cfg.descriptor_dim);
    d.desc_a = noisyDescriptor(base, cfg.descriptor_noise, rng);
    d.desc_b = noisyDescriptor(base, cfg.descriptor_noise, rng);
  }

  // Shuffle the correspondence order, then give B its own keypoint order.
  const int n = static_cast<int>(drafts.size());
  for (int i = n - 1; i > 0; --i) {
    std::swap(drafts[i], drafts[rng.uniformInt(static_cast<std::uint64_t>(i + 1))]);
  }
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int i = n - 1; i > 0; --i) {
    std::swap(perm[i], perm[rng.uniformInt(static_cast<std::uint64_t>(i + 1))]);
  }

  SyntheticPair pair;
  pair.config = cfg;
  pair.truth = truth;
  pair.ka = cfg.intrinsics;
  pair.kb = cfg.intrinsics;
  pair.keypoints_a.positions.resize(n, 2);
  pair.keypoints_a.descriptors.resize(n, cfg.descriptor_dim);
  pair.keypoints_b.positions.resize(n, 2);
  pair.keypoints_b.descriptors.resize(n, cfg.descriptor_dim);
  pair.corr_b_index.resize(n);
  pair.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    pair.keypoints_a.positions.row(i) = drafts[i].a.transpose();
    pair.keypoints_a.descriptors.row(i) = drafts[i].desc_a.transpose();
    pair.keypoints_b.positions.row(perm[i]) = drafts[i].b.transpose();
    pair.keypoints_b.descriptors.row(perm[i]) = drafts[i].desc_b.transpose();
    pair.corr_b_index[i] = perm[i];
    pair.labels[i] = drafts[i].label;
  }

  if (cfg.emit_grids) generateFeatureGrids(pair, cfg.grid_depth, cfg.grid_descriptor_noise);
  return pair;
}

void generateFeatureGrids(SyntheticPair& pair, int depth, double descriptor_noise) {
  const SceneConfig& cfg = pair.config;
  Rng rng(Rng::deriveSeed(cfg.seed, kGridSeedTag));

  auto init_grid = [&](FeatureGrid& g) {
    g.cell_to_pixel = 8.0;
    g.width = static_cast<int>(std::ceil(cfg.image_width / 8.0));
    g.height = static_cast<int>(std::ceil(cfg.image_height / 8.0));
    g.values.resize(g.cells(), depth);
  };
  init_grid(pair.grid_a);
  init_grid(pair.grid_b);

  std::vector<bool> planted_a(pair.grid_a.cells(), false);
  std::vector<bool> planted_b(pair.grid_b.cells(), false);
  pair.planted_corr_indices.clear();

  for (int i = 0; i < pair.correspondenceCount(); ++i) {
    if (pair.labels[i] != MatchLabel::TrueInlier) continue;
    const Eigen::Vector2d pa = pair.keypoints_a.positions.row(i).transpose();
    const Eigen::Vector2d pb = pair.keypoints_b.positions.row(pair.corr_b_index[i]).transpose();
    const int ca = pair.grid_a.cellIndex(static_cast<int>(pa.x() / 8.0), static_cast<int>(pa.y() / 8.0));
    const int cb = pair.grid_b.cellIndex(static_cast<int>(pb.x() / 8.0), static_cast<int>(pb.y() / 8.0));
    if (planted_a[ca] || planted_b[cb]) continue;
    const Eigen::VectorXd base = rng.unitVector(depth);
    pair.grid_a.values.row(ca) = noisyDescriptor(base, descriptor_noise, rng).transpose();
    pair.grid_b.values.row(cb) = noisyDescriptor(base, descriptor_noise, rng).transpose();
    planted_a[ca] = true;
    planted_b[cb] = true;
    pair.planted_corr_indices.push_back(i);
  }

  for (int c = 0; c < pair.grid_a.cells(); ++c) {
    if (!planted_a[c]) pair.grid_a.values.row(c) = rng.unitVector(depth).transpose();
  }
  for (int c = 0; c < pair.grid_b.cells(); ++c) {
    if (!planted_b[c]) pair.grid_b.values.row(c) = rng.unitVector(depth).transpose();
  }
  pair.has_grids = true;
}

Dataset generateDataset(const SceneConfig& base, int pair_count) {
  if (pair_count < 1) throw std::invalid_argument("generateDataset: pair_count must be >= 1");
  Dataset ds;
  ds.base_config = base;
  ds.pairs.reserve(pair_count);

  std::vector<double> inlier_distances;
  for (int i = 0; i < pair_count; ++i) {
    SceneConfig cfg = base;
    cfg.seed = Rng::deriveSeed(base.seed, static_cast<std::uint64_t>(i));
    SyntheticPair pair = generatePair(cfg);

    const FundamentalMatrix f = fundamentalFromPose(pair.ka, pair.kb, pair.truth);
    const auto corrs = pair.correspondences();
    for (int c = 0; c < pair.correspondenceCount(); ++c) {
      if (pair.labels[c] == MatchLabel::TrueInlier) {
        inlier_distances.push_back(sampsonDistance(f, corrs[c].a, corrs[c].b));
      }
    }
    ds.pairs.push_back(std::move(pair));
  }

  std::sort(inlier_distances.begin(), inlier_distances.end());
  // Upper 99th percentile, so at least 99 percent fall strictly below it;
  // the floor keeps the noise-free case usable as an inlier gate.
  const size_t idx = std::min(static_cast<size_t>(std::ceil(0.99 * inlier_distances.size())),
                              inlier_distances.size() - 1);
  ds.calibrated_threshold = std::max(inlier_distances[idx], 0.05);
  return ds;
}

namespace {

const char* labelToken(MatchLabel label) {
  switch (label) {
    case MatchLabel::TrueInlier: return "T";
    case MatchLabel::UniformOutlier: return "U";
    case MatchLabel::CoherentOutlier: return "C";
  }
  throw std::logic_error("labelToken: unknown label");
}

MatchLabel labelFromToken(const std::string& token, int record) {
  if (token == "T") return MatchLabel::TrueInlier;
  if (token == "U") return MatchLabel::UniformOutlier;
  if (token == "C") return MatchLabel::CoherentOutlier;
  throw std::runtime_error("dataset: corrupted label token '" + token + "' in record " + std::to_string(record));
}

void expectTag(std::istream& in, const std::string& tag) {
  std::string got;
  if (!(in >> got) || got != tag) throw std::runtime_error("dataset: expected '" + tag + "' tag");
}

}  // namespace

void writeDataset(std::ostream& out, const Dataset& dataset) {
  out << "priorpose-dataset-v1\n";
  out << "rng " << Rng::kAlgorithm << '\n';
  out << "calibrated_threshold " << fmtDouble(dataset.calibrated_threshold) << '\n';
  out << "config " << sceneConfigToJson(dataset.base_config) << '\n';
  out << "pairs " << dataset.pairs.size() << '\n';
  for (size_t p = 0; p < dataset.pairs.size(); ++p) {
    const SyntheticPair& pair = dataset.pairs[p];
    out << "pair " << p << '\n';
    out << "seed " << pair.config.seed << '\n';
    const Eigen::Vector4d q = pair.truth.quaternionXyzw();
    out << "pose " << fmtDouble(q.x()) << ' ' << fmtDouble(q.y()) << ' ' << fmtDouble(q.z()) << ' '
        << fmtDouble(q.w()) << ' ' << fmtDouble(pair.truth.translation.x()) << ' '
        << fmtDouble(pair.truth.translation.y()) << ' ' << fmtDouble(pair.truth.translation.z()) << '\n';
    out << "intrinsics " << fmtDouble(pair.ka.fx) << ' ' << fmtDouble(pair.ka.fy) << ' ' << fmtDouble(pair.ka.cx)
        << ' ' << fmtDouble(pair.ka.cy) << ' ' << fmtDouble(pair.kb.fx) << ' ' << fmtDouble(pair.kb.fy) << ' '
        << fmtDouble(pair.kb.cx) << ' ' << fmtDouble(pair.kb.cy) << '\n';
    out << "correspondences " << pair.correspondenceCount() << '\n';
    for (int i = 0; i < pair.correspondenceCount(); ++i) {
      out << pair.corr_b_index[i] << ' ' << labelToken(pair.labels[i]) << '\n';
    }
    out << "keypoints_a\n";
    writeKeypointSet(out, pair.keypoints_a);
    out << "keypoints_b\n";
    writeKeypointSet(out, pair.keypoints_b);
    out << "grids " << (pair.has_grids ? 1 : 0) << '\n';
    if (pair.has_grids) {
      out << "planted " << pair.planted_corr_indices.size();
      for (const int idx : pair.planted_corr_indices) out << ' ' << idx;
      out << '\n';
      writeFeatureGrid(out, pair.grid_a);
      writeFeatureGrid(out, pair.grid_b);
    }
    out << "endpair\n";
  }
}

Dataset readDataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "priorpose-dataset-v1") {
    throw std::runtime_error("dataset: missing priorpose-dataset-v1 header");
  }
  Dataset ds;
  std::string rng_name;
  expectTag(in, "rng");
  in >> rng_name;
  if (rng_name != Rng::kAlgorithm) throw std::runtime_error("dataset: unsupported rng '" + rng_name + "'");
  expectTag(in, "calibrated_threshold");
  in >> ds.calibrated_threshold;
  expectTag(in, "config");
  std::getline(in >> std::ws, line);
  ds.base_config = sceneConfigFromJson(line);
  expectTag(in, "pairs");
  size_t count = 0;
  in >> count;

  for (size_t p = 0; p < count; ++p) {
    expectTag(in, "pair");
    size_t index;
    in >> index;
    SyntheticPair pair;
    pair.config = ds.base_config;
    expectTag(in, "seed");
    in >> pair.config.seed;
    expectTag(in, "pose");
    Eigen::Vector4d q;
    Eigen::Vector3d t;
    in >> q.x() >> q.y() >> q.z() >> q.w() >> t.x() >> t.y() >> t.z();
    pair.truth = Pose(Eigen::Quaterniond(q.w(), q.x(), q.y(), q.z()), t);
    expectTag(in, "intrinsics");
    double fa[4], fb[4];
    in >> fa[0] >> fa[1] >> fa[2] >> fa[3] >> fb[0] >> fb[1] >> fb[2] >> fb[3];
    pair.ka = CameraIntrinsics(fa[0], fa[1], fa[2], fa[3]);
    pair.kb = CameraIntrinsics(fb[0], fb[1], fb[2], fb[3]);
    expectTag(in, "correspondences");
    int n = 0;
    in >> n;
    if (!in || n < 0) throw std::runtime_error("dataset: bad correspondence count in pair " + std::to_string(index));
    pair.corr_b_index.resize(n);
    pair.labels.resize(n);
    for (int i = 0; i < n; ++i) {
      std::string token;
      if (!(in >> pair.corr_b_index[i] >> token)) {
        throw std::runtime_error("dataset: truncated correspondence record " + std::to_string(i));
      }
      pair.labels[i] = labelFromToken(token, i);
    }
    expectTag(in, "keypoints_a");
    pair.keypoints_a = readKeypointSet(in);
    expectTag(in, "keypoints_b");
    pair.keypoints_b = readKeypointSet(in);
    expectTag(in, "grids");
    int has_grids = 0;
    in >> has_grids;
    pair.has_grids = has_grids != 0;
    if (pair.has_grids) {
      expectTag(in, "planted");
      size_t planted = 0;
      in >> planted;
      pair.planted_corr_indices.resize(planted);
      for (int& idx : pair.planted_corr_indices) in >> idx;
      pair.grid_a = readFeatureGrid(in);
      pair.grid_b = readFeatureGrid(in);
    }
    expectTag(in, "endpair");
    ds.pairs.push_back(std::move(pair));
  }
  return ds;
}

void writeDatasetFile(const std::string& path, const Dataset& dataset) {
  std::ofstream out = openOutput(path);
  writeDataset(out, dataset);
  if (!out) throw std::runtime_error("failed writing dataset to " + path);
}

Dataset readDatasetFile(const std::string& path) {
  std::ifstream in = openInput(path);
  return readDataset(in);
}

std::string sceneConfigToJson(const SceneConfig& cfg) {
  nlohmann::json j;
  j["point_count"] = cfg.point_count;
  j["depth_near"] = cfg.depth_near;
  j["depth_far"] = cfg.depth_far;
  switch (cfg.motion) {
    case MotionPattern::Forward: j["motion"] = "forward"; break;
    case MotionPattern::TurnLeft: j["motion"] = "turn-left"; break;
    case MotionPattern::TurnRight: j["motion"] = "turn-right"; break;
    case MotionPattern::Custom: j["motion"] = "custom"; break;
  }
  j["forward_magnitude"] = cfg.forward_magnitude;
  j["yaw_degrees"] = cfg.yaw_degrees;
  if (cfg.motion == MotionPattern::Custom) {
    const Eigen::Vector4d q = cfg.custom_pose.quaternionXyzw();
    j["custom_pose"] = {q.x(), q.y(), q.z(), q.w(), cfg.custom_pose.translation.x(),
                        cfg.custom_pose.translation.y(), cfg.custom_pose.translation.z()};
  }
  j["pixel_noise"] = cfg.pixel_noise;
  j["uniform_outlier_fraction"] = cfg.uniform_outlier_fraction;
  j["coherent_outlier_fraction"] = cfg.coherent_outlier_fraction;
  j["coherent_cluster_count"] = cfg.coherent_cluster_count;
  j["descriptor_dim"] = cfg.descriptor_dim;
  j["descriptor_noise"] = cfg.descriptor_noise;
  j["image_width"] = cfg.image_width;
  j["image_height"] = cfg.image_height;
  j["intrinsics"] = {cfg.intrinsics.fx, cfg.intrinsics.fy, cfg.intrinsics.cx, cfg.intrinsics.cy};
  j["seed"] = cfg.seed;
  j["emit_grids"] = cfg.emit_grids;
  j["grid_depth"] = cfg.grid_depth;
  j["grid_descriptor_noise"] = cfg.grid_descriptor_noise;
  return j.dump();
}

SceneConfig sceneConfigFromJson(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("scene config: invalid JSON: ") + e.what());
  }
  SceneConfig cfg;
  cfg.point_count = j.value("point_count", cfg.point_count);
  cfg.depth_near = j.value("depth_near", cfg.depth_near);
  cfg.depth_far = j.value("depth_far", cfg.depth_far);
  const std::string motion = j.value("motion", std::string("forward"));
  if (motion == "forward") cfg.motion = MotionPattern::Forward;
  else if (motion == "turn-left") cfg.motion = MotionPattern::TurnLeft;
  else if (motion == "turn-right") cfg.motion = MotionPattern::TurnRight;
  else if (motion == "custom") cfg.motion = MotionPattern::Custom;
  else throw std::runtime_error("scene config: unknown motion '" + motion + "'");
  cfg.forward_magnitude = j.value("forward_magnitude", cfg.forward_magnitude);
  cfg.yaw_degrees = j.value("yaw_degrees", cfg.yaw_degrees);
  if (j.contains("custom_pose")) {
    const auto v = j["custom_pose"];
    if (!v.is_array() || v.size() != 7) throw std::runtime_error("scene config: custom_pose needs 7 numbers");
    cfg.custom_pose = Pose(Eigen::Quaterniond(v[3], v[0], v[1], v[2]), Eigen::Vector3d(v[4], v[5], v[6]));
  }
  cfg.pixel_noise = j.value("pixel_noise", cfg.pixel_noise);
  cfg.uniform_outlier_fraction = j.value("uniform_outlier_fraction", cfg.uniform_outlier_fraction);
  cfg.coherent_outlier_fraction = j.value("coherent_outlier_fraction", cfg.coherent_outlier_fraction);
  cfg.coherent_cluster_count = j.value("coherent_cluster_count", cfg.coherent_cluster_count);
  cfg.descriptor_dim = j.value("descriptor_dim", cfg.descriptor_dim);
  cfg.descriptor_noise = j.value("descriptor_noise", cfg.descriptor_noise);
  cfg.image_width = j.value("image_width", cfg.image_width);
  cfg.image_height = j.value("image_height", cfg.image_height);
  if (j.contains("intrinsics")) {
    const auto v = j["intrinsics"];
    if (!v.is_array() || v.size() != 4) throw std::runtime_error("scene config: intrinsics needs 4 numbers");
    cfg.intrinsics = CameraIntrinsics(v[0], v[1], v[2], v[3]);
  }
  cfg.seed = j.value("seed", cfg.seed);
  cfg.emit_grids = j.value("emit_grids", cfg.emit_grids);
  cfg.grid_depth = j.value("grid_depth", cfg.grid_depth);
  cfg.grid_descriptor_noise = j.value("grid_descriptor_noise", cfg.grid_descriptor_noise);
  cfg.validate();
  return cfg;
}

MatchQuality evaluateMatches(const SyntheticPair& pair, const MatchResult& matches) {
  MatchQuality q;
  q.total_matches = static_cast<int>(matches.size());
  q.total_true = pair.trueInlierCount();
  for (const Match& m : matches) {
    if (m.index_a < 0 || m.index_a >= pair.correspondenceCount()) continue;
    if (pair.labels[m.index_a] == MatchLabel::TrueInlier && pair.corr_b_index[m.index_a] == m.index_b) ++q.correct;
  }
  return q;
}

}  // namespace priorpose
