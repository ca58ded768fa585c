#include "priorpose/scorer.hpp"

#include <doctest.h>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "priorpose/prior.hpp"
#include "priorpose/rng.hpp"
#include "priorpose/simulator.hpp"

using namespace priorpose;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() / ("priorpose_scorer_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

ScorerWeights smallRandomScorer(std::uint64_t seed) {
  return ScorerWeights::initialized({3, 4, 2}, {2, 3, 2}, {4, 3, 3}, {7, 5, 1}, seed);
}

Eigen::MatrixXd randomFeatures(Rng& rng, int rows, int cols, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

// Smallest pre-activation magnitude across the network; finite differences
// across a ReLU kink would poison the comparison.
double minPreactivation(const ScorerWeights& w, const Eigen::MatrixXd& feats) {
  double min_abs = std::numeric_limits<double>::infinity();
  auto track = [&](const Mlp& mlp, Eigen::MatrixXd x, bool relu_last) {
    for (size_t l = 0; l < mlp.size(); ++l) {
      Eigen::MatrixXd z = (x * mlp[l].weights.transpose()).rowwise() + mlp[l].bias.transpose();
      min_abs = std::min(min_abs, z.cwiseAbs().minCoeff());
      if (relu_last || l + 1 < mlp.size()) z = z.cwiseMax(0.0);
      x = std::move(z);
    }
    return x;
  };
  const FeatureLayout layout = w.layout();
  const Eigen::MatrixXd ad = track(w.descriptor, feats.rightCols(layout.descriptor_dim), true);
  const Eigen::MatrixXd ap = track(w.prior, feats.leftCols(layout.prior_dim), true);
  const Eigen::MatrixXd ai = track(w.inlier, feats.middleCols(layout.prior_dim, layout.inlier_dim), true);
  Eigen::MatrixXd merged(feats.rows(), ad.cols() + ap.cols() + ai.cols());
  merged << ad, ap, ai;
  track(w.head, merged, false);
  return min_abs;
}

}  // namespace

TEST_CASE("label mapping matches the linear ramp") {
  CHECK(labelFromErrors(0.0, 0.0) == 1.0);
  CHECK(labelFromErrors(4.0, 16.0) == 0.5);
  CHECK(labelFromErrors(30.0, 30.0) == 0.0);
  CHECK(labelFromErrors(10.0, 10.0) == 0.5);
  CHECK(labelFromErrors(21.0, 21.0) == 0.0);
  CHECK_THROWS_AS(labelFromErrors(-1.0, 0.0), std::invalid_argument);
}

TEST_CASE("standardize centers and scales per column") {
  Eigen::MatrixXd feats(2, 2);
  feats << 0.0, 3.0, 2.0, 3.0;
  const Eigen::MatrixXd out = standardizeFeatures(feats);
  CHECK(out(0, 0) == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(out(1, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(out(0, 1) == 0.0);  // constant column collapses to zero
  CHECK(out(1, 1) == 0.0);
}

TEST_CASE("standardized columns have zero mean and unit deviation") {
  Rng rng(61);
  const Eigen::MatrixXd feats = randomFeatures(rng, 40, 7, 3.0);
  const Eigen::MatrixXd out = standardizeFeatures(feats);
  for (int c = 0; c < out.cols(); ++c) {
    CHECK(std::abs(out.col(c).mean()) < 1e-9);
    const double stddev = std::sqrt(out.col(c).squaredNorm() / out.rows() - std::pow(out.col(c).mean(), 2));
    CHECK(stddev == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("standardize is idempotent up to the epsilon guard") {
  Rng rng(62);
  const Eigen::MatrixXd once = standardizeFeatures(randomFeatures(rng, 30, 5));
  const Eigen::MatrixXd twice = standardizeFeatures(once);
  CHECK((once - twice).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("standardize flags single-row batches and only subtracts the mean") {
  Eigen::MatrixXd feats(1, 3);
  feats << 5.0, -2.0, 0.5;
  bool degenerate = false;
  const Eigen::MatrixXd out = standardizeFeatures(feats, &degenerate);
  CHECK(degenerate);
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("all-zero weights score exactly one half") {
  const ScorerWeights w = ScorerWeights::zeros();
  const Eigen::VectorXd feats = Eigen::VectorXd::Constant(w.layout().total(), 0.7);
  CHECK(scorerForward(w, feats) == 0.5);
}

TEST_CASE("a one-neuron-per-branch network matches hand arithmetic") {
  ScorerWeights w = ScorerWeights::zeros({1, 1}, {1, 1}, {1, 1}, {3, 1});
  w.descriptor[0].weights(0, 0) = 0.5;
  w.descriptor[0].bias(0) = 0.1;
  w.prior[0].weights(0, 0) = -0.3;
  w.prior[0].bias(0) = 0.2;
  w.inlier[0].weights(0, 0) = 2.0;
  w.head[0].weights << 1.0, -1.0, 0.5;
  w.head[0].bias(0) = -0.05;

  // layout: [prior, inlier, descriptor]
  Eigen::VectorXd feats(3);
  feats << 0.4, -0.6, 0.8;
  // branches: desc relu(0.5*0.8+0.1)=0.5, prior relu(-0.3*0.4+0.2)=0.08, inlier relu(-1.2)=0
  const double logit = 1.0 * 0.5 - 1.0 * 0.08 + 0.5 * 0.0 - 0.05;
  const double expected = 1.0 / (1.0 + std::exp(-logit));
  CHECK(scorerForward(w, feats) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("scores stay inside (0,1) for large inputs") {
  Rng rng(63);
  const ScorerWeights w = smallRandomScorer(7);
  for (int i = 0; i < 50; ++i) {
    const Eigen::MatrixXd feats = randomFeatures(rng, 1, w.layout().total(), 1e3);
    const double score = scorerForward(w, Eigen::VectorXd(feats.row(0).transpose()));
    CHECK(std::isfinite(score));
    CHECK(score > 0.0);
    CHECK(score < 1.0);
  }
}

TEST_CASE("forward does not mutate the weights") {
  Rng rng(64);
  const ScorerWeights w = smallRandomScorer(8);
  const Eigen::MatrixXd snapshot = w.head[0].weights;
  scorerForward(w, randomFeatures(rng, 5, w.layout().total()));
  CHECK((w.head[0].weights - snapshot).norm() == 0.0);
}

TEST_CASE("bce loss evaluates the formula") {
  CHECK(bceLoss(0.5, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bceLoss(0.999999, 1.0) < 1.1e-6);
  CHECK_THROWS_AS(bceLoss(0.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(bceLoss(0.5, 1.5), std::invalid_argument);
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(65);
  const double step = 1e-5;
  int checked_triples = 0;
  std::uint64_t attempt = 0;
  while (checked_triples < 50) {
    const ScorerWeights w = smallRandomScorer(1000 + attempt);
    Eigen::MatrixXd feats = randomFeatures(rng, 3, 9);
    Eigen::VectorXd labels(3);
    labels << rng.uniform(), rng.uniform(), rng.uniform();
    ++attempt;
    // Keep finite differences away from ReLU kinks.
    if (minPreactivation(w, feats) < 1e-3) continue;

    const LossAndGradients lg = scorerLossAndGradients(w, feats, labels);

    auto check_net = [&](const Mlp& net, const Mlp& grads, auto mutate) {
      for (size_t l = 0; l < net.size(); ++l) {
        for (int r = 0; r < net[l].weights.rows(); ++r) {
          for (int c = 0; c < net[l].weights.cols() + 1; ++c) {
            const bool is_bias = c == net[l].weights.cols();
            ScorerWeights plus = w;
            ScorerWeights minus = w;
            if (is_bias) {
              mutate(plus)[l].bias(r) += step;
              mutate(minus)[l].bias(r) -= step;
            } else {
              mutate(plus)[l].weights(r, c) += step;
              mutate(minus)[l].weights(r, c) -= step;
            }
            const double fd = (scorerLossAndGradients(plus, feats, labels).loss -
                               scorerLossAndGradients(minus, feats, labels).loss) /
                              (2.0 * step);
            const double analytic = is_bias ? grads[l].bias(r) : grads[l].weights(r, c);
            const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-6});
            CHECK(std::abs(fd - analytic) / denom < 1e-4);
          }
        }
      }
    };
    check_net(w.descriptor, lg.gradients.descriptor, [](ScorerWeights& s) -> Mlp& { return s.descriptor; });
    check_net(w.prior, lg.gradients.prior, [](ScorerWeights& s) -> Mlp& { return s.prior; });
    check_net(w.inlier, lg.gradients.inlier, [](ScorerWeights& s) -> Mlp& { return s.inlier; });
    check_net(w.head, lg.gradients.head, [](ScorerWeights& s) -> Mlp& { return s.head; });
    ++checked_triples;
  }
  CHECK(checked_triples == 50);
}

namespace {

std::vector<TrainingGroup> separableDataset(int groups, int per_group, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrainingGroup> out;
  for (int g = 0; g < groups; ++g) {
    TrainingGroup group;
    group.pair_id = "g" + std::to_string(g);
    group.features = randomFeatures(rng, per_group, 9);
    group.labels.resize(per_group);
    for (int i = 0; i < per_group; ++i) {
      // A margin on the deciding feature keeps the classes cleanly apart.
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      group.features(i, 0) = sign * rng.uniform(0.5, 2.0);
      group.labels[i] = sign > 0.0 ? 1.0 : 0.0;
    }
    out.push_back(std::move(group));
  }
  return out;
}

}  // namespace

TEST_CASE("training separates a linearly separable dataset") {
  const auto groups = separableDataset(200, 40, 66);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.seed = 3;
  const ScorerWeights init = ScorerWeights::initialized({3, 4, 2}, {2, 3, 2}, {4, 3, 3}, {7, 5, 1}, cfg.seed);
  const TrainResult result = trainScorer(groups, cfg, init);
  CHECK(result.loss_curve.back() < 0.1);
  CHECK(result.loss_curve.back() <= result.loss_curve.front());
  for (const double loss : result.loss_curve) CHECK(std::isfinite(loss));
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto groups = separableDataset(5, 20, 67);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 5;
  const ScorerWeights init = ScorerWeights::initialized({3, 4, 2}, {2, 3, 2}, {4, 3, 3}, {7, 5, 1}, cfg.seed);
  const TrainResult a = trainScorer(groups, cfg, init);
  const TrainResult b = trainScorer(groups, cfg, init);
  CHECK((a.weights.head[0].weights - b.weights.head[0].weights).norm() == 0.0);
  CHECK((a.weights.descriptor[1].weights - b.weights.descriptor[1].weights).norm() == 0.0);
  CHECK(a.loss_curve == b.loss_curve);
}

TEST_CASE("training rejects an empty dataset") {
  TrainConfig cfg;
  CHECK_THROWS_AS(trainScorer({}, cfg), std::invalid_argument);
}

TEST_CASE("weights save and load bit-for-bit") {
  TempDir tmp;
  const ScorerWeights w = ScorerWeights::initialized(99);
  const std::string path = tmp.file("weights.bin");
  saveWeights(path, w);
  const ScorerWeights back = loadWeights(path);

  auto compare = [](const Mlp& a, const Mlp& b) {
    REQUIRE(a.size() == b.size());
    for (size_t l = 0; l < a.size(); ++l) {
      CHECK((a[l].weights - b[l].weights).norm() == 0.0);
      CHECK((a[l].bias - b[l].bias).norm() == 0.0);
    }
  };
  compare(w.descriptor, back.descriptor);
  compare(w.prior, back.prior);
  compare(w.inlier, back.inlier);
  compare(w.head, back.head);
}

TEST_CASE("weight loading rejects truncated files") {
  TempDir tmp;
  const std::string path = tmp.file("weights.bin");
  saveWeights(path, ScorerWeights::initialized(3));

  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 64);
  CHECK_THROWS_AS(loadWeights(path), std::runtime_error);
}

TEST_CASE("weight loading rejects a broken dimension chain") {
  TempDir tmp;
  const std::string path = tmp.file("weights.bin");
  saveWeights(path, ScorerWeights::initialized(4));

  // Corrupt the head input width in the text header.
  std::ifstream in(path, std::ios::binary);
  std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const std::string needle = "head 7 256";
  const auto pos = contents.find(needle);
  REQUIRE(pos != std::string::npos);
  contents.replace(pos, needle.size(), "head 7 255");
  std::ofstream out(path, std::ios::binary);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  out.close();

  try {
    loadWeights(path);
    FAIL("expected a dimension-chain error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("head") != std::string::npos);
  }
}

TEST_CASE("training group files round-trip") {
  TempDir tmp;
  Rng rng(68);
  std::vector<TrainingGroup> groups;
  for (int g = 0; g < 3; ++g) {
    TrainingGroup group;
    group.pair_id = "pair" + std::to_string(g);
    group.features = randomFeatures(rng, 4, 6);
    group.labels = Eigen::VectorXd::Zero(4);
    for (int i = 0; i < 4; ++i) group.labels[i] = rng.uniform();
    groups.push_back(std::move(group));
  }
  const std::string path = tmp.file("train.txt");
  writeTrainingGroups(path, groups);
  const auto back = readTrainingGroups(path);
  REQUIRE(back.size() == 3);
  for (size_t g = 0; g < 3; ++g) {
    CHECK(back[g].pair_id == groups[g].pair_id);
    CHECK((back[g].features - groups[g].features).norm() == 0.0);
    CHECK((back[g].labels - groups[g].labels).norm() == 0.0);
  }
}

TEST_CASE("default architecture matches the published dimensions") {
  const ScorerWeights w = ScorerWeights::zeros();
  CHECK(w.descriptor.front().weights.cols() == 512);
  CHECK(w.descriptor.back().weights.rows() == 64);
  CHECK(w.prior.front().weights.cols() == 6);
  CHECK(w.prior.back().weights.rows() == 64);
  CHECK(w.inlier.front().weights.cols() == 64);
  CHECK(w.inlier.back().weights.rows() == 128);
  CHECK(w.head.front().weights.cols() == 256);
  CHECK(w.head.back().weights.rows() == 1);
  CHECK(w.layout().total() == 582);
}
