#include "priorpose/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "priorpose/io.hpp"
#include "priorpose/rng.hpp"

namespace priorpose {

namespace {

constexpr double kScoreEps = 1e-12;

const std::vector<int> kDescriptorDims = {512, 256, 128, 64};
const std::vector<int> kPriorDims = {6, 16, 32, 64};
const std::vector<int> kInlierDims = {64, 64, 128, 128};
const std::vector<int> kHeadDims = {256, 256, 128, 64, 32, 16, 1};

Mlp makeMlp(const std::vector<int>& dims) {
  if (dims.size() < 2) throw std::invalid_argument("ScorerWeights: a net needs at least two dimensions");
  Mlp mlp;
  for (size_t i = 1; i < dims.size(); ++i) {
    MlpLayer layer;
    layer.weights = Eigen::MatrixXd::Zero(dims[i], dims[i - 1]);
    layer.bias = Eigen::VectorXd::Zero(dims[i]);
    mlp.push_back(std::move(layer));
  }
  return mlp;
}

void initMlp(Mlp& mlp, Rng& rng) {
  for (MlpLayer& layer : mlp) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.weights.rows() + layer.weights.cols()));
    for (int r = 0; r < layer.weights.rows(); ++r) {
      for (int c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = rng.uniform(-bound, bound);
    }
    layer.bias.setZero();
  }
}

double stableSigmoid(double z) {
  double s;
  if (z >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    s = e / (1.0 + e);
  }
  return std::clamp(s, kScoreEps, 1.0 - kScoreEps);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

struct MlpCache {
  std::vector<Eigen::MatrixXd> inputs;   // activation entering each layer
  std::vector<Eigen::MatrixXd> preacts;  // z = x W^T + b per layer
};

// relu_last: branches squash every layer, the head leaves its final unit linear.
Eigen::MatrixXd runMlp(const Mlp& mlp, const Eigen::MatrixXd& x, bool relu_last, MlpCache* cache) {
  Eigen::MatrixXd a = x;
  for (size_t l = 0; l < mlp.size(); ++l) {
    if (cache) cache->inputs.push_back(a);
    Eigen::MatrixXd z = (a * mlp[l].weights.transpose()).rowwise() + mlp[l].bias.transpose();
    if (cache) cache->preacts.push_back(z);
    if (relu_last || l + 1 < mlp.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

// Returns the gradient w.r.t. the Mlp input; fills grads (same shapes as mlp).
Eigen::MatrixXd backpropMlp(const Mlp& mlp, const MlpCache& cache, Eigen::MatrixXd d_out, bool relu_last,
                            Mlp& grads) {
  for (int l = static_cast<int>(mlp.size()) - 1; l >= 0; --l) {
    if (relu_last || l + 1 < static_cast<int>(mlp.size())) {
      d_out = d_out.cwiseProduct((cache.preacts[l].array() > 0.0).cast<double>().matrix());
    }
    grads[l].weights = d_out.transpose() * cache.inputs[l];
    grads[l].bias = d_out.colwise().sum().transpose();
    d_out = d_out * mlp[l].weights;
  }
  return d_out;  // gradient w.r.t. the net input
}

struct ScorerCache {
  MlpCache descriptor, prior, inlier, head;
  Eigen::VectorXd logits;
};

Eigen::VectorXd forwardLogits(const ScorerWeights& w, const Eigen::MatrixXd& features, ScorerCache* cache) {
  const FeatureLayout layout = w.layout();
  if (features.cols() != layout.total()) {
    throw std::invalid_argument("scorerForward: feature width " + std::to_string(features.cols()) +
                                " does not match the network input " + std::to_string(layout.total()));
  }
  const Eigen::MatrixXd fp = features.leftCols(layout.prior_dim);
  const Eigen::MatrixXd fi = features.middleCols(layout.prior_dim, layout.inlier_dim);
  const Eigen::MatrixXd fd = features.rightCols(layout.descriptor_dim);

  const Eigen::MatrixXd ad = runMlp(w.descriptor, fd, true, cache ? &cache->descriptor : nullptr);
  const Eigen::MatrixXd ap = runMlp(w.prior, fp, true, cache ? &cache->prior : nullptr);
  const Eigen::MatrixXd ai = runMlp(w.inlier, fi, true, cache ? &cache->inlier : nullptr);

  Eigen::MatrixXd merged(features.rows(), ad.cols() + ap.cols() + ai.cols());
  merged << ad, ap, ai;

  const Eigen::MatrixXd out = runMlp(w.head, merged, false, cache ? &cache->head : nullptr);
  Eigen::VectorXd logits = out.col(0);
  if (cache) cache->logits = logits;
  return logits;
}

}  // namespace

ScorerWeights ScorerWeights::zeros() { return zeros(kDescriptorDims, kPriorDims, kInlierDims, kHeadDims); }

ScorerWeights ScorerWeights::zeros(const std::vector<int>& descriptor_dims, const std::vector<int>& prior_dims,
                                   const std::vector<int>& inlier_dims, const std::vector<int>& head_dims) {
  ScorerWeights w;
  w.descriptor = makeMlp(descriptor_dims);
  w.prior = makeMlp(prior_dims);
  w.inlier = makeMlp(inlier_dims);
  w.head = makeMlp(head_dims);
  w.validate();
  return w;
}

ScorerWeights ScorerWeights::initialized(std::uint64_t seed) {
  return initialized(kDescriptorDims, kPriorDims, kInlierDims, kHeadDims, seed);
}

ScorerWeights ScorerWeights::initialized(const std::vector<int>& descriptor_dims, const std::vector<int>& prior_dims,
                                         const std::vector<int>& inlier_dims, const std::vector<int>& head_dims,
                                         std::uint64_t seed) {
  ScorerWeights w = zeros(descriptor_dims, prior_dims, inlier_dims, head_dims);
  Rng rng(seed);
  initMlp(w.descriptor, rng);
  initMlp(w.prior, rng);
  initMlp(w.inlier, rng);
  initMlp(w.head, rng);
  return w;
}

FeatureLayout ScorerWeights::layout() const {
  FeatureLayout layout;
  layout.descriptor_dim = static_cast<int>(descriptor.front().weights.cols());
  layout.prior_dim = static_cast<int>(prior.front().weights.cols());
  layout.inlier_dim = static_cast<int>(inlier.front().weights.cols());
  return layout;
}

void ScorerWeights::validate() const {
  auto check_chain = [](const Mlp& mlp, const std::string& name) {
    if (mlp.empty()) throw std::invalid_argument("ScorerWeights: " + name + " net is empty");
    for (size_t l = 0; l < mlp.size(); ++l) {
      if (mlp[l].bias.size() != mlp[l].weights.rows()) {
        throw std::invalid_argument("ScorerWeights: bias size mismatch in " + name + " layer " + std::to_string(l));
      }
      if (l > 0 && mlp[l].weights.cols() != mlp[l - 1].weights.rows()) {
        throw std::invalid_argument("ScorerWeights: dimension chain broken in " + name + " layer " +
                                    std::to_string(l));
      }
    }
  };
  check_chain(descriptor, "descriptor");
  check_chain(prior, "prior");
  check_chain(inlier, "inlier");
  check_chain(head, "head");

  const auto branch_out = descriptor.back().weights.rows() + prior.back().weights.rows() + inlier.back().weights.rows();
  if (head.front().weights.cols() != branch_out) {
    throw std::invalid_argument("ScorerWeights: head input " + std::to_string(head.front().weights.cols()) +
                                " does not equal the concatenated branch output " + std::to_string(branch_out));
  }
  if (head.back().weights.rows() != 1) {
    throw std::invalid_argument("ScorerWeights: head must end in a single score unit");
  }
}

double labelFromErrors(double rotation_err_deg, double translation_err_deg) {
  if (rotation_err_deg < 0.0 || translation_err_deg < 0.0) {
    throw std::invalid_argument("labelFromErrors: errors must be >= 0");
  }
  const double mean = 0.5 * (rotation_err_deg + translation_err_deg);
  return std::clamp(1.0 - mean / 20.0, 0.0, 1.0);
}

Eigen::MatrixXd standardizeFeatures(const Eigen::MatrixXd& features, bool* degenerate) {
  const auto k = features.rows();
  if (k == 0) throw std::invalid_argument("standardizeFeatures: empty feature set");
  Eigen::MatrixXd out = features.rowwise() - features.colwise().mean();
  if (k < 2) {
    if (degenerate) *degenerate = true;
    return out;
  }
  if (degenerate) *degenerate = false;
  const Eigen::ArrayXd stddev = (out.array().square().colwise().sum() / static_cast<double>(k)).sqrt();
  out.array().rowwise() /= (stddev.transpose() + 1e-6);
  return out;
}

Eigen::VectorXd scorerForward(const ScorerWeights& weights, const Eigen::MatrixXd& features) {
  const Eigen::VectorXd logits = forwardLogits(weights, features, nullptr);
  Eigen::VectorXd scores(logits.size());
  for (int i = 0; i < logits.size(); ++i) scores[i] = stableSigmoid(logits[i]);
  return scores;
}

double scorerForward(const ScorerWeights& weights, const Eigen::VectorXd& features) {
  return scorerForward(weights, Eigen::MatrixXd(features.transpose()))[0];
}

double bceLoss(double score, double label) {
  if (!(score > 0.0 && score < 1.0)) throw std::invalid_argument("bceLoss: score must be in (0, 1)");
  if (!(label >= 0.0 && label <= 1.0)) throw std::invalid_argument("bceLoss: label must be in [0, 1]");
  return -(label * std::log(score) + (1.0 - label) * std::log(1.0 - score));
}

LossAndGradients scorerLossAndGradients(const ScorerWeights& weights, const Eigen::MatrixXd& features,
                                        const Eigen::VectorXd& labels) {
  if (features.rows() != labels.size()) {
    throw std::invalid_argument("scorerLossAndGradients: feature/label count mismatch");
  }
  const auto k = features.rows();
  ScorerCache cache;
  const Eigen::VectorXd logits = forwardLogits(weights, features, &cache);

  // Mean BCE evaluated from logits: softplus(z) - label * z.
  double loss = 0.0;
  Eigen::MatrixXd d_logits(k, 1);
  for (int i = 0; i < k; ++i) {
    loss += softplus(logits[i]) - labels[i] * logits[i];
    d_logits(i, 0) = (stableSigmoid(logits[i]) - labels[i]) / static_cast<double>(k);
  }
  loss /= static_cast<double>(k);

  LossAndGradients out;
  out.loss = loss;
  out.gradients = ScorerWeights{Mlp(weights.descriptor.size()), Mlp(weights.prior.size()),
                                Mlp(weights.inlier.size()), Mlp(weights.head.size())};

  const Eigen::MatrixXd d_merged = backpropMlp(weights.head, cache.head, d_logits, false, out.gradients.head);

  const auto d_dim = weights.descriptor.back().weights.rows();
  const auto p_dim = weights.prior.back().weights.rows();
  const auto i_dim = weights.inlier.back().weights.rows();
  backpropMlp(weights.descriptor, cache.descriptor, d_merged.leftCols(d_dim), true, out.gradients.descriptor);
  backpropMlp(weights.prior, cache.prior, d_merged.middleCols(d_dim, p_dim), true, out.gradients.prior);
  backpropMlp(weights.inlier, cache.inlier, d_merged.rightCols(i_dim), true, out.gradients.inlier);
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate_start >= learning_rate_end && learning_rate_end > 0.0)) {
    throw std::invalid_argument("TrainConfig: require start >= end > 0 for the learning rate");
  }
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
}

namespace {

struct AdamState {
  ScorerWeights m;
  ScorerWeights v;
  long step = 0;
};

template <typename F>
void forEachLayer(ScorerWeights& a, ScorerWeights& b, ScorerWeights& c, const ScorerWeights& g, F&& f) {
  auto run = [&](Mlp& ma, Mlp& mb, Mlp& mc, const Mlp& mg) {
    for (size_t l = 0; l < ma.size(); ++l) f(ma[l], mb[l], mc[l], mg[l]);
  };
  run(a.descriptor, b.descriptor, c.descriptor, g.descriptor);
  run(a.prior, b.prior, c.prior, g.prior);
  run(a.inlier, b.inlier, c.inlier, g.inlier);
  run(a.head, b.head, c.head, g.head);
}

void adamStep(ScorerWeights& weights, AdamState& state, const ScorerWeights& grads, double lr) {
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));

  forEachLayer(weights, state.m, state.v, grads, [&](MlpLayer& w, MlpLayer& m, MlpLayer& v, const MlpLayer& g) {
    m.weights = beta1 * m.weights + (1.0 - beta1) * g.weights;
    v.weights = beta2 * v.weights.array().matrix() + (1.0 - beta2) * g.weights.array().square().matrix();
    w.weights.array() -= lr * (m.weights.array() / bc1) / ((v.weights.array() / bc2).sqrt() + eps);

    m.bias = beta1 * m.bias + (1.0 - beta1) * g.bias;
    v.bias = beta2 * v.bias.array().matrix() + (1.0 - beta2) * g.bias.array().square().matrix();
    w.bias.array() -= lr * (m.bias.array() / bc1) / ((v.bias.array() / bc2).sqrt() + eps);
  });
}

ScorerWeights zerosLike(const ScorerWeights& w) {
  ScorerWeights out = w;
  forEachLayer(out, out, out, w, [](MlpLayer& a, MlpLayer&, MlpLayer&, const MlpLayer&) {
    a.weights.setZero();
    a.bias.setZero();
  });
  return out;
}

}  // namespace

TrainResult trainScorer(const std::vector<TrainingGroup>& groups, const TrainConfig& cfg) {
  if (groups.empty()) throw std::invalid_argument("trainScorer: empty dataset");
  const ScorerWeights init = ScorerWeights::initialized(cfg.seed);
  return trainScorer(groups, cfg, init);
}

TrainResult trainScorer(const std::vector<TrainingGroup>& groups, const TrainConfig& cfg,
                        const ScorerWeights& initial_weights) {
  cfg.validate();
  if (groups.empty()) throw std::invalid_argument("trainScorer: empty dataset");
  initial_weights.validate();

  TrainResult result;
  result.weights = initial_weights;

  AdamState state;
  state.m = zerosLike(initial_weights);
  state.v = zerosLike(initial_weights);

  const long total_steps = static_cast<long>(cfg.epochs) * static_cast<long>(groups.size());
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (const TrainingGroup& group : groups) {
      const double t = total_steps > 1 ? static_cast<double>(step) / static_cast<double>(total_steps - 1) : 0.0;
      const double lr = cfg.learning_rate_start + (cfg.learning_rate_end - cfg.learning_rate_start) * t;
      const Eigen::MatrixXd feats = standardizeFeatures(group.features);
      const LossAndGradients lg = scorerLossAndGradients(result.weights, feats, group.labels);
      adamStep(result.weights, state, lg.gradients, lr);
      epoch_loss += lg.loss;
      ++step;
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(groups.size()));
  }
  return result;
}

namespace {

void appendDims(std::ostream& out, const std::string& name, const Mlp& mlp) {
  out << name << ' ' << mlp.size() + 1;
  out << ' ' << mlp.front().weights.cols();
  for (const MlpLayer& layer : mlp) out << ' ' << layer.weights.rows();
  out << '\n';
}

std::vector<int> parseDims(std::istream& in, const std::string& expected_name) {
  std::string name;
  int count = 0;
  if (!(in >> name >> count) || name != expected_name || count < 2) {
    throw std::runtime_error("weights file: bad dimension line for " + expected_name);
  }
  std::vector<int> dims(count);
  for (int& d : dims) {
    if (!(in >> d) || d <= 0) throw std::runtime_error("weights file: bad dimension for " + expected_name);
  }
  return dims;
}

void packF64(std::string& buf, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double unpackF64(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

void packMlp(std::string& buf, const Mlp& mlp) {
  for (const MlpLayer& layer : mlp) {
    for (int r = 0; r < layer.weights.rows(); ++r) {
      for (int c = 0; c < layer.weights.cols(); ++c) packF64(buf, layer.weights(r, c));
    }
    for (int i = 0; i < layer.bias.size(); ++i) packF64(buf, layer.bias[i]);
  }
}

void unpackMlp(const std::string& buf, size_t& offset, Mlp& mlp) {
  for (MlpLayer& layer : mlp) {
    for (int r = 0; r < layer.weights.rows(); ++r) {
      for (int c = 0; c < layer.weights.cols(); ++c) {
        if (offset + 8 > buf.size()) throw std::runtime_error("weights file: truncated parameter block");
        layer.weights(r, c) = unpackF64(buf.data() + offset);
        offset += 8;
      }
    }
    for (int i = 0; i < layer.bias.size(); ++i) {
      if (offset + 8 > buf.size()) throw std::runtime_error("weights file: truncated parameter block");
      layer.bias[i] = unpackF64(buf.data() + offset);
      offset += 8;
    }
  }
}

}  // namespace

void saveWeights(const std::string& path, const ScorerWeights& weights) {
  weights.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "scorer-v1\n";
  appendDims(out, "descriptor", weights.descriptor);
  appendDims(out, "prior", weights.prior);
  appendDims(out, "inlier", weights.inlier);
  appendDims(out, "head", weights.head);

  std::string buf;
  packMlp(buf, weights.descriptor);
  packMlp(buf, weights.prior);
  packMlp(buf, weights.inlier);
  packMlp(buf, weights.head);
  out << "params " << buf.size() / 8 << '\n';
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("failed writing weights to " + path);
}

ScorerWeights loadWeights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string magic;
  if (!std::getline(in, magic) || magic != "scorer-v1") {
    throw std::runtime_error("weights file: missing scorer-v1 header");
  }
  const std::vector<int> d_dims = parseDims(in, "descriptor");
  const std::vector<int> p_dims = parseDims(in, "prior");
  const std::vector<int> i_dims = parseDims(in, "inlier");
  const std::vector<int> h_dims = parseDims(in, "head");

  std::string label;
  size_t count = 0;
  if (!(in >> label >> count) || label != "params") throw std::runtime_error("weights file: missing params header");
  in.ignore(1);  // newline before the binary block

  // zeros() validates the dimension chain, including the head input width.
  ScorerWeights weights = ScorerWeights::zeros(d_dims, p_dims, i_dims, h_dims);

  std::string buf(count * 8, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (static_cast<size_t>(in.gcount()) != buf.size()) throw std::runtime_error("weights file: truncated parameter block");

  size_t offset = 0;
  unpackMlp(buf, offset, weights.descriptor);
  unpackMlp(buf, offset, weights.prior);
  unpackMlp(buf, offset, weights.inlier);
  unpackMlp(buf, offset, weights.head);
  if (offset != buf.size()) throw std::runtime_error("weights file: trailing parameters");
  return weights;
}

void writeTrainingGroups(const std::string& path, const std::vector<TrainingGroup>& groups) {
  std::ofstream out = openOutput(path);
  for (const TrainingGroup& g : groups) {
    for (int r = 0; r < g.features.rows(); ++r) {
      out << g.pair_id << ' ' << fmtDouble(g.labels[r]);
      for (int c = 0; c < g.features.cols(); ++c) out << ' ' << fmtDouble(g.features(r, c));
      out << '\n';
    }
  }
}

std::vector<TrainingGroup> readTrainingGroups(const std::string& path) {
  std::ifstream in = openInput(path);
  std::vector<TrainingGroup> groups;
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> labels;
  std::string current_id;

  auto flush = [&]() {
    if (rows.empty()) return;
    TrainingGroup g;
    g.pair_id = current_id;
    g.features.resize(rows.size(), rows.front().size());
    g.labels.resize(rows.size());
    for (size_t r = 0; r < rows.size(); ++r) {
      g.features.row(r) = rows[r].transpose();
      g.labels[r] = labels[r];
    }
    groups.push_back(std::move(g));
    rows.clear();
    labels.clear();
  };

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string pair_id;
    double label;
    if (!(ls >> pair_id >> label)) {
      throw std::runtime_error("training dataset: bad record at line " + std::to_string(line_no));
    }
    std::vector<double> feats;
    double v;
    while (ls >> v) feats.push_back(v);
    if (feats.empty()) throw std::runtime_error("training dataset: no features at line " + std::to_string(line_no));
    if (pair_id != current_id) {
      flush();
      current_id = pair_id;
    }
    if (!rows.empty() && static_cast<int>(feats.size()) != rows.front().size()) {
      throw std::runtime_error("training dataset: feature width changed at line " + std::to_string(line_no));
    }
    rows.push_back(Eigen::Map<Eigen::VectorXd>(feats.data(), static_cast<int>(feats.size())));
    labels.push_back(label);
  }
  flush();
  return groups;
}

}  // namespace priorpose
