#include "priorpose/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "priorpose/io.hpp"
#include "priorpose/rng.hpp"

namespace priorpose {

namespace {

constexpr std::uint64_t kPriorSeedTag = 0x7072696f;  // per-pair prior noise stream

double nowMs() {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

}  // namespace

std::vector<VariantSpec> defaultVariants() {
  return {
      {"prior_only", true, false, ScorerKind::InlierCount},
      {"baseline", false, false, ScorerKind::InlierCount},
      {"epipolar_matching", false, true, ScorerKind::InlierCount},
      {"prior_scoring", false, false, ScorerKind::Learned},
      {"full", false, true, ScorerKind::Learned},
  };
}

VariantSpec variantByName(const std::string& name) {
  for (const VariantSpec& v : defaultVariants()) {
    if (v.name == name) return v;
  }
  throw std::invalid_argument("unknown benchmark variant '" + name + "'");
}

void BenchConfig::validate() const {
  if (trials < 1 && dataset_path.empty()) throw std::invalid_argument("BenchConfig: trials must be >= 1");
  if (auc_thresholds.empty()) throw std::invalid_argument("BenchConfig: need at least one AUC threshold");
  for (size_t i = 0; i < auc_thresholds.size(); ++i) {
    if (auc_thresholds[i] <= 0.0 || (i > 0 && auc_thresholds[i] <= auc_thresholds[i - 1])) {
      throw std::invalid_argument("BenchConfig: AUC thresholds must be positive and strictly increasing");
    }
  }
  if (variants.empty()) throw std::invalid_argument("BenchConfig: no variants selected");
  for (const std::string& name : variants) variantByName(name);
}

double poseAuc(const std::vector<double>& errors_deg, double threshold_deg) {
  if (errors_deg.empty()) throw std::invalid_argument("poseAuc: empty error list");
  if (threshold_deg <= 0.0) throw std::invalid_argument("poseAuc: threshold must be positive");
  double acc = 0.0;
  for (const double e : errors_deg) {
    if (e < 0.0 || std::isnan(e)) throw std::invalid_argument("poseAuc: errors must be >= 0");
    acc += std::max(0.0, threshold_deg - e);
  }
  return acc / (threshold_deg * errors_deg.size());
}

namespace {

Pose priorForPair(SyntheticPair& pair, const BenchConfig& cfg) {
  if (cfg.prior_source == PriorSource::Oracle) {
    PriorConfig pcfg;
    pcfg.source = PriorSource::Oracle;
    pcfg.oracle_sigma_rotation_deg = cfg.prior_sigma_rotation_deg;
    pcfg.oracle_sigma_translation_deg = cfg.prior_sigma_translation_deg;
    return noisyOraclePrior(pair.truth, pcfg, Rng::deriveSeed(pair.config.seed, kPriorSeedTag));
  }
  if (!pair.has_grids) {
    generateFeatureGrids(pair, pair.config.grid_depth, pair.config.grid_descriptor_noise);
  }
  const CorrespondenceMap map = correlateGrids(pair.grid_a, pair.grid_b);
  PriorConfig pcfg;
  pcfg.source = PriorSource::Correlation;
  return coarsePoseFromMap(map, pair.ka, pair.kb, pcfg);
}

struct PairOutcome {
  double pose_error_deg = std::numeric_limits<double>::infinity();
  MatchQuality quality;
};

PairOutcome evaluatePair(const SyntheticPair& pair, const Pose& prior, const VariantSpec& variant,
                         const BenchConfig& cfg, double inlier_threshold,
                         const std::shared_ptr<const ScorerWeights>& weights) {
  PairOutcome outcome;
  if (variant.prior_only) {
    outcome.pose_error_deg = poseError(prior, pair.truth).combined_deg;
    return outcome;
  }

  MatcherConfig mcfg = cfg.matcher;
  if (!variant.epipolar_penalty) mcfg.epipolar_weight = 0.0;
  const MatchResult matches =
      matchKeypoints(pair.keypoints_a, pair.keypoints_b, variant.epipolar_penalty ? &prior : nullptr, pair.ka,
                     pair.kb, mcfg);
  outcome.quality = evaluateMatches(pair, matches);

  std::vector<PixelCorrespondence> corrs(matches.size());
  CorrespondenceDescriptors descs;
  descs.a.resize(matches.size(), pair.keypoints_a.descriptors.cols());
  descs.b.resize(matches.size(), pair.keypoints_b.descriptors.cols());
  for (size_t i = 0; i < matches.size(); ++i) {
    corrs[i].a = pair.keypoints_a.positions.row(matches[i].index_a).transpose();
    corrs[i].b = pair.keypoints_b.positions.row(matches[i].index_b).transpose();
    corrs[i].confidence = matches[i].confidence;
    descs.a.row(i) = pair.keypoints_a.descriptors.row(matches[i].index_a);
    descs.b.row(i) = pair.keypoints_b.descriptors.row(matches[i].index_b);
  }

  EstimatorConfig ecfg = cfg.estimator;
  ecfg.inlier_threshold = inlier_threshold;
  ecfg.scorer = variant.scorer;
  ecfg.weights = variant.scorer == ScorerKind::Learned ? weights : nullptr;
  ecfg.seed = Rng::deriveSeed(pair.config.seed, cfg.seed);
  try {
    const EstimateResult result = estimatePose(corrs, descs, prior, pair.ka, pair.kb, ecfg);
    outcome.pose_error_deg = poseError(result.pose, pair.truth).combined_deg;
  } catch (const std::exception&) {
    // failed estimates keep the +inf sentinel and count as maximal error
  }
  return outcome;
}

}  // namespace

BenchReport runBenchmark(const BenchConfig& cfg) {
  cfg.validate();

  Dataset dataset;
  if (!cfg.dataset_path.empty()) {
    dataset = readDatasetFile(cfg.dataset_path);
  } else {
    dataset = generateDataset(cfg.scene, cfg.trials);
  }

  std::shared_ptr<const ScorerWeights> weights;
  bool needs_weights = false;
  for (const std::string& name : cfg.variants) {
    if (variantByName(name).scorer == ScorerKind::Learned) needs_weights = true;
  }
  if (needs_weights) {
    if (cfg.weights_path.empty()) {
      throw std::invalid_argument("runBenchmark: learned-scorer variants need a weights path");
    }
    weights = std::make_shared<ScorerWeights>(loadWeights(cfg.weights_path));
  }

  const double inlier_threshold =
      cfg.use_calibrated_threshold ? dataset.calibrated_threshold : cfg.estimator.inlier_threshold;

  // Priors are fixed per pair so every variant sees the same prior.
  std::vector<Pose> priors;
  priors.reserve(dataset.pairs.size());
  for (SyntheticPair& pair : dataset.pairs) priors.push_back(priorForPair(pair, cfg));

  BenchReport report;
  report.config_json = benchConfigToJson(cfg);
  report.calibrated_threshold = inlier_threshold;
  report.thresholds = cfg.auc_thresholds;

  for (const std::string& name : cfg.variants) {
    const VariantSpec variant = variantByName(name);
    VariantResult result;
    result.name = name;
    for (size_t p = 0; p < dataset.pairs.size(); ++p) {
      const double start = cfg.measure_timing ? nowMs() : 0.0;
      const PairOutcome outcome = evaluatePair(dataset.pairs[p], priors[p], variant, cfg, inlier_threshold, weights);
      if (cfg.measure_timing) result.total_ms += nowMs() - start;
      result.pose_errors.push_back(outcome.pose_error_deg);
      result.match_correct += outcome.quality.correct;
      result.match_total += outcome.quality.total_matches;
      result.true_total += outcome.quality.total_true;
    }
    for (const double tau : cfg.auc_thresholds) result.auc.push_back(poseAuc(result.pose_errors, tau));
    report.variants.push_back(std::move(result));
  }
  return report;
}

namespace {

std::string thresholdLabel(double tau) {
  std::string label = fmtDouble(tau);
  if (label.size() > 2 && label.ends_with(".0")) label.resize(label.size() - 2);
  return label;
}

}  // namespace

void emitReport(const BenchReport& report, const std::string& out_dir, ReportFormat format) {
  std::filesystem::create_directories(out_dir);
  if (format == ReportFormat::StructuredText) {
    std::ofstream out = openOutput(out_dir + "/report.txt");
    writeBenchReport(out, report);
    return;
  }

  std::ofstream csv = openOutput(out_dir + "/report.csv");
  csv << "variant";
  for (const double tau : report.thresholds) csv << ",auc" << thresholdLabel(tau);
  csv << ",precision,recall,mean_ms\n";
  for (const VariantResult& v : report.variants) {
    csv << v.name;
    for (const double a : v.auc) csv << ',' << fmtDouble(a);
    csv << ',' << fmtDouble(v.precision()) << ',' << fmtDouble(v.recall()) << ',' << fmtDouble(v.meanMs()) << '\n';
  }

  std::ofstream errors = openOutput(out_dir + "/errors.csv");
  errors << "variant,pair,error_deg\n";
  for (const VariantResult& v : report.variants) {
    for (size_t p = 0; p < v.pose_errors.size(); ++p) {
      errors << v.name << ',' << p << ',' << fmtDouble(v.pose_errors[p]) << '\n';
    }
  }
}

void writeBenchReport(std::ostream& out, const BenchReport& report) {
  out << "priorpose-bench-v1\n";
  out << "config " << report.config_json << '\n';
  out << "calibrated_threshold " << fmtDouble(report.calibrated_threshold) << '\n';
  out << "thresholds " << report.thresholds.size();
  for (const double t : report.thresholds) out << ' ' << fmtDouble(t);
  out << '\n';
  out << "variants " << report.variants.size() << '\n';
  for (const VariantResult& v : report.variants) {
    out << "variant " << v.name << '\n';
    out << "pairs " << v.pose_errors.size() << '\n';
    out << "errors";
    for (const double e : v.pose_errors) out << ' ' << fmtDouble(e);
    out << '\n';
    out << "auc";
    for (const double a : v.auc) out << ' ' << fmtDouble(a);
    out << '\n';
    out << "match_correct " << v.match_correct << '\n';
    out << "match_total " << v.match_total << '\n';
    out << "true_total " << v.true_total << '\n';
    out << "total_ms " << fmtDouble(v.total_ms) << '\n';
    out << "endvariant\n";
  }
}

namespace {

void expectTag(std::istream& in, const std::string& tag) {
  std::string got;
  if (!(in >> got) || got != tag) throw std::runtime_error("bench report: expected '" + tag + "' tag");
}

}  // namespace

BenchReport readBenchReport(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "priorpose-bench-v1") {
    throw std::runtime_error("bench report: missing priorpose-bench-v1 header");
  }
  BenchReport report;
  expectTag(in, "config");
  std::getline(in >> std::ws, report.config_json);
  expectTag(in, "calibrated_threshold");
  in >> report.calibrated_threshold;
  expectTag(in, "thresholds");
  size_t n = 0;
  in >> n;
  report.thresholds.resize(n);
  for (double& t : report.thresholds) in >> t;
  expectTag(in, "variants");
  size_t k = 0;
  in >> k;
  for (size_t i = 0; i < k; ++i) {
    VariantResult v;
    expectTag(in, "variant");
    in >> v.name;
    expectTag(in, "pairs");
    size_t pairs = 0;
    in >> pairs;
    expectTag(in, "errors");
    v.pose_errors.resize(pairs);
    for (double& e : v.pose_errors) in >> e;
    expectTag(in, "auc");
    v.auc.resize(report.thresholds.size());
    for (double& a : v.auc) in >> a;
    expectTag(in, "match_correct");
    in >> v.match_correct;
    expectTag(in, "match_total");
    in >> v.match_total;
    expectTag(in, "true_total");
    in >> v.true_total;
    expectTag(in, "total_ms");
    in >> v.total_ms;
    expectTag(in, "endvariant");
    if (!in) throw std::runtime_error("bench report: truncated variant block");
    report.variants.push_back(std::move(v));
  }
  return report;
}

std::string benchConfigToJson(const BenchConfig& cfg) {
  nlohmann::json j;
  j["scene"] = nlohmann::json::parse(sceneConfigToJson(cfg.scene));
  j["dataset"] = cfg.dataset_path;
  j["trials"] = cfg.trials;
  j["variants"] = cfg.variants;
  j["auc_thresholds"] = cfg.auc_thresholds;
  j["prior_source"] = cfg.prior_source == PriorSource::Oracle ? "oracle" : "correlation";
  j["prior_sigma_rotation"] = cfg.prior_sigma_rotation_deg;
  j["prior_sigma_translation"] = cfg.prior_sigma_translation_deg;
  j["matcher"] = {{"epipolar_weight", cfg.matcher.epipolar_weight},
                  {"epipolar_saturation", cfg.matcher.epipolar_saturation},
                  {"sinkhorn_iterations", cfg.matcher.sinkhorn_iterations},
                  {"sinkhorn_tolerance", cfg.matcher.sinkhorn_tolerance},
                  {"dustbin_score", cfg.matcher.dustbin_score},
                  {"confidence_threshold", cfg.matcher.confidence_threshold},
                  {"mutual_check", cfg.matcher.mutual_check},
                  {"descriptor_scale", cfg.matcher.descriptor_scale}};
  j["estimator"] = {{"hypothesis_count", cfg.estimator.hypothesis_count},
                    {"top_k", cfg.estimator.top_k},
                    {"inlier_threshold", cfg.estimator.inlier_threshold},
                    {"histogram_bins", cfg.estimator.histogram_bins},
                    {"solver", cfg.estimator.solver == MinimalSolver::FivePoint ? "five-point" : "eight-point"}};
  j["use_calibrated_threshold"] = cfg.use_calibrated_threshold;
  j["weights"] = cfg.weights_path;
  j["measure_timing"] = cfg.measure_timing;
  j["seed"] = cfg.seed;
  return j.dump();
}

BenchConfig benchConfigFromJson(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("bench config: invalid JSON: ") + e.what());
  }
  BenchConfig cfg;
  if (j.contains("scene")) cfg.scene = sceneConfigFromJson(j["scene"].dump());
  cfg.dataset_path = j.value("dataset", cfg.dataset_path);
  cfg.trials = j.value("trials", cfg.trials);
  if (j.contains("variants")) cfg.variants = j["variants"].get<std::vector<std::string>>();
  if (j.contains("auc_thresholds")) cfg.auc_thresholds = j["auc_thresholds"].get<std::vector<double>>();
  const std::string source = j.value("prior_source", std::string("oracle"));
  if (source == "oracle") cfg.prior_source = PriorSource::Oracle;
  else if (source == "correlation") cfg.prior_source = PriorSource::Correlation;
  else throw std::runtime_error("bench config: unknown prior_source '" + source + "'");
  cfg.prior_sigma_rotation_deg = j.value("prior_sigma_rotation", cfg.prior_sigma_rotation_deg);
  cfg.prior_sigma_translation_deg = j.value("prior_sigma_translation", cfg.prior_sigma_translation_deg);
  if (j.contains("matcher")) {
    const auto m = j["matcher"];
    cfg.matcher.epipolar_weight = m.value("epipolar_weight", cfg.matcher.epipolar_weight);
    cfg.matcher.epipolar_saturation = m.value("epipolar_saturation", cfg.matcher.epipolar_saturation);
    cfg.matcher.sinkhorn_iterations = m.value("sinkhorn_iterations", cfg.matcher.sinkhorn_iterations);
    cfg.matcher.sinkhorn_tolerance = m.value("sinkhorn_tolerance", cfg.matcher.sinkhorn_tolerance);
    cfg.matcher.dustbin_score = m.value("dustbin_score", cfg.matcher.dustbin_score);
    cfg.matcher.confidence_threshold = m.value("confidence_threshold", cfg.matcher.confidence_threshold);
    cfg.matcher.mutual_check = m.value("mutual_check", cfg.matcher.mutual_check);
    cfg.matcher.descriptor_scale = m.value("descriptor_scale", cfg.matcher.descriptor_scale);
  }
  if (j.contains("estimator")) {
    const auto e = j["estimator"];
    cfg.estimator.hypothesis_count = e.value("hypothesis_count", cfg.estimator.hypothesis_count);
    cfg.estimator.top_k = e.value("top_k", cfg.estimator.top_k);
    if (e.contains("inlier_threshold")) {
      cfg.estimator.inlier_threshold = e["inlier_threshold"].get<double>();
    }
    cfg.estimator.histogram_bins = e.value("histogram_bins", cfg.estimator.histogram_bins);
    const std::string solver = e.value("solver", std::string("five-point"));
    if (solver == "five-point") cfg.estimator.solver = MinimalSolver::FivePoint;
    else if (solver == "eight-point") cfg.estimator.solver = MinimalSolver::EightPoint;
    else throw std::runtime_error("bench config: unknown solver '" + solver + "'");
  }
  cfg.use_calibrated_threshold = j.value("use_calibrated_threshold", cfg.use_calibrated_threshold);
  cfg.weights_path = j.value("weights", cfg.weights_path);
  cfg.measure_timing = j.value("measure_timing", cfg.measure_timing);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

}  // namespace priorpose
