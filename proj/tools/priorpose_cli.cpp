#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "priorpose/bench.hpp"
#include "priorpose/io.hpp"
#include "priorpose/rng.hpp"

namespace pp = priorpose;

namespace {

constexpr std::uint64_t kPriorSeedTag = 0x7072696f;

std::string readFile(const std::string& path) {
  std::ifstream in = pp::openInput(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

pp::Dataset loadDataset(const std::string& dir) { return pp::readDatasetFile(dir + "/dataset.txt"); }

struct PriorOptions {
  std::string source = "oracle";  // oracle | correlation | none
  double sigma_deg = 2.0;
};

// Shared by match/estimate/train-scorer; correlation priors are rebuilt
// deterministically from the pair seed when grids were not stored.
std::optional<pp::Pose> computePrior(pp::SyntheticPair& pair, const PriorOptions& opts) {
  if (opts.source == "none") return std::nullopt;
  pp::PriorConfig pcfg;
  if (opts.source == "oracle") {
    pcfg.source = pp::PriorSource::Oracle;
    pcfg.oracle_sigma_rotation_deg = opts.sigma_deg;
    pcfg.oracle_sigma_translation_deg = opts.sigma_deg;
    return pp::noisyOraclePrior(pair.truth, pcfg, pp::Rng::deriveSeed(pair.config.seed, kPriorSeedTag));
  }
  if (opts.source != "correlation") throw std::runtime_error("unknown prior source '" + opts.source + "'");
  if (!pair.has_grids) {
    pp::generateFeatureGrids(pair, pair.config.grid_depth, pair.config.grid_descriptor_noise);
  }
  pcfg.source = pp::PriorSource::Correlation;
  return pp::coarsePoseFromMap(pp::correlateGrids(pair.grid_a, pair.grid_b), pair.ka, pair.kb, pcfg);
}

void runMatchPipeline(pp::SyntheticPair& pair, const PriorOptions& prior_opts, pp::MatcherConfig mcfg,
                      std::vector<pp::PixelCorrespondence>& corrs, pp::CorrespondenceDescriptors& descs,
                      std::optional<pp::Pose>& prior, pp::MatchResult* matches_out) {
  prior = computePrior(pair, prior_opts);
  if (!prior) mcfg.epipolar_weight = 0.0;
  const pp::MatchResult matches = pp::matchKeypoints(pair.keypoints_a, pair.keypoints_b,
                                                     prior ? &*prior : nullptr, pair.ka, pair.kb, mcfg);
  corrs.resize(matches.size());
  descs.a.resize(matches.size(), pair.keypoints_a.descriptors.cols());
  descs.b.resize(matches.size(), pair.keypoints_b.descriptors.cols());
  for (size_t i = 0; i < matches.size(); ++i) {
    corrs[i].a = pair.keypoints_a.positions.row(matches[i].index_a).transpose();
    corrs[i].b = pair.keypoints_b.positions.row(matches[i].index_b).transpose();
    corrs[i].confidence = matches[i].confidence;
    descs.a.row(i) = pair.keypoints_a.descriptors.row(matches[i].index_a);
    descs.b.row(i) = pair.keypoints_b.descriptors.row(matches[i].index_b);
  }
  if (matches_out) *matches_out = matches;
}

std::ostream& outputStream(const std::string& path, std::ofstream& file) {
  if (path.empty()) return std::cout;
  file = pp::openOutput(path);
  return file;
}

int cmdSimulate(const std::string& config_path, const std::string& out_dir) {
  const std::string text = readFile(config_path);
  const pp::SceneConfig scene = pp::sceneConfigFromJson(text);
  int pairs = 10;
  const auto j = nlohmann::json::parse(text);
  if (j.contains("pairs")) pairs = j["pairs"].get<int>();

  const pp::Dataset dataset = pp::generateDataset(scene, pairs);
  std::filesystem::create_directories(out_dir);
  pp::writeDatasetFile(out_dir + "/dataset.txt", dataset);

  nlohmann::json echo = nlohmann::json::parse(pp::sceneConfigToJson(scene));
  echo["pairs"] = pairs;
  echo["calibrated_threshold"] = dataset.calibrated_threshold;
  echo["rng"] = pp::Rng::kAlgorithm;
  std::ofstream cfg_echo = pp::openOutput(out_dir + "/config.json");
  cfg_echo << echo.dump(2) << '\n';

  std::cout << "wrote " << dataset.pairs.size() << " pairs to " << out_dir << "/dataset.txt"
            << " (calibrated_threshold " << pp::fmtDouble(dataset.calibrated_threshold) << ")\n";
  return 0;
}

int cmdMatch(const std::string& dataset_dir, int pair_id, const PriorOptions& prior_opts, double lambda,
             const std::string& out_path) {
  pp::Dataset dataset = loadDataset(dataset_dir);
  if (pair_id < 0 || pair_id >= static_cast<int>(dataset.pairs.size())) {
    throw std::runtime_error("pair id out of range (dataset has " + std::to_string(dataset.pairs.size()) +
                             " pairs)");
  }
  pp::SyntheticPair& pair = dataset.pairs[pair_id];

  pp::MatcherConfig mcfg;
  mcfg.epipolar_weight = lambda;
  std::vector<pp::PixelCorrespondence> corrs;
  pp::CorrespondenceDescriptors descs;
  std::optional<pp::Pose> prior;
  pp::MatchResult matches;
  runMatchPipeline(pair, prior_opts, mcfg, corrs, descs, prior, &matches);

  std::ofstream file;
  std::ostream& out = outputStream(out_path, file);
  out << "# priorpose match pair=" << pair_id << " prior=" << prior_opts.source << " lambda="
      << pp::fmtDouble(mcfg.epipolar_weight) << " sigma=" << pp::fmtDouble(prior_opts.sigma_deg) << '\n';
  const pp::MatchQuality quality = pp::evaluateMatches(pair, matches);
  out << "# precision=" << pp::fmtDouble(quality.precision()) << " recall=" << pp::fmtDouble(quality.recall())
      << " matches=" << matches.size() << '\n';
  pp::writeMatches(out, matches);
  return 0;
}

int cmdEstimate(const std::string& dataset_dir, int pair_id, const std::string& scorer_name,
                const std::string& weights_path, int hypotheses, const PriorOptions& prior_opts, double lambda,
                const std::string& corrs_path, const std::string& out_path) {
  pp::Dataset dataset = loadDataset(dataset_dir);

  pp::EstimatorConfig ecfg;
  ecfg.hypothesis_count = hypotheses;
  ecfg.inlier_threshold = dataset.calibrated_threshold;
  if (scorer_name == "learned") {
    if (weights_path.empty()) throw std::runtime_error("--scorer learned requires --weights");
    ecfg.scorer = pp::ScorerKind::Learned;
    ecfg.weights = std::make_shared<pp::ScorerWeights>(pp::loadWeights(weights_path));
  } else if (scorer_name != "inlier") {
    throw std::runtime_error("unknown scorer '" + scorer_name + "' (expected inlier|learned)");
  }
  if (ecfg.scorer == pp::ScorerKind::Learned && prior_opts.source == "none") {
    throw std::runtime_error("the learned scorer needs a prior; pass --prior oracle|correlation");
  }

  std::ofstream file;
  std::ostream& out = outputStream(out_path, file);

  std::vector<int> ids;
  if (pair_id >= 0) {
    ids.push_back(pair_id);
  } else {
    for (int i = 0; i < static_cast<int>(dataset.pairs.size()); ++i) ids.push_back(i);
  }

  for (const int id : ids) {
    if (id < 0 || id >= static_cast<int>(dataset.pairs.size())) throw std::runtime_error("pair id out of range");
    pp::SyntheticPair& pair = dataset.pairs[id];

    std::vector<pp::PixelCorrespondence> corrs;
    pp::CorrespondenceDescriptors descs;
    std::optional<pp::Pose> prior;
    if (!corrs_path.empty()) {
      std::ifstream cin_file = pp::openInput(corrs_path);
      corrs = pp::readCorrespondences(cin_file);
      prior = computePrior(pair, prior_opts);
    } else {
      pp::MatcherConfig mcfg;
      mcfg.epipolar_weight = lambda;
      runMatchPipeline(pair, prior_opts, mcfg, corrs, descs, prior, nullptr);
    }

    out << "pair: " << id << '\n';
    out << "correspondences: " << corrs.size() << '\n';
    ecfg.seed = pp::Rng::deriveSeed(pair.config.seed, 42);
    try {
      const pp::Pose fallback_prior = prior ? *prior : pair.truth;
      const pp::EstimateResult result = pp::estimatePose(corrs, descs, prior ? *prior : fallback_prior, pair.ka,
                                                         pair.kb, ecfg);
      const Eigen::Vector4d q = result.pose.quaternionXyzw();
      out << "pose: " << pp::fmtDouble(q.x()) << ' ' << pp::fmtDouble(q.y()) << ' ' << pp::fmtDouble(q.z()) << ' '
          << pp::fmtDouble(q.w()) << ' ' << pp::fmtDouble(result.pose.translation.x()) << ' '
          << pp::fmtDouble(result.pose.translation.y()) << ' ' << pp::fmtDouble(result.pose.translation.z()) << '\n';
      const pp::PoseError err = pp::poseError(result.pose, pair.truth);
      out << "rotation_error_deg: " << pp::fmtDouble(err.rotation_deg) << '\n';
      out << "translation_error_deg: " << pp::fmtDouble(err.translation_deg) << '\n';
      out << "combined_error_deg: " << pp::fmtDouble(err.combined_deg) << '\n';
      pp::writeDiagnostics(out, result.diagnostics);
    } catch (const std::exception& e) {
      out << "estimate_failed: " << e.what() << '\n';
    }
    out << '\n';
  }
  return 0;
}

int cmdTrainScorer(const std::string& dataset_dir, const std::string& out_path, int epochs, std::uint64_t seed,
                   const PriorOptions& prior_opts, double lambda, int hypotheses,
                   const std::string& features_path) {
  pp::Dataset dataset = loadDataset(dataset_dir);

  pp::EstimatorConfig ecfg;
  ecfg.hypothesis_count = hypotheses;
  ecfg.inlier_threshold = dataset.calibrated_threshold;

  std::vector<pp::TrainingGroup> groups;
  for (size_t i = 0; i < dataset.pairs.size(); ++i) {
    pp::SyntheticPair& pair = dataset.pairs[i];
    std::vector<pp::PixelCorrespondence> corrs;
    pp::CorrespondenceDescriptors descs;
    std::optional<pp::Pose> prior;
    pp::MatcherConfig mcfg;
    mcfg.epipolar_weight = lambda;
    runMatchPipeline(pair, prior_opts, mcfg, corrs, descs, prior, nullptr);
    if (!prior) throw std::runtime_error("train-scorer needs a prior; pass --prior oracle|correlation");
    if (static_cast<int>(corrs.size()) < 6) continue;

    ecfg.seed = pp::Rng::deriveSeed(pair.config.seed, 42);
    try {
      groups.push_back(pp::collectTrainingGroup("pair" + std::to_string(i), corrs, descs, *prior, pair.truth,
                                                pair.ka, pair.kb, ecfg));
    } catch (const std::exception&) {
      continue;  // unusable pair (all hypotheses degenerate)
    }
  }
  if (groups.empty()) throw std::runtime_error("train-scorer: no usable training pairs");
  if (!features_path.empty()) pp::writeTrainingGroups(features_path, groups);

  pp::TrainConfig tcfg;
  tcfg.epochs = epochs;
  tcfg.seed = seed;
  const pp::TrainResult result = pp::trainScorer(groups, tcfg);
  pp::saveWeights(out_path, result.weights);

  std::cout << "trained on " << groups.size() << " pairs for " << epochs << " epochs; loss "
            << pp::fmtDouble(result.loss_curve.front()) << " -> " << pp::fmtDouble(result.loss_curve.back())
            << "; weights written to " << out_path << '\n';
  return 0;
}

int cmdBench(const std::string& config_path, const std::string& out_dir, const std::string& variants_arg) {
  pp::BenchConfig cfg = pp::benchConfigFromJson(readFile(config_path));
  if (!variants_arg.empty() && variants_arg != "all") {
    cfg.variants.clear();
    std::stringstream ss(variants_arg);
    std::string name;
    while (std::getline(ss, name, ',')) {
      if (!name.empty()) cfg.variants.push_back(name);
    }
    cfg.validate();
  }

  const pp::BenchReport report = pp::runBenchmark(cfg);
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream out = pp::openOutput(out_dir + "/bench_report.txt");
    pp::writeBenchReport(out, report);
  }
  pp::emitReport(report, out_dir, pp::ReportFormat::Csv);

  for (const pp::VariantResult& v : report.variants) {
    std::cout << v.name;
    for (size_t t = 0; t < report.thresholds.size(); ++t) {
      std::cout << " auc" << pp::fmtDouble(report.thresholds[t]) << "=" << pp::fmtDouble(v.auc[t]);
    }
    std::cout << " precision=" << pp::fmtDouble(v.precision()) << " recall=" << pp::fmtDouble(v.recall()) << '\n';
  }
  std::cout << "report written to " << out_dir << "/report.csv\n";
  return 0;
}

int cmdReport(const std::string& in_dir, const std::string& format, const std::string& out_dir) {
  std::ifstream in = pp::openInput(in_dir + "/bench_report.txt");
  const pp::BenchReport report = pp::readBenchReport(in);
  const std::string target = out_dir.empty() ? in_dir : out_dir;
  if (format == "csv") {
    pp::emitReport(report, target, pp::ReportFormat::Csv);
    std::cout << "wrote " << target << "/report.csv and " << target << "/errors.csv\n";
  } else if (format == "text") {
    pp::emitReport(report, target, pp::ReportFormat::StructuredText);
    std::cout << "wrote " << target << "/report.txt\n";
  } else {
    throw std::runtime_error("unknown report format '" + format + "' (expected csv|text)");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-view relative pose estimation with motion priors"};
  app.require_subcommand(1);

  std::string config_path, out_dir, out_path, dataset_dir, weights_path, corrs_path, features_path;
  std::string variants_arg = "all", format = "csv", scorer_name = "inlier";
  PriorOptions prior_opts;
  int pair_id = -1, epochs = 60, hypotheses = 2000;
  std::uint64_t seed = 1;
  double lambda = 1.0;

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
  simulate->add_option("--config", config_path, "scene config JSON")->required();
  simulate->add_option("--out", out_dir, "output directory")->required();

  auto* match = app.add_subcommand("match", "match one pair and emit correspondences");
  match->add_option("--dataset", dataset_dir)->required();
  match->add_option("--pair", pair_id, "pair id")->required();
  match->add_option("--prior", prior_opts.source, "oracle|correlation|none");
  match->add_option("--prior-sigma", prior_opts.sigma_deg, "oracle noise (degrees)");
  match->add_option("--lambda", lambda, "epipolar penalty weight");
  match->add_option("--out", out_path, "output file (default stdout)");

  auto* estimate = app.add_subcommand("estimate", "estimate poses and emit diagnostics");
  estimate->add_option("--dataset", dataset_dir)->required();
  estimate->add_option("--pair", pair_id, "pair id (default: all pairs)");
  estimate->add_option("--scorer", scorer_name, "inlier|learned");
  estimate->add_option("--weights", weights_path, "scorer weights file");
  estimate->add_option("--hypotheses", hypotheses, "hypothesis count N");
  estimate->add_option("--prior", prior_opts.source, "oracle|correlation|none");
  estimate->add_option("--prior-sigma", prior_opts.sigma_deg, "oracle noise (degrees)");
  estimate->add_option("--lambda", lambda, "epipolar penalty weight");
  estimate->add_option("--corrs", corrs_path, "read correspondences from file instead of matching");
  estimate->add_option("--out", out_path, "output file (default stdout)");

  auto* train = app.add_subcommand("train-scorer", "train the hypothesis scorer");
  train->add_option("--dataset", dataset_dir)->required();
  train->add_option("--out", out_path, "weights output file")->required();
  train->add_option("--epochs", epochs);
  train->add_option("--seed", seed);
  train->add_option("--prior", prior_opts.source, "oracle|correlation");
  train->add_option("--prior-sigma", prior_opts.sigma_deg, "oracle noise (degrees)");
  train->add_option("--lambda", lambda, "epipolar penalty weight for match generation");
  train->add_option("--hypotheses", hypotheses, "hypothesis count N");
  train->add_option("--dump-features", features_path, "also write the training feature file");

  auto* bench = app.add_subcommand("bench", "run the benchmark variants");
  bench->add_option("--config", config_path, "bench config JSON")->required();
  bench->add_option("--out", out_dir, "output directory")->required();
  bench->add_option("--variants", variants_arg, "all or comma-separated names");

  auto* report = app.add_subcommand("report", "re-emit a stored benchmark report");
  report->add_option("--in", dataset_dir, "directory containing bench_report.txt")->required();
  report->add_option("--format", format, "csv|text");
  report->add_option("--out", out_dir, "output directory (default: --in)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmdSimulate(config_path, out_dir);
    if (match->parsed()) return cmdMatch(dataset_dir, pair_id, prior_opts, lambda, out_path);
    if (estimate->parsed()) {
      return cmdEstimate(dataset_dir, pair_id, scorer_name, weights_path, hypotheses, prior_opts, lambda,
                         corrs_path, out_path);
    }
    if (train->parsed()) {
      return cmdTrainScorer(dataset_dir, out_path, epochs, seed, prior_opts, lambda, hypotheses, features_path);
    }
    if (bench->parsed()) return cmdBench(config_path, out_dir, variants_arg);
    if (report->parsed()) return cmdReport(dataset_dir, format, out_dir);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::cerr << "error: " << msg << '\n';
    return 1;
  }
  return 0;
}
