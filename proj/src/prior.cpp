#include "priorpose/prior.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>

#include "priorpose/io.hpp"
#include "priorpose/rng.hpp"
#include "priorpose/solvers.hpp"

namespace priorpose {

void FeatureGrid::validate() const {
  if (height <= 0 || width <= 0 || values.rows() != cells() || values.cols() <= 0) {
    throw std::invalid_argument("FeatureGrid: inconsistent dimensions");
  }
  for (int i = 0; i < values.rows(); ++i) {
    if (std::abs(values.row(i).norm() - 1.0) > 1e-6) {
      throw std::invalid_argument("FeatureGrid: cell " + std::to_string(i) + " is not unit norm");
    }
  }
}

void PriorConfig::validate() const {
  if (oracle_sigma_rotation_deg < 0.0 || oracle_sigma_translation_deg < 0.0) {
    throw std::invalid_argument("PriorConfig: noise sigmas must be >= 0");
  }
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) {
    throw std::invalid_argument("PriorConfig: top_fraction must be in (0, 1]");
  }
  if (robust_iterations < 1) throw std::invalid_argument("PriorConfig: robust_iterations must be >= 1");
  if (robust_threshold < 0.0) throw std::invalid_argument("PriorConfig: robust_threshold must be >= 0");
}

CorrespondenceMap correlateGrids(const FeatureGrid& ga, const FeatureGrid& gb) {
  if (ga.depth() != gb.depth()) throw std::invalid_argument("correlateGrids: depth mismatch");
  if (ga.cells() == 0 || gb.cells() == 0) throw std::invalid_argument("correlateGrids: empty grid");

  CorrespondenceMap map;
  map.height = ga.height;
  map.width = ga.width;
  map.cell_to_pixel = ga.cell_to_pixel;
  map.entries.resize(ga.cells(), 5);

  const int nb = gb.cells();
  constexpr int kBlock = 256;
  for (int start = 0; start < ga.cells(); start += kBlock) {
    const int rows = std::min(kBlock, ga.cells() - start);
    const Eigen::MatrixXd scores = ga.values.middleRows(start, rows) * gb.values.transpose();
    for (int r = 0; r < rows; ++r) {
      int best = 0;
      double best_score = scores(r, 0);
      for (int j = 1; j < nb; ++j) {
        if (scores(r, j) > best_score) {  // strict: ties keep the lowest index
          best_score = scores(r, j);
          best = j;
        }
      }
      const int cell = start + r;
      map.entries(cell, 0) = cell % ga.width;
      map.entries(cell, 1) = cell / ga.width;
      map.entries(cell, 2) = best % gb.width;
      map.entries(cell, 3) = best / gb.width;
      map.entries(cell, 4) = std::clamp(best_score, -1.0, 1.0);
    }
  }
  return map;
}

Pose coarsePoseFromMap(const CorrespondenceMap& map, const CameraIntrinsics& ka, const CameraIntrinsics& kb,
                       const PriorConfig& cfg) {
  cfg.validate();

  std::vector<int> usable;
  for (int i = 0; i < map.entries.rows(); ++i) {
    if (map.entries(i, 4) >= cfg.correlation_floor) usable.push_back(i);
  }
  if (usable.size() < 8) {
    throw std::runtime_error("coarsePoseFromMap: fewer than 8 cells above the correlation floor");
  }

  std::stable_sort(usable.begin(), usable.end(),
                   [&](int a, int b) { return map.entries(a, 4) > map.entries(b, 4); });
  const size_t keep = std::max<size_t>(8, static_cast<size_t>(std::ceil(cfg.top_fraction * usable.size())));
  usable.resize(std::min(keep, usable.size()));

  std::vector<PixelCorrespondence> corrs(usable.size());
  std::vector<Eigen::Vector2d> xa(usable.size()), xb(usable.size());
  for (size_t i = 0; i < usable.size(); ++i) {
    const auto row = map.entries.row(usable[i]);
    const Eigen::Vector2d half(0.5, 0.5);
    corrs[i].a = (Eigen::Vector2d(row(0), row(1)) + half) * map.cell_to_pixel;
    corrs[i].b = (Eigen::Vector2d(row(2), row(3)) + half) * map.cell_to_pixel;
    corrs[i].confidence = row(4);
    xa[i] = ka.normalize(corrs[i].a);
    xb[i] = kb.normalize(corrs[i].b);
  }

  Rng rng(cfg.seed);
  const int n = static_cast<int>(corrs.size());
  const double cell = map.cell_to_pixel;
  const double threshold = cfg.robust_threshold > 0.0 ? cfg.robust_threshold : (1.25 * cell) * (1.25 * cell);
  int best_count = -1;
  Eigen::Matrix3d best_e;

  std::vector<Eigen::Vector2d> sa(8), sb(8);
  for (int iter = 0; iter < cfg.robust_iterations; ++iter) {
    std::array<int, 8> pick{};
    for (int k = 0; k < 8; ++k) {
      bool fresh = true;
      do {
        pick[k] = static_cast<int>(rng.uniformInt(n));
        fresh = std::none_of(pick.begin(), pick.begin() + k, [&](int p) { return p == pick[k]; });
      } while (!fresh);
      sa[k] = xa[pick[k]];
      sb[k] = xb[pick[k]];
    }
    Eigen::Matrix3d e;
    try {
      e = eightPointEssential(sa, sb);
    } catch (const DegenerateHypothesis&) {
      continue;
    }
    const FundamentalMatrix f = fundamentalFromEssential(ka, kb, EssentialMatrix::fromMatrix(e));
    int count = 0;
    for (const auto& c : corrs) {
      if (sampsonDistance(f, c.a, c.b) < threshold) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best_e = e;
    }
  }
  if (best_count < 0) throw std::runtime_error("coarsePoseFromMap: all robust-fit samples were degenerate");

  // Consensus refitting rounds pull the quantization noise down and shed
  // boundary contaminants picked up by the minimal sample.
  Eigen::Matrix3d final_e = best_e;
  std::vector<PixelCorrespondence> inliers;
  for (int round = 0; round < 3; ++round) {
    const FundamentalMatrix f = fundamentalFromEssential(ka, kb, EssentialMatrix::fromMatrix(final_e));
    std::vector<Eigen::Vector2d> ia, ib;
    inliers.clear();
    for (int i = 0; i < n; ++i) {
      if (sampsonDistance(f, corrs[i].a, corrs[i].b) < threshold) {
        ia.push_back(xa[i]);
        ib.push_back(xb[i]);
        inliers.push_back(corrs[i]);
      }
    }
    if (ia.size() < 8) break;
    try {
      final_e = eightPointEssential(ia, ib, /*irls_rounds=*/3);
    } catch (const DegenerateHypothesis&) {
      break;
    }
  }
  if (inliers.empty()) throw std::runtime_error("coarsePoseFromMap: empty consensus set");

  const auto candidates = decomposeEssential(EssentialMatrix::fromMatrix(final_e));
  const Pose selected = cheiralitySelect(candidates, inliers, ka, kb);

  // Final Sampson polish over a tightened consensus; cell centers carry up
  // to half a cell of quantization, and boundary contaminants near the full
  // gate would otherwise drag the least-squares fit.
  const FundamentalMatrix f_final = fundamentalFromEssential(ka, kb, EssentialMatrix::fromMatrix(final_e));
  std::vector<Eigen::Vector2d> pa, pb;
  for (const auto& c : inliers) {
    if (sampsonDistance(f_final, c.a, c.b) < 0.25 * threshold) {
      pa.push_back(ka.normalize(c.a));
      pb.push_back(kb.normalize(c.b));
    }
  }
  if (pa.size() < 50) {
    pa.clear();
    pb.clear();
    for (const auto& c : inliers) {
      pa.push_back(ka.normalize(c.a));
      pb.push_back(kb.normalize(c.b));
    }
  }
  if (pa.size() < 8) return selected;
  return refinePoseSampson(selected, pa, pb, 6);
}

Pose noisyOraclePrior(const Pose& truth, const PriorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);

  const double rot_angle = radians(std::abs(rng.normal(cfg.oracle_sigma_rotation_deg)));
  const Eigen::Vector3d axis = rng.unitVector3();
  const Eigen::Quaterniond perturb(Eigen::AngleAxisd(rot_angle, axis));

  const double tilt = radians(std::abs(rng.normal(cfg.oracle_sigma_translation_deg)));
  Eigen::Vector3d ortho;
  do {
    ortho = rng.unitVector3();
    ortho -= ortho.dot(truth.translation) * truth.translation;
  } while (ortho.norm() < 1e-9);
  ortho.normalize();

  const Eigen::Vector3d tilted = std::cos(tilt) * truth.translation + std::sin(tilt) * ortho;
  return Pose(perturb * truth.rotation, tilted);
}

void writeFeatureGrid(std::ostream& out, const FeatureGrid& grid) {
  out << grid.height << ' ' << grid.width << ' ' << grid.depth() << ' ' << fmtDouble(grid.cell_to_pixel) << '\n';
  for (int i = 0; i < grid.values.rows(); ++i) {
    for (int d = 0; d < grid.depth(); ++d) {
      if (d) out << ' ';
      out << fmtDouble(grid.values(i, d));
    }
    out << '\n';
  }
}

FeatureGrid readFeatureGrid(std::istream& in) {
  FeatureGrid grid;
  int depth = 0;
  if (!(in >> grid.height >> grid.width >> depth >> grid.cell_to_pixel) || grid.height <= 0 || grid.width <= 0 ||
      depth <= 0) {
    throw std::runtime_error("feature grid file: bad header");
  }
  grid.values.resize(grid.cells(), depth);
  for (int i = 0; i < grid.cells(); ++i) {
    for (int d = 0; d < depth; ++d) {
      if (!(in >> grid.values(i, d))) {
        throw std::runtime_error("feature grid file: truncated at cell " + std::to_string(i));
      }
    }
  }
  return grid;
}

}  // namespace priorpose
