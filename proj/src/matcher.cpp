#include "priorpose/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "priorpose/io.hpp"

namespace priorpose {

void KeypointSet::validate() const {
  if (positions.rows() != descriptors.rows()) {
    throw std::invalid_argument("KeypointSet: positions/descriptors size mismatch");
  }
  for (int i = 0; i < descriptors.rows(); ++i) {
    if (std::abs(descriptors.row(i).norm() - 1.0) > 1e-6) {
      throw std::invalid_argument("KeypointSet: descriptor " + std::to_string(i) + " is not unit norm");
    }
  }
}

Eigen::Matrix<double, Eigen::Dynamic, 2> normalizeKeypoints(const KeypointSet& kps, const CameraIntrinsics& k) {
  Eigen::Matrix<double, Eigen::Dynamic, 2> out(kps.size(), 2);
  for (int i = 0; i < kps.size(); ++i) {
    out.row(i) = k.normalize(kps.positions.row(i).transpose()).transpose();
  }
  return out;
}

Eigen::MatrixXd epipolarPenaltyMatrix(const Pose& prior, const KeypointSet& ka_set, const KeypointSet& kb_set,
                                      const CameraIntrinsics& ka, const CameraIntrinsics& kb,
                                      const MatcherConfig& cfg) {
  const int na = ka_set.size();
  const int nb = kb_set.size();
  Eigen::MatrixXd penalty = Eigen::MatrixXd::Zero(na, nb);
  if (cfg.epipolar_weight == 0.0 || na == 0 || nb == 0) return penalty;

  // Normalized coordinates, so the essential matrix is the fundamental
  // matrix of the prior.
  const EssentialMatrix e = EssentialMatrix::fromPose(prior);
  const auto xa = normalizeKeypoints(ka_set, ka);
  const auto xb = normalizeKeypoints(kb_set, kb);

  const double tau2 = cfg.epipolar_saturation * cfg.epipolar_saturation;
  for (int i = 0; i < na; ++i) {
    const Eigen::Vector3d line = e.m * Eigen::Vector3d(xa(i, 0), xa(i, 1), 1.0);
    const double ab = std::hypot(line.x(), line.y());
    for (int j = 0; j < nb; ++j) {
      double d2;
      if (ab < 1e-300) {
        d2 = tau2;  // point at the epipole, no usable line: saturate
      } else {
        const double d = (line.x() * xb(j, 0) + line.y() * xb(j, 1) + line.z()) / ab;
        d2 = d * d;
      }
      penalty(i, j) = cfg.epipolar_weight * std::min(d2, tau2) / tau2;
    }
  }
  return penalty;
}

Eigen::MatrixXd scoreMatrix(const KeypointSet& ka_set, const KeypointSet& kb_set, const Eigen::MatrixXd& penalty,
                            const MatcherConfig& cfg) {
  if (penalty.rows() != ka_set.size() || penalty.cols() != kb_set.size()) {
    throw std::invalid_argument("scoreMatrix: penalty dimensions do not match keypoint sets");
  }
  Eigen::MatrixXd s = ka_set.descriptors * kb_set.descriptors.transpose();
  s /= std::sqrt(cfg.descriptor_scale);
  s -= penalty;
  return s;
}

SinkhornResult sinkhornAssign(const Eigen::MatrixXd& scores, const MatcherConfig& cfg) {
  if (!scores.allFinite()) throw std::invalid_argument("sinkhornAssign: non-finite scores");
  const int na = static_cast<int>(scores.rows());
  const int nb = static_cast<int>(scores.cols());

  Eigen::MatrixXd z(na + 1, nb + 1);
  z.topLeftCorner(na, nb) = scores;
  z.row(na).setConstant(cfg.dustbin_score);
  z.col(nb).setConstant(cfg.dustbin_score);

  Eigen::VectorXd log_r(na + 1), log_c(nb + 1);
  log_r.head(na).setZero();
  log_r(na) = std::log(static_cast<double>(std::max(nb, 1)));
  log_c.head(nb).setZero();
  log_c(nb) = std::log(static_cast<double>(std::max(na, 1)));

  Eigen::VectorXd u = Eigen::VectorXd::Zero(na + 1);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(nb + 1);

  auto row_lse = [&](Eigen::MatrixXd& m) -> Eigen::VectorXd {
    const Eigen::VectorXd row_max = m.rowwise().maxCoeff();
    m.colwise() -= row_max;
    return row_max.array() + m.array().exp().rowwise().sum().log();
  };

  SinkhornResult result;
  result.marginal_violation = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd work;
  int it = 0;
  for (; it < cfg.sinkhorn_iterations; ++it) {
    work = z.rowwise() + v.transpose();
    u = log_r - row_lse(work);
    work = (z.colwise() + u).transpose();
    v = log_c - row_lse(work);

    // Columns are exact after the v-update; convergence is measured on rows.
    work = z.rowwise() + v.transpose();
    const Eigen::VectorXd row_mass = (row_lse(work) + u).array().exp();
    result.marginal_violation = (row_mass - log_r.array().exp().matrix()).cwiseAbs().maxCoeff();
    if (result.marginal_violation < cfg.sinkhorn_tolerance) {
      result.converged = true;
      ++it;
      break;
    }
  }
  result.iterations = it;
  result.plan = ((z.colwise() + u).rowwise() + v.transpose()).array().exp();

  if (result.converged && result.marginal_violation >= cfg.sinkhorn_tolerance) {
    throw std::logic_error("sinkhornAssign: converged run violates marginal feasibility");
  }
  return result;
}

MatchResult extractMatches(const Eigen::MatrixXd& plan, const MatcherConfig& cfg) {
  const int na = static_cast<int>(plan.rows()) - 1;
  const int nb = static_cast<int>(plan.cols()) - 1;
  if (na < 0 || nb < 0) throw std::invalid_argument("extractMatches: plan must include dustbins");

  std::vector<int> col_argmax(nb, -1);
  if (cfg.mutual_check) {
    for (int j = 0; j < nb; ++j) {
      double best = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < na; ++i) {
        if (plan(i, j) > best) {
          best = plan(i, j);
          col_argmax[j] = i;
        }
      }
    }
  }

  MatchResult out;
  std::vector<int> col_taken(nb, -1);  // winning match index per column
  for (int i = 0; i < na; ++i) {
    int jbest = -1;
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < nb; ++j) {
      if (plan(i, j) > best) {  // ties keep the lowest column index
        best = plan(i, j);
        jbest = j;
      }
    }
    if (jbest < 0 || best < cfg.confidence_threshold) continue;
    if (cfg.mutual_check && col_argmax[jbest] != i) continue;

    if (col_taken[jbest] >= 0) {
      // Without the mutual check two rows may claim one column; the higher
      // confidence wins, earlier row on ties.
      if (out[col_taken[jbest]].confidence >= best) continue;
      out[col_taken[jbest]] = {i, jbest, best};
    } else {
      col_taken[jbest] = static_cast<int>(out.size());
      out.push_back({i, jbest, best});
    }
  }
  return out;
}

MatchResult matchKeypoints(const KeypointSet& ka_set, const KeypointSet& kb_set, const Pose* prior,
                           const CameraIntrinsics& ka, const CameraIntrinsics& kb, const MatcherConfig& cfg) {
  if (ka_set.size() == 0 || kb_set.size() == 0) return {};
  Eigen::MatrixXd penalty;
  if (prior != nullptr && cfg.epipolar_weight > 0.0) {
    penalty = epipolarPenaltyMatrix(*prior, ka_set, kb_set, ka, kb, cfg);
  } else {
    penalty = Eigen::MatrixXd::Zero(ka_set.size(), kb_set.size());
  }
  const Eigen::MatrixXd scores = scoreMatrix(ka_set, kb_set, penalty, cfg);
  const SinkhornResult plan = sinkhornAssign(scores, cfg);
  return extractMatches(plan.plan, cfg);
}

void writeKeypointSet(std::ostream& out, const KeypointSet& kps) {
  out << kps.size() << ' ' << kps.descriptorDim() << '\n';
  for (int i = 0; i < kps.size(); ++i) {
    out << fmtDouble(kps.positions(i, 0)) << ' ' << fmtDouble(kps.positions(i, 1));
    for (int d = 0; d < kps.descriptorDim(); ++d) out << ' ' << fmtDouble(kps.descriptors(i, d));
    out << '\n';
  }
}

KeypointSet readKeypointSet(std::istream& in) {
  int n = 0, dim = 0;
  if (!(in >> n >> dim) || n < 0 || dim <= 0) throw std::runtime_error("keypoint file: bad header");
  KeypointSet kps;
  kps.positions.resize(n, 2);
  kps.descriptors.resize(n, dim);
  for (int i = 0; i < n; ++i) {
    if (!(in >> kps.positions(i, 0) >> kps.positions(i, 1))) {
      throw std::runtime_error("keypoint file: truncated at keypoint " + std::to_string(i));
    }
    for (int d = 0; d < dim; ++d) {
      if (!(in >> kps.descriptors(i, d))) {
        throw std::runtime_error("keypoint file: truncated descriptor at keypoint " + std::to_string(i));
      }
    }
  }
  return kps;
}

void writeMatches(std::ostream& out, const MatchResult& matches) {
  for (const Match& m : matches) {
    out << m.index_a << ' ' << m.index_b << ' ' << fmtDouble(m.confidence) << '\n';
  }
}

MatchResult readMatches(std::istream& in) {
  MatchResult out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Match m;
    if (ls >> m.index_a >> m.index_b >> m.confidence) out.push_back(m);
  }
  return out;
}

}  // namespace priorpose
