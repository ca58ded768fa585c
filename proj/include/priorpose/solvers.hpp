#pragma once

#include <stdexcept>
#include <vector>

#include "priorpose/geometry.hpp"

namespace priorpose {

// Thrown when a minimal sample cannot produce a usable epipolar model;
// robust loops catch it and discard the hypothesis.
struct DegenerateHypothesis : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class MinimalSolver { FivePoint, EightPoint };

// All essential-matrix candidates (up to 10) consistent with five
// correspondences in normalized camera coordinates. Nister's scheme:
// 4-dim null space of the epipolar system, the ten cubic constraints
// reduced by Gauss-Jordan elimination, and the degree-10 polynomial in z
// solved through companion-matrix eigenvalues.
std::vector<Eigen::Matrix3d> fivePointCandidates(const std::vector<Eigen::Vector2d>& xa,
                                                 const std::vector<Eigen::Vector2d>& xb);

// Linear solve over >= 8 normalized correspondences, projected onto the
// essential manifold (singular values (s, s, 0), s = mean of the top two).
// irls_rounds > 0 re-solves with Sampson weights, which removes most of the
// algebraic-error bias under noise.
Eigen::Matrix3d eightPointEssential(const std::vector<Eigen::Vector2d>& xa,
                                    const std::vector<Eigen::Vector2d>& xb, int irls_rounds = 0);

// Minimal solve on a hypothesis seed set (pixel coordinates). Five-point
// mode solves on seeds 0-4 and keeps the candidate with the smallest
// Sampson distance on seed 5; eight-point mode needs >= 8 seeds.
EssentialMatrix solveMinimal(const std::vector<PixelCorrespondence>& seeds, const CameraIntrinsics& ka,
                             const CameraIntrinsics& kb, MinimalSolver solver);

// Gauss-Newton on the total Sampson distance over (R, t), normalized
// coordinates. Removes the errors-in-variables bias a linear fit leaves
// behind; used by the coarse-prior fit, not the hypothesis pipeline.
Pose refinePoseSampson(const Pose& initial, const std::vector<Eigen::Vector2d>& xa,
                       const std::vector<Eigen::Vector2d>& xb, int iterations = 5);

}  // namespace priorpose
