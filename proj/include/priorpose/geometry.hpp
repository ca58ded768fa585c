#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace priorpose {

// Pose convention used everywhere: x_B ~ R x_A + t for camera-frame points,
// so E = [t]x R and p_B^T F p_A = 0 with F = K_B^-T E K_A^-1.

template <typename Scalar> using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar> using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar> using Vec2 = Eigen::Matrix<Scalar, 2, 1>;

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  CameraIntrinsics() = default;
  CameraIntrinsics(double fx_, double fy_, double cx_, double cy_) : fx(fx_), fy(fy_), cx(cx_), cy(cy_) {
    if (fx <= 0.0 || fy <= 0.0) throw std::invalid_argument("CameraIntrinsics: focal lengths must be positive");
  }

  static CameraIntrinsics identity() { return {}; }

  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }

  Eigen::Matrix3d inverseMatrix() const {
    Eigen::Matrix3d ki;
    ki << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
    return ki;
  }

  // Pixel -> normalized camera coordinates.
  Eigen::Vector2d normalize(const Eigen::Vector2d& px) const {
    return {(px.x() - cx) / fx, (px.y() - cy) / fy};
  }

  Eigen::Vector2d denormalize(const Eigen::Vector2d& xn) const {
    return {fx * xn.x() + cx, fy * xn.y() + cy};
  }

  Eigen::Vector2d project(const Eigen::Vector3d& x_cam) const {
    return {fx * x_cam.x() / x_cam.z() + cx, fy * x_cam.y() / x_cam.z() + cy};
  }
};

// Rotation as a unit quaternion (canonical non-negative scalar part) plus a
// unit translation direction; two-view scale is unobservable.
struct Pose {
  Eigen::Quaterniond rotation{1.0, 0.0, 0.0, 0.0};
  Eigen::Vector3d translation{0.0, 0.0, 1.0};

  Pose() = default;
  Pose(const Eigen::Quaterniond& q, const Eigen::Vector3d& t) : rotation(q.normalized()), translation(t) {
    const double n = translation.norm();
    if (n < 1e-12) throw std::invalid_argument("Pose: translation direction must be nonzero");
    translation /= n;
    canonicalize();
  }

  static Pose fromRt(const Eigen::Matrix3d& r, const Eigen::Vector3d& t) {
    return Pose(Eigen::Quaterniond(r), t);
  }

  Eigen::Matrix3d rotationMatrix() const { return rotation.toRotationMatrix(); }

  // Scalar-last (x, y, z, w) layout used for serialization.
  Eigen::Vector4d quaternionXyzw() const {
    return {rotation.x(), rotation.y(), rotation.z(), rotation.w()};
  }

  void canonicalize() {
    if (rotation.w() < 0.0) rotation.coeffs() = -rotation.coeffs();
  }
};

struct PoseError {
  double rotation_deg = 0.0;
  double translation_deg = 0.0;
  double combined_deg = 0.0;
};

template <typename Derived>
Mat3<typename Derived::Scalar> skew(const Eigen::MatrixBase<Derived>& v) {
  EIGEN_STATIC_ASSERT_VECTOR_SPECIFIC_SIZE(Derived, 3);
  using Scalar = typename Derived::Scalar;
  Mat3<Scalar> m;
  m << Scalar(0), -v(2), v(1), v(2), Scalar(0), -v(0), -v(1), v(0), Scalar(0);
  return m;
}

inline double degrees(double radians) { return radians * 180.0 / M_PI; }
inline double radians(double deg) { return deg * M_PI / 180.0; }

// Rank-2, unit-Frobenius fundamental matrix.
struct FundamentalMatrix {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();

  FundamentalMatrix() = default;

  // For matrices that are rank 2 by construction ([t]x R sandwiches).
  static FundamentalMatrix fromRank2(const Eigen::Matrix3d& f) {
    FundamentalMatrix out;
    const double n = f.norm();
    if (n < 1e-300) throw std::invalid_argument("FundamentalMatrix: zero matrix");
    out.m = f / n;
    return out;
  }

  // Projects an arbitrary 3x3 (e.g. a linear least-squares fit) onto rank 2.
  static FundamentalMatrix fromMatrix(const Eigen::Matrix3d& f) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Vector3d s = svd.singularValues();
    s.z() = 0.0;
    return fromRank2(svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose());
  }
};

// Essential matrix projected onto the (sigma, sigma, 0) manifold and scaled
// to unit Frobenius norm, so candidates from different solvers compare
// directly.
struct EssentialMatrix {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();

  EssentialMatrix() = default;

  static EssentialMatrix fromMatrix(const Eigen::Matrix3d& e) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(e, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d s = svd.singularValues();
    if (s(1) < 1e-12 * std::max(s(0), 1e-300)) {
      throw std::invalid_argument("EssentialMatrix: rank-deficient input");
    }
    const double sigma = 1.0 / std::sqrt(2.0);
    Eigen::Vector3d proj(sigma, sigma, 0.0);
    EssentialMatrix out;
    out.m = svd.matrixU() * proj.asDiagonal() * svd.matrixV().transpose();
    return out;
  }

  static EssentialMatrix fromPose(const Pose& pose) {
    return fromMatrix(skew(pose.translation) * pose.rotationMatrix());
  }
};

// Homogeneous line, normalized to a unit 3-vector.
struct EpipolarLine {
  Eigen::Vector3d abc = Eigen::Vector3d::Zero();

  double signedDistance(const Eigen::Vector2d& p) const {
    const double n = std::hypot(abc.x(), abc.y());
    if (n < 1e-300) return std::numeric_limits<double>::infinity();
    return (abc.x() * p.x() + abc.y() * p.y() + abc.z()) / n;
  }

  double distance(const Eigen::Vector2d& p) const { return std::abs(signedDistance(p)); }
};

enum class LineDirection { AtoB, BtoA };

inline FundamentalMatrix fundamentalFromPose(const CameraIntrinsics& ka, const CameraIntrinsics& kb,
                                             const Pose& pose) {
  const Eigen::Matrix3d f =
      kb.inverseMatrix().transpose() * skew(pose.translation) * pose.rotationMatrix() * ka.inverseMatrix();
  return FundamentalMatrix::fromRank2(f);
}

inline FundamentalMatrix fundamentalFromEssential(const CameraIntrinsics& ka, const CameraIntrinsics& kb,
                                                  const EssentialMatrix& e) {
  return FundamentalMatrix::fromRank2(kb.inverseMatrix().transpose() * e.m * ka.inverseMatrix());
}

inline EpipolarLine epipolarLine(const FundamentalMatrix& f, const Eigen::Vector2d& p, LineDirection dir) {
  const Eigen::Vector3d ph(p.x(), p.y(), 1.0);
  Eigen::Vector3d l = dir == LineDirection::AtoB ? Eigen::Vector3d(f.m * ph) : Eigen::Vector3d(f.m.transpose() * ph);
  const double n = l.norm();
  if (n > 1e-300) l /= n;
  return {l};
}

// First-order geometric error of a correspondence under F; +inf when both
// points sit at the epipoles (degenerate denominator), so robust loops can
// treat it as an outlier instead of aborting.
template <typename DerivedF, typename DerivedA, typename DerivedB>
typename DerivedF::Scalar sampsonDistance(const Eigen::MatrixBase<DerivedF>& f,
                                          const Eigen::MatrixBase<DerivedA>& pa,
                                          const Eigen::MatrixBase<DerivedB>& pb) {
  using Scalar = typename DerivedF::Scalar;
  const Vec3<Scalar> xa(pa(0), pa(1), Scalar(1));
  const Vec3<Scalar> xb(pb(0), pb(1), Scalar(1));
  const Vec3<Scalar> fa = f * xa;
  const Vec3<Scalar> ftb = f.transpose() * xb;
  const Scalar num = xb.dot(fa);
  const Scalar den = fa(0) * fa(0) + fa(1) * fa(1) + ftb(0) * ftb(0) + ftb(1) * ftb(1);
  if (den == Scalar(0)) return std::numeric_limits<Scalar>::infinity();
  return num * num / den;
}

inline double sampsonDistance(const FundamentalMatrix& f, const Eigen::Vector2d& pa, const Eigen::Vector2d& pb) {
  return sampsonDistance(f.m, pa, pb);
}

// The four (R, +-t) candidates of the SVD-based decomposition.
inline std::array<Pose, 4> decomposeEssential(const EssentialMatrix& e) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(e.m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d s = svd.singularValues();
  if (s(1) < 1e-9 * std::max(s(0), 1e-300)) {
    throw std::invalid_argument("decomposeEssential: matrix has rank < 2");
  }
  Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d v = svd.matrixV();
  if (u.determinant() < 0.0) u.col(2) *= -1.0;
  if (v.determinant() < 0.0) v.col(2) *= -1.0;

  Eigen::Matrix3d w;
  w << 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0;
  const Eigen::Matrix3d r1 = u * w * v.transpose();
  const Eigen::Matrix3d r2 = u * w.transpose() * v.transpose();
  const Eigen::Vector3d t = u.col(2);

  return {Pose::fromRt(r1, t), Pose::fromRt(r1, -t), Pose::fromRt(r2, t), Pose::fromRt(r2, -t)};
}

struct PixelCorrespondence {
  Eigen::Vector2d a = Eigen::Vector2d::Zero();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  double confidence = 1.0;
};

// Homogeneous DLT triangulation in normalized camera coordinates,
// P_A = [I|0], P_B = [R|t].
inline Eigen::Vector4d triangulateDlt(const Eigen::Matrix3d& r, const Eigen::Vector3d& t,
                                      const Eigen::Vector2d& xa, const Eigen::Vector2d& xb) {
  Eigen::Matrix<double, 3, 4> pb;
  pb.leftCols<3>() = r;
  pb.col(3) = t;
  Eigen::Matrix4d a;
  a.row(0) << -1.0, 0.0, xa.x(), 0.0;
  a.row(1) << 0.0, -1.0, xa.y(), 0.0;
  a.row(2) = xb.x() * pb.row(2) - pb.row(0);
  a.row(3) = xb.y() * pb.row(2) - pb.row(1);
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(a, Eigen::ComputeFullV);
  return svd.matrixV().col(3);
}

// Picks the decomposition candidate with the most points triangulating in
// front of both cameras.
inline Pose cheiralitySelect(const std::array<Pose, 4>& candidates, const std::vector<PixelCorrespondence>& corrs,
                             const CameraIntrinsics& ka, const CameraIntrinsics& kb) {
  if (corrs.empty()) throw std::invalid_argument("cheiralitySelect: no correspondences");

  int best = -1;
  int best_count = 0;
  for (int c = 0; c < 4; ++c) {
    const Eigen::Matrix3d r = candidates[c].rotationMatrix();
    const Eigen::Vector3d& t = candidates[c].translation;
    int count = 0;
    for (const auto& corr : corrs) {
      const Eigen::Vector2d xa = ka.normalize(corr.a);
      const Eigen::Vector2d xb = kb.normalize(corr.b);
      const Eigen::Vector4d xh = triangulateDlt(r, t, xa, xb);
      const double za = xh.z() * xh.w();
      const double zb = (r.row(2).dot(xh.head<3>()) + t.z() * xh.w()) * xh.w();
      if (za > 0.0 && zb > 0.0) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best = c;
    }
  }
  if (best < 0) throw std::runtime_error("cheiralitySelect: no candidate places any point in front of both cameras");
  return candidates[best];
}

// Pose error per the max-of-angles metric: rotation angle of R_est^T R_gt,
// angle between translation directions in [0, 180], combined = max of both.
inline PoseError poseError(const Pose& estimate, const Pose& truth) {
  const Eigen::Quaterniond dq = estimate.rotation.conjugate() * truth.rotation;
  const double rot = 2.0 * std::atan2(dq.vec().norm(), std::abs(dq.w()));

  const Eigen::Vector3d& te = estimate.translation;
  const Eigen::Vector3d& tt = truth.translation;
  const double trans = std::atan2(te.cross(tt).norm(), te.dot(tt));

  PoseError err;
  err.rotation_deg = degrees(rot);
  err.translation_deg = degrees(trans);
  err.combined_deg = std::max(err.rotation_deg, err.translation_deg);
  return err;
}

}  // namespace priorpose
