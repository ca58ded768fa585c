#include "priorpose/solvers.hpp"

#include <array>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace priorpose {

namespace {

// Monomials of (x, y, z) up to total degree 3, ordered so that Gauss-Jordan
// elimination of the first ten columns leaves only monomials of the form
// x*z^n, y*z^n, z^n:
// [x^3, y^3, x^2 y, x y^2, x^2 z, x^2, y^2 z, y^2, x y z, x y |
//  x z^2, x z, x, y z^2, y z, y, z^3, z^2, z, 1]
constexpr int kMonomialExp[20][3] = {
    {3, 0, 0}, {0, 3, 0}, {2, 1, 0}, {1, 2, 0}, {2, 0, 1}, {2, 0, 0}, {0, 2, 1},
    {0, 2, 0}, {1, 1, 1}, {1, 1, 0}, {1, 0, 2}, {1, 0, 1}, {1, 0, 0}, {0, 1, 2},
    {0, 1, 1}, {0, 1, 0}, {0, 0, 3}, {0, 0, 2}, {0, 0, 1}, {0, 0, 0}};

using Poly20 = Eigen::Matrix<double, 20, 1>;

constexpr std::array<std::array<std::array<int, 4>, 4>, 4> makeMonomialTable() {
  std::array<std::array<std::array<int, 4>, 4>, 4> table{};
  for (auto& plane : table)
    for (auto& row : plane) row.fill(-1);
  for (int i = 0; i < 20; ++i) table[kMonomialExp[i][0]][kMonomialExp[i][1]][kMonomialExp[i][2]] = i;
  return table;
}

constexpr auto kMonomialIndex = makeMonomialTable();

Poly20 polyMul(const Poly20& a, const Poly20& b) {
  Poly20 out = Poly20::Zero();
  for (int i = 0; i < 20; ++i) {
    if (a[i] == 0.0) continue;
    for (int j = 0; j < 20; ++j) {
      if (b[j] == 0.0) continue;
      const int dx = kMonomialExp[i][0] + kMonomialExp[j][0];
      const int dy = kMonomialExp[i][1] + kMonomialExp[j][1];
      const int dz = kMonomialExp[i][2] + kMonomialExp[j][2];
      const int idx = kMonomialIndex[dx][dy][dz];
      if (idx < 0) throw std::logic_error("polyMul: degree > 3");
      out[idx] += a[i] * b[j];
    }
  }
  return out;
}

// x2^T E x1 = 0 stacked row-major over E's entries.
Eigen::Matrix<double, 1, 9> epipolarRow(const Eigen::Vector2d& x1, const Eigen::Vector2d& x2) {
  Eigen::Matrix<double, 1, 9> row;
  row << x2.x() * x1.x(), x2.x() * x1.y(), x2.x(), x2.y() * x1.x(), x2.y() * x1.y(), x2.y(), x1.x(), x1.y(), 1.0;
  return row;
}

// Constraint matrix over the monomial basis: det(E) = 0 plus the nine
// entries of (E E^T - 1/2 tr(E E^T) I) E = 0, with E = x B0 + y B1 + z B2 + B3.
Eigen::Matrix<double, 10, 20> polynomialConstraints(const Eigen::Matrix<double, 9, 4>& basis) {
  Poly20 e[3][3];
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      Poly20 p = Poly20::Zero();
      p[12] = basis(3 * i + j, 0);  // x
      p[15] = basis(3 * i + j, 1);  // y
      p[18] = basis(3 * i + j, 2);  // z
      p[19] = basis(3 * i + j, 3);  // 1
      e[i][j] = p;
    }
  }

  Eigen::Matrix<double, 10, 20> m;
  int row = 0;

  const Poly20 det = polyMul(polyMul(e[0][1], e[1][2]) - polyMul(e[0][2], e[1][1]), e[2][0]) +
                     polyMul(polyMul(e[0][2], e[1][0]) - polyMul(e[0][0], e[1][2]), e[2][1]) +
                     polyMul(polyMul(e[0][0], e[1][1]) - polyMul(e[0][1], e[1][0]), e[2][2]);
  m.row(row++) = det;

  Poly20 eet[3][3];
  for (int i = 0; i < 3; ++i) {
    for (int j = i; j < 3; ++j) {
      eet[i][j] = polyMul(e[i][0], e[j][0]) + polyMul(e[i][1], e[j][1]) + polyMul(e[i][2], e[j][2]);
      if (i != j) eet[j][i] = eet[i][j];
    }
  }
  const Poly20 half_trace = 0.5 * (eet[0][0] + eet[1][1] + eet[2][2]);
  for (int i = 0; i < 3; ++i) eet[i][i] -= half_trace;

  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      m.row(row++) = polyMul(eet[i][0], e[0][j]) + polyMul(eet[i][1], e[1][j]) + polyMul(eet[i][2], e[2][j]);
    }
  }
  return m;
}

// Coefficients (ascending) of the degree-10 determinant polynomial and the
// 3x13 reduced system B(z) [x y 1]^T = 0.
struct ReducedSystem {
  // Row k: x-poly (deg 3), y-poly (deg 3), constant poly (deg 4), ascending.
  std::array<Eigen::Matrix<double, 4, 1>, 3> a;
  std::array<Eigen::Matrix<double, 4, 1>, 3> b;
  std::array<Eigen::Matrix<double, 5, 1>, 3> c;
};

ReducedSystem reduceConstraints(const Eigen::Matrix<double, 10, 10>& aa) {
  // Pairing (hi, lo): z * <lo-row lead> and <hi-row lead> are the same
  // monomial, so hi - z*lo cancels the leading terms and only x z^n, y z^n,
  // z^n monomials remain.
  constexpr int kPairs[3][2] = {{4, 5}, {6, 7}, {8, 9}};
  ReducedSystem sys;
  for (int k = 0; k < 3; ++k) {
    const auto hi = aa.row(kPairs[k][0]);
    const auto lo = aa.row(kPairs[k][1]);
    sys.a[k] << hi(2), hi(1) - lo(2), hi(0) - lo(1), -lo(0);
    sys.b[k] << hi(5), hi(4) - lo(5), hi(3) - lo(4), -lo(3);
    sys.c[k] << hi(9), hi(8) - lo(9), hi(7) - lo(8), hi(6) - lo(7), -lo(6);
  }
  return sys;
}

Eigen::VectorXd convolve(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(p.size() + q.size() - 1);
  for (int i = 0; i < p.size(); ++i) {
    for (int j = 0; j < q.size(); ++j) out[i + j] += p[i] * q[j];
  }
  return out;
}

Eigen::VectorXd determinantPolynomial(const ReducedSystem& s) {
  auto minor2 = [](const Eigen::VectorXd& p1, const Eigen::VectorXd& q1, const Eigen::VectorXd& p2,
                   const Eigen::VectorXd& q2) -> Eigen::VectorXd { return convolve(p1, q2) - convolve(p2, q1); };
  // Expansion along the first row: a0 (b1 c2 - b2 c1) - b0 (a1 c2 - a2 c1) + c0 (a1 b2 - a2 b1).
  const Eigen::VectorXd t0 = minor2(s.b[1], s.c[1], s.b[2], s.c[2]);
  const Eigen::VectorXd t1 = minor2(s.a[1], s.c[1], s.a[2], s.c[2]);
  const Eigen::VectorXd t2 = minor2(s.a[1], s.b[1], s.a[2], s.b[2]);
  // Every product below has degree exactly 10.
  return convolve(s.a[0], t0) - convolve(s.b[0], t1) + convolve(s.c[0], t2);
}

double polyEval(const Eigen::VectorXd& p, double z) {
  long double acc = 0.0;
  for (int i = static_cast<int>(p.size()) - 1; i >= 0; --i) acc = acc * z + p[i];
  return static_cast<double>(acc);
}

double polyEvalDerivative(const Eigen::VectorXd& p, double z) {
  long double acc = 0.0;
  for (int i = static_cast<int>(p.size()) - 1; i >= 1; --i) acc = acc * z + i * p[i];
  return static_cast<double>(acc);
}

std::vector<double> realRoots(Eigen::VectorXd coeffs) {
  // Trim near-zero leading coefficients so the companion matrix stays sane.
  int degree = static_cast<int>(coeffs.size()) - 1;
  const double scale = coeffs.cwiseAbs().maxCoeff();
  if (scale == 0.0) return {};
  while (degree > 0 && std::abs(coeffs[degree]) < 1e-13 * scale) --degree;
  if (degree < 1) return {};
  coeffs.conservativeResize(degree + 1);

  // Substituting z = s w balances the coefficient range, which the
  // unbalanced companion eigensolve is sensitive to.
  double s = 1.0;
  if (coeffs[0] != 0.0) {
    s = std::pow(std::abs(coeffs[0] / coeffs[degree]), 1.0 / degree);
    s = std::clamp(s, 1e-3, 1e3);
  }
  Eigen::VectorXd scaled = coeffs;
  double power = 1.0;
  for (int i = 0; i <= degree; ++i) {
    scaled[i] *= power;
    power *= s;
  }

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  for (int i = 1; i < degree; ++i) companion(i, i - 1) = 1.0;
  for (int i = 0; i < degree; ++i) companion(i, degree - 1) = -scaled[i] / scaled[degree];

  Eigen::EigenSolver<Eigen::MatrixXd> eig(companion, /*computeEigenvectors=*/false);
  std::vector<double> roots;
  for (int i = 0; i < degree; ++i) {
    const std::complex<double> r = eig.eigenvalues()[i];
    if (std::abs(r.imag()) * s >= 1e-8) continue;
    double z = r.real() * s;
    // Newton polish on the unscaled polynomial.
    for (int it = 0; it < 10; ++it) {
      const double f = polyEval(coeffs, z);
      const double df = polyEvalDerivative(coeffs, z);
      if (df == 0.0) break;
      const double step = f / df;
      if (!std::isfinite(step)) break;
      z -= step;
      if (std::abs(step) <= 1e-15 * (1.0 + std::abs(z))) break;
    }
    roots.push_back(z);
  }
  return roots;
}

Eigen::Matrix<double, 20, 1> monomials(double x, double y, double z) {
  Eigen::Matrix<double, 20, 1> m;
  for (int i = 0; i < 20; ++i) {
    m[i] = std::pow(x, kMonomialExp[i][0]) * std::pow(y, kMonomialExp[i][1]) * std::pow(z, kMonomialExp[i][2]);
  }
  return m;
}

// Gauss-Newton on the ten cubic constraints; eigenvalue roots land close but
// near-double roots need the extra polish, and near-real complex pairs are
// exposed by a residual that refuses to drop.
double refineSolution(const Eigen::Matrix<double, 10, 20>& constraints, double& x, double& y, double& z) {
  double residual = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 8; ++it) {
    const Eigen::Matrix<double, 10, 1> g = constraints * monomials(x, y, z);
    residual = g.norm();
    Eigen::Matrix<double, 20, 3> dm = Eigen::Matrix<double, 20, 3>::Zero();
    for (int i = 0; i < 20; ++i) {
      const int ex = kMonomialExp[i][0], ey = kMonomialExp[i][1], ez = kMonomialExp[i][2];
      if (ex > 0) dm(i, 0) = ex * std::pow(x, ex - 1) * std::pow(y, ey) * std::pow(z, ez);
      if (ey > 0) dm(i, 1) = ey * std::pow(x, ex) * std::pow(y, ey - 1) * std::pow(z, ez);
      if (ez > 0) dm(i, 2) = ez * std::pow(x, ex) * std::pow(y, ey) * std::pow(z, ez - 1);
    }
    const Eigen::Matrix<double, 10, 3> j = constraints * dm;
    const Eigen::Vector3d step = (j.transpose() * j).ldlt().solve(j.transpose() * g);
    if (!step.allFinite()) break;
    x -= step.x();
    y -= step.y();
    z -= step.z();
    if (step.norm() <= 1e-15 * (1.0 + std::abs(x) + std::abs(y) + std::abs(z))) break;
  }
  return (constraints * monomials(x, y, z)).norm();
}

}  // namespace

std::vector<Eigen::Matrix3d> fivePointCandidates(const std::vector<Eigen::Vector2d>& xa,
                                                 const std::vector<Eigen::Vector2d>& xb) {
  if (xa.size() < 5 || xb.size() < 5) throw std::invalid_argument("fivePointCandidates: need 5 correspondences");

  Eigen::Matrix<double, 5, 9> q;
  for (int i = 0; i < 5; ++i) q.row(i) = epipolarRow(xa[i], xb[i]);

  Eigen::JacobiSVD<Eigen::Matrix<double, 5, 9>> svd(q, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 4> basis = svd.matrixV().rightCols<4>();

  const Eigen::Matrix<double, 10, 20> constraints = polynomialConstraints(basis);
  Eigen::FullPivLU<Eigen::Matrix<double, 10, 10>> lu(constraints.template block<10, 10>(0, 0));
  if (!lu.isInvertible()) throw DegenerateHypothesis("five-point: constraint system is rank deficient");
  const Eigen::Matrix<double, 10, 10> aa = lu.solve(constraints.template block<10, 10>(0, 10));

  const ReducedSystem sys = reduceConstraints(aa);
  const Eigen::VectorXd det_poly = determinantPolynomial(sys);

  const double constraint_scale = std::max(constraints.cwiseAbs().maxCoeff(), 1e-300);
  std::vector<Eigen::Matrix3d> candidates;
  for (double z : realRoots(det_poly)) {
    Eigen::Matrix3d bz;
    for (int k = 0; k < 3; ++k) {
      bz(k, 0) = polyEval(sys.a[k], z);
      bz(k, 1) = polyEval(sys.b[k], z);
      bz(k, 2) = polyEval(sys.c[k], z);
    }
    Eigen::JacobiSVD<Eigen::Matrix3d> nsvd(bz, Eigen::ComputeFullV);
    const Eigen::Vector3d h = nsvd.matrixV().col(2);
    if (std::abs(h.z()) < 1e-12) continue;
    double x = h.x() / h.z();
    double y = h.y() / h.z();

    const double residual = refineSolution(constraints, x, y, z);
    const double magnitude = 1.0 + std::abs(x) + std::abs(y) + std::abs(z);
    if (residual > 1e-9 * constraint_scale * magnitude * magnitude * magnitude) continue;

    Eigen::Matrix<double, 9, 1> evec = basis.col(0) * x + basis.col(1) * y + basis.col(2) * z + basis.col(3);
    if (!evec.allFinite()) continue;
    candidates.push_back(Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(evec.data()));
  }
  return candidates;
}

Eigen::Matrix3d eightPointEssential(const std::vector<Eigen::Vector2d>& xa, const std::vector<Eigen::Vector2d>& xb,
                                    int irls_rounds) {
  if (xa.size() < 8 || xa.size() != xb.size()) {
    throw std::invalid_argument("eightPointEssential: need >= 8 correspondences");
  }
  const auto n = xa.size();
  Eigen::MatrixXd q(n, 9);
  for (size_t i = 0; i < n; ++i) q.row(i) = epipolarRow(xa[i], xb[i]);

  auto project = [](const Eigen::Matrix<double, 9, 1>& evec) {
    const Eigen::Matrix3d e = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(evec.data());
    // Singular values -> (s, s, 0) with s the mean of the top two.
    Eigen::JacobiSVD<Eigen::Matrix3d> esvd(e, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d s = esvd.singularValues();
    const double sigma = 0.5 * (s(0) + s(1));
    if (sigma < 1e-300) throw DegenerateHypothesis("eight-point: zero essential matrix");
    return Eigen::Matrix3d(esvd.matrixU() * Eigen::Vector3d(sigma, sigma, 0.0).asDiagonal() *
                           esvd.matrixV().transpose());
  };

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(q, Eigen::ComputeFullV);
  Eigen::Matrix3d e = project(svd.matrixV().col(8));

  for (int round = 0; round < irls_rounds; ++round) {
    Eigen::MatrixXd wq(n, 9);
    for (size_t i = 0; i < n; ++i) {
      const Eigen::Vector3d ha(xa[i].x(), xa[i].y(), 1.0);
      const Eigen::Vector3d hb(xb[i].x(), xb[i].y(), 1.0);
      const Eigen::Vector3d ea = e * ha;
      const Eigen::Vector3d eb = e.transpose() * hb;
      const double den = ea.head<2>().squaredNorm() + eb.head<2>().squaredNorm();
      wq.row(i) = q.row(i) / std::sqrt(std::max(den, 1e-12));
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> wsvd(wq, Eigen::ComputeFullV);
    e = project(wsvd.matrixV().col(8));
  }
  return e;
}

Pose refinePoseSampson(const Pose& initial, const std::vector<Eigen::Vector2d>& xa,
                       const std::vector<Eigen::Vector2d>& xb, int iterations) {
  if (xa.size() != xb.size() || xa.size() < 5) {
    throw std::invalid_argument("refinePoseSampson: need >= 5 correspondences");
  }
  const auto n = xa.size();
  Eigen::Matrix3d r = initial.rotationMatrix();
  Eigen::Vector3d t = initial.translation;

  for (int it = 0; it < iterations; ++it) {
    // Orthonormal tangent basis of the unit-translation sphere at t.
    const Eigen::Vector3d ref = std::abs(t.z()) < 0.9 ? Eigen::Vector3d::UnitZ() : Eigen::Vector3d::UnitX();
    Eigen::Matrix<double, 3, 2> basis;
    basis.col(0) = t.cross(ref).normalized();
    basis.col(1) = t.cross(basis.col(0));

    const Eigen::Matrix3d e = skew(t) * r;
    Eigen::MatrixXd jac(n, 5);
    Eigen::VectorXd res(n);
    for (size_t i = 0; i < n; ++i) {
      const Eigen::Vector3d ha(xa[i].x(), xa[i].y(), 1.0);
      const Eigen::Vector3d hb(xb[i].x(), xb[i].y(), 1.0);
      const Eigen::Vector3d ea = e * ha;
      const Eigen::Vector3d eb = e.transpose() * hb;
      const double w = 1.0 / std::sqrt(std::max(ea.head<2>().squaredNorm() + eb.head<2>().squaredNorm(), 1e-12));
      const Eigen::Vector3d ra = r * ha;
      res[i] = w * hb.dot(e * ha);
      const Eigen::Vector3d d_theta = ha.cross(r.transpose() * hb.cross(t));
      const Eigen::Vector3d d_t = ra.cross(hb);
      jac.block<1, 3>(i, 0) = w * d_theta.transpose();
      jac.block<1, 2>(i, 3) = w * (basis.transpose() * d_t).transpose();
    }
    const Eigen::Matrix<double, 5, 5> h = jac.transpose() * jac;
    const Eigen::Matrix<double, 5, 1> g = jac.transpose() * res;
    const Eigen::Matrix<double, 5, 1> step = h.ldlt().solve(g);
    if (!step.allFinite()) break;
    const Eigen::Vector3d dtheta = -step.head<3>();
    r = r * Eigen::AngleAxisd(dtheta.norm(), dtheta.norm() > 0 ? Eigen::Vector3d(dtheta.normalized())
                                                               : Eigen::Vector3d::UnitX()).toRotationMatrix();
    t = (t - basis * step.tail<2>()).normalized();
    if (step.norm() < 1e-14) break;
  }
  return Pose::fromRt(r, t);
}

EssentialMatrix solveMinimal(const std::vector<PixelCorrespondence>& seeds, const CameraIntrinsics& ka,
                             const CameraIntrinsics& kb, MinimalSolver solver) {
  const size_t need = solver == MinimalSolver::FivePoint ? 6 : 8;
  if (seeds.size() < need) throw std::invalid_argument("solveMinimal: not enough seed correspondences");

  for (size_t i = 0; i < seeds.size(); ++i) {
    for (size_t j = i + 1; j < seeds.size(); ++j) {
      if ((seeds[i].a - seeds[j].a).norm() < 1e-9 && (seeds[i].b - seeds[j].b).norm() < 1e-9) {
        throw DegenerateHypothesis("solveMinimal: coincident seed correspondences");
      }
    }
  }

  std::vector<Eigen::Vector2d> xa(seeds.size()), xb(seeds.size());
  for (size_t i = 0; i < seeds.size(); ++i) {
    xa[i] = ka.normalize(seeds[i].a);
    xb[i] = kb.normalize(seeds[i].b);
  }

  if (solver == MinimalSolver::EightPoint) {
    return EssentialMatrix::fromMatrix(eightPointEssential(xa, xb));
  }

  const std::vector<Eigen::Vector2d> xa5(xa.begin(), xa.begin() + 5);
  const std::vector<Eigen::Vector2d> xb5(xb.begin(), xb.begin() + 5);
  const std::vector<Eigen::Matrix3d> candidates = fivePointCandidates(xa5, xb5);
  if (candidates.empty()) throw DegenerateHypothesis("five-point: no real solution");

  // Disambiguate with the sixth seed.
  double best_dist = std::numeric_limits<double>::infinity();
  int best = -1;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const double d = sampsonDistance(candidates[i], xa[5], xb[5]);
    if (d < best_dist) {
      best_dist = d;
      best = static_cast<int>(i);
    }
  }
  if (best < 0) throw DegenerateHypothesis("five-point: all candidates degenerate");
  return EssentialMatrix::fromMatrix(candidates[best]);
}

}  // namespace priorpose
