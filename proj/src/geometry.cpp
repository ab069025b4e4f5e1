#include "ist/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "ist/errors.hpp"

namespace ist::geo {

bool Pose::rotation_valid(double tol) const {
  return (R.transpose() * R - Mat3::Identity()).norm() < tol * 10 &&
         std::abs(R.determinant() - 1.0) < tol * 10 && (s.array() > 0).all();
}

Mat3 rot_from_sixd(const std::array<double, 6>& v) {
  Vec3 a(v[0], v[1], v[2]);
  Vec3 b(v[3], v[4], v[5]);
  if (a.norm() < 1e-8)
    throw DegenerateRepresentation("rot_from_sixd: first vector near zero");
  Vec3 c0 = a.normalized();
  Vec3 r = b - b.dot(c0) * c0;
  if (r.norm() < 1e-8)
    throw DegenerateRepresentation("rot_from_sixd: vectors near parallel");
  Vec3 c1 = r.normalized();
  Vec3 c2 = c0.cross(c1);
  Mat3 R;
  R.col(0) = c0;
  R.col(1) = c1;
  R.col(2) = c2;
  return R;
}

Points gamma_world_coords(const Points& P, const Pose& pose) {
  const double inv = 1.0 / pose.scale_norm();
  Points Q(P.rows(), 3);
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    Q.row(i) =
        (pose.R.transpose() * (P.row(i).transpose() - pose.t) * inv).transpose();
  return Q;
}

Points camera_from_canonical(const Points& Q, const Pose& pose) {
  const double k = pose.scale_norm();
  Points P(Q.rows(), 3);
  for (Eigen::Index i = 0; i < Q.rows(); ++i)
    P.row(i) = (k * pose.R * Q.row(i).transpose() + pose.t).transpose();
  return P;
}

Similarity umeyama_solve(const Points& src, const Points& dst) {
  if (src.rows() != dst.rows())
    throw DegenerateConfiguration("umeyama: size mismatch");
  const Eigen::Index n = src.rows();
  if (n < 3) throw DegenerateConfiguration("umeyama: need at least 3 points");
  const Vec3 mu_s = src.colwise().mean();
  const Vec3 mu_d = dst.colwise().mean();
  Points sc = src.rowwise() - mu_s.transpose();
  Points dc = dst.rowwise() - mu_d.transpose();
  const double var_s = sc.squaredNorm() / double(n);
  if (var_s < 1e-18)
    throw DegenerateConfiguration("umeyama: source points coincident");
  Mat3 sigma = dc.transpose() * sc / double(n);
  Eigen::JacobiSVD<Mat3> svd(sigma,
                             Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 d = svd.singularValues();
  if (d(1) < 1e-12 * std::max(1.0, d(0)))
    throw DegenerateConfiguration("umeyama: covariance rank < 2");
  Vec3 sgn(1, 1, 1);
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0)
    sgn(2) = -1;  // flip the smallest singular direction
  Similarity out;
  out.R = svd.matrixU() * sgn.asDiagonal() * svd.matrixV().transpose();
  out.scale = d.dot(sgn) / var_s;
  if (!(out.scale > 0))
    throw DegenerateConfiguration("umeyama: non-positive scale");
  out.t = mu_d - out.scale * out.R * mu_s;
  return out;
}

double rotation_error_deg(const Mat3& R_pred, const Mat3& R_gt,
                          const SymmetrySpec& sym) {
  double c;
  if (sym.kind == SymmetryKind::ContinuousAxis) {
    c = (R_pred * sym.axis).dot(R_gt * sym.axis);
  } else {
    c = ((R_pred * R_gt.transpose()).trace() - 1.0) / 2.0;
  }
  c = std::clamp(c, -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

namespace {

inline bool inside_box(const Vec3& p, const Pose& b) {
  const Vec3 q = b.R.transpose() * (p - b.t);
  return std::abs(q.x()) <= 0.5 * b.s.x() && std::abs(q.y()) <= 0.5 * b.s.y() &&
         std::abs(q.z()) <= 0.5 * b.s.z();
}

// fraction of a's volume inside b, estimated from grid^3 cell centers
double overlap_fraction(const Pose& a, const Pose& b, int grid) {
  std::int64_t hits = 0;
  const double step = 1.0 / grid;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j)
      for (int k = 0; k < grid; ++k) {
        const Vec3 q(((i + 0.5) * step - 0.5) * a.s.x(),
                     ((j + 0.5) * step - 0.5) * a.s.y(),
                     ((k + 0.5) * step - 0.5) * a.s.z());
        if (inside_box(a.R * q + a.t, b)) ++hits;
      }
  return double(hits) / (double(grid) * grid * grid);
}

}  // namespace

double iou3d(const Pose& a, const Pose& b, int grid) {
  const double va = a.s.prod(), vb = b.s.prod();
  // quick reject: centers further apart than the half-diagonal sum
  if ((a.t - b.t).norm() > 0.5 * (a.s.norm() + b.s.norm())) return 0.0;
  if ((a.R - b.R).norm() < 1e-9) {
    // same orientation: axis-aligned interval overlap in the shared frame
    const Vec3 ta = a.R.transpose() * a.t;
    const Vec3 tb = b.R.transpose() * b.t;
    double inter = 1.0;
    for (int k = 0; k < 3; ++k) {
      const double lo = std::max(ta(k) - 0.5 * a.s(k), tb(k) - 0.5 * b.s(k));
      const double hi = std::min(ta(k) + 0.5 * a.s(k), tb(k) + 0.5 * b.s(k));
      if (hi <= lo) return 0.0;
      inter *= hi - lo;
    }
    return inter / (va + vb - inter);
  }
  // averaged two-sided estimate keeps the result symmetric in (a, b)
  const double inter =
      0.5 * (overlap_fraction(a, b, grid) * va + overlap_fraction(b, a, grid) * vb);
  const double uni = va + vb - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Vector4d q;
  do {
    q << g(rng), g(rng), g(rng), g(rng);
  } while (q.norm() < 1e-12);
  q.normalize();
  return Eigen::Quaterniond(q(0), q(1), q(2), q(3)).toRotationMatrix();
}

Mat3 rot_about_axis(const Vec3& axis, double radians) {
  return Eigen::AngleAxisd(radians, axis.normalized()).toRotationMatrix();
}

Mat3 closest_rotation_about_axis(const Mat3& R_pred, const Mat3& R_gt,
                                 const Vec3& axis) {
  const Vec3 a = axis.normalized();
  const Mat3 M = R_gt.transpose() * R_pred;
  Mat3 ax;  // cross-product matrix [a]_x
  ax << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
  const double A = M.trace() - a.dot(M * a);
  const double B = -(ax * M).trace();
  const double theta = std::atan2(B, A);
  return R_gt * rot_about_axis(a, theta);
}

}  // namespace ist::geo
