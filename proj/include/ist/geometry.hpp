#pragma once

// Rigid/similarity transform algebra, the camera<->canonical map, Umeyama
// alignment, symmetry-aware rotation error and oriented-box IoU.

#include <Eigen/Dense>
#include <array>
#include <random>

namespace ist::geo {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  Vec3 s = Vec3::Ones();  // tight box side lengths, all > 0

  bool rotation_valid(double tol = 1e-9) const;
  double scale_norm() const { return s.norm(); }
};

enum class SymmetryKind { None, ContinuousAxis };

struct SymmetrySpec {
  SymmetryKind kind = SymmetryKind::None;
  Vec3 axis = Vec3::UnitY();  // unit, canonical frame (ContinuousAxis only)

  static SymmetrySpec none() { return {}; }
  static SymmetrySpec about_axis(const Vec3& a) {
    return {SymmetryKind::ContinuousAxis, a.normalized()};
  }
};

struct Similarity {
  Mat3 R;
  Vec3 t;
  double scale;
};

// Gram-Schmidt of two 3-vectors, third column by cross product.
// Throws DegenerateRepresentation on near-zero / near-parallel inputs.
Mat3 rot_from_sixd(const std::array<double, 6>& v);

// Q = R^T (P - t) / |s|_2 : camera-space points to canonical coordinates
Points gamma_world_coords(const Points& P, const Pose& pose);

// P = |s|_2 * R * Q + t : exact inverse of gamma_world_coords
Points camera_from_canonical(const Points& Q, const Pose& pose);

// Least-squares similarity aligning src onto dst; det(R) = +1 enforced.
// Throws DegenerateConfiguration for coincident / rank-deficient inputs.
Similarity umeyama_solve(const Points& src, const Points& dst);

// Geodesic angle in degrees; for continuous-axis symmetry, the angle
// between the two mapped symmetry axes.
double rotation_error_deg(const Mat3& R_pred, const Mat3& R_gt,
                          const SymmetrySpec& sym);

// Oriented-box IoU by deterministic stratified grid sampling (grid^3 cells
// per box, averaged over both directions so the result is symmetric).
// Exact closed form when both rotations coincide.
double iou3d(const Pose& a, const Pose& b, int grid = 40);

// Uniform over SO(3) via normalized 4-vector of standard normals.
Mat3 random_rotation(std::mt19937_64& rng);

// Rotation by `radians` about a unit axis.
Mat3 rot_about_axis(const Vec3& axis, double radians);

// The rotation R_gt * Rot(axis, theta*) closest to R_pred in Frobenius
// norm; closed form via atan2 of projected trace terms.
Mat3 closest_rotation_about_axis(const Mat3& R_pred, const Mat3& R_gt,
                                 const Vec3& axis);

}  // namespace ist::geo
