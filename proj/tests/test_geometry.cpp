#include <doctest.h>

#include <chrono>
#include <random>

#include "ist/errors.hpp"
#include "ist/geometry.hpp"

using namespace ist;
using namespace ist::geo;

namespace {

Points random_points(std::mt19937_64& rng, int n, double half = 0.5) {
  std::uniform_real_distribution<double> d(-half, half);
  Points P(n, 3);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) P(i, k) = d(rng);
  return P;
}

Pose random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dt(-0.5, 0.5), ds(0.05, 0.4);
  Pose p;
  p.R = random_rotation(rng);
  p.t = Vec3(dt(rng), dt(rng), dt(rng));
  p.s = Vec3(ds(rng), ds(rng), ds(rng));
  return p;
}

}  // namespace

TEST_CASE("rot_from_sixd basics") {
  CHECK(rot_from_sixd({1, 0, 0, 0, 1, 0}).isApprox(Mat3::Identity(), 1e-12));
  CHECK(rot_from_sixd({2, 0, 0, 1, 1, 0}).isApprox(Mat3::Identity(), 1e-12));
  CHECK_THROWS_AS(rot_from_sixd({1, 0, 0, 2, 0, 0}), DegenerateRepresentation);
  CHECK_THROWS_AS(rot_from_sixd({0, 0, 0, 0, 1, 0}), DegenerateRepresentation);
}

TEST_CASE("rot_from_sixd reconstructs a rotation from its first two columns") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const Mat3 R = random_rotation(rng);
    const Mat3 R2 = rot_from_sixd(
        {R(0, 0), R(1, 0), R(2, 0), R(0, 1), R(1, 1), R(2, 1)});
    CHECK((R - R2).norm() < 1e-9);
  }
}

TEST_CASE("world-coordinate map and its inverse") {
  std::mt19937_64 rng(3);
  Pose identity;  // R=I, t=0, |s|=sqrt(3)... normalize to |s|=1
  identity.s = Vec3(1, 0, 0).cwiseAbs();  // placeholder, set below
  identity.s = Vec3(1 / std::sqrt(3.0), 1 / std::sqrt(3.0), 1 / std::sqrt(3.0));
  const Points P = random_points(rng, 20);
  CHECK((gamma_world_coords(P, identity) - P).norm() < 1e-12);

  Pose pose = random_pose(rng);
  Points single(1, 3);
  single.row(0) = pose.t.transpose();
  CHECK(gamma_world_coords(single, pose).norm() < 1e-12);

  for (int i = 0; i < 1000; ++i) {
    Pose p = random_pose(rng);
    const Points Q0 = random_points(rng, 16);
    const Points back = gamma_world_coords(camera_from_canonical(Q0, p), p);
    CHECK((back - Q0).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("umeyama recovers a constructed similarity") {
  std::mt19937_64 rng(5);
  const Mat3 R30 = rot_about_axis(Vec3::UnitZ(), 30.0 * M_PI / 180.0);
  const Points src = random_points(rng, 50);
  Points dst(50, 3);
  for (int i = 0; i < 50; ++i)
    dst.row(i) =
        (2.0 * R30 * src.row(i).transpose() + Vec3(0.1, 0.2, 0.3)).transpose();
  const Similarity sim = umeyama_solve(src, dst);
  CHECK((sim.R - R30).norm() < 1e-8);
  CHECK((sim.t - Vec3(0.1, 0.2, 0.3)).norm() < 1e-8);
  CHECK(sim.scale == doctest::Approx(2.0).epsilon(1e-8));

  const Similarity self = umeyama_solve(src, src);
  CHECK((self.R - Mat3::Identity()).norm() < 1e-9);
  CHECK(self.t.norm() < 1e-9);
  CHECK(self.scale == doctest::Approx(1.0).epsilon(1e-9));

  Points coincident(10, 3);
  for (int i = 0; i < 10; ++i) coincident.row(i) = Vec3(1, 2, 3).transpose();
  CHECK_THROWS_AS(umeyama_solve(coincident, coincident),
                  DegenerateConfiguration);
}

TEST_CASE("umeyama exactness across point counts") {
  std::mt19937_64 rng(7);
  for (int n : {3, 10, 100}) {
    for (int trial = 0; trial < 20; ++trial) {
      const Points src = random_points(rng, n);
      const Mat3 R = random_rotation(rng);
      const double sc = 0.3 + 2.0 * std::uniform_real_distribution<double>(0, 1)(rng);
      const Vec3 t(0.4, -0.2, 0.9);
      Points dst(n, 3);
      for (int i = 0; i < n; ++i)
        dst.row(i) = (sc * R * src.row(i).transpose() + t).transpose();
      const Similarity sim = umeyama_solve(src, dst);
      CHECK((sim.R - R).norm() < 1e-8);
      CHECK((sim.t - t).norm() < 1e-8);
      CHECK(std::abs(sim.scale - sc) / sc < 1e-8);
    }
  }
}

TEST_CASE("umeyama residual decreases with noise level") {
  std::mt19937_64 rng(11);
  const Points src = random_points(rng, 200);
  const Mat3 R = random_rotation(rng);
  const Vec3 t(0.1, 0.2, 0.3);
  double prev = 1e9;
  for (double sigma : {0.05, 0.01, 0.001}) {
    std::normal_distribution<double> noise(0.0, sigma);
    Points dst(200, 3);
    for (int i = 0; i < 200; ++i)
      dst.row(i) = (1.5 * R * src.row(i).transpose() + t).transpose() +
                   Eigen::RowVector3d(noise(rng), noise(rng), noise(rng));
    const Similarity sim = umeyama_solve(src, dst);
    double resid = 0;
    for (int i = 0; i < 200; ++i)
      resid += (dst.row(i).transpose() -
                (sim.scale * sim.R * src.row(i).transpose() + sim.t))
                   .squaredNorm();
    CHECK(resid < prev);
    prev = resid;
  }
}

TEST_CASE("rotation error with and without symmetry") {
  std::mt19937_64 rng(13);
  const Mat3 R = random_rotation(rng);
  // acos near 1 limits identity-angle precision to about 1e-6 degrees
  CHECK(rotation_error_deg(R, R, SymmetrySpec::none()) < 1e-5);

  const Mat3 R10 = R * rot_about_axis(Vec3::UnitZ(), 10.0 * M_PI / 180.0);
  CHECK(rotation_error_deg(R10, R, SymmetrySpec::none()) ==
        doctest::Approx(10.0).epsilon(1e-6));

  const auto sym_y = SymmetrySpec::about_axis(Vec3::UnitY());
  const Mat3 R90y = R * rot_about_axis(Vec3::UnitY(), M_PI / 2);
  CHECK(rotation_error_deg(R90y, R, sym_y) < 1e-5);
  for (double theta : {0.3, 1.0, 2.5, 3.1}) {
    const Mat3 Rth = R * rot_about_axis(Vec3::UnitY(), theta);
    CHECK(rotation_error_deg(Rth, R, sym_y) < 1e-5);
  }
}

TEST_CASE("closest rotation about the symmetry axis") {
  // dense sweep oracle: the closed form must beat every sampled angle
  std::mt19937_64 rng(17);
  const Vec3 axis = Vec3::UnitY();
  for (int trial = 0; trial < 30; ++trial) {
    const Mat3 R_gt = random_rotation(rng);
    const Mat3 R_pred = random_rotation(rng);
    const Mat3 best = closest_rotation_about_axis(R_pred, R_gt, axis);
    const double dbest = (R_pred - best).norm();
    for (int k = 0; k < 720; ++k) {
      const double theta = 2.0 * M_PI * k / 720.0;
      const Mat3 cand = R_gt * rot_about_axis(axis, theta);
      CHECK(dbest <= (R_pred - cand).norm() + 1e-9);
    }
  }
}

TEST_CASE("oriented box IoU") {
  std::mt19937_64 rng(19);
  Pose a = random_pose(rng);
  CHECK(iou3d(a, a) == doctest::Approx(1.0));

  Pose b = a;
  b.t += Vec3(10, 0, 0);
  CHECK(iou3d(a, b) == 0.0);

  Pose u1, u2;
  u1.s = Vec3(1, 1, 1);
  u2.s = Vec3(1, 1, 1);
  u2.t = Vec3(0.5, 0, 0);
  CHECK(iou3d(u1, u2) == doctest::Approx(1.0 / 3.0).epsilon(0.03));

  for (int i = 0; i < 25; ++i) {
    Pose p = random_pose(rng), q = random_pose(rng);
    const double ab = iou3d(p, q);
    const double ba = iou3d(q, p);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
  }
}

TEST_CASE("random rotations are valid and deterministic") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 10000; ++i) {
    const Mat3 R = random_rotation(rng);
    CHECK((R.transpose() * R - Mat3::Identity()).norm() < 1e-12);
    CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
  std::mt19937_64 r1(42), r2(42);
  CHECK(random_rotation(r1) == random_rotation(r2));
}

TEST_CASE("random rotation uniformity sanity") {
  std::mt19937_64 rng(29);
  Vec3 mean = Vec3::Zero();
  const int n = 100000;
  for (int i = 0; i < n; ++i) mean += random_rotation(rng).col(2);
  mean /= double(n);
  CHECK(mean.norm() < 0.02);
}
