#include <doctest.h>

#include <random>

#include "ist/pointfeat.hpp"

using namespace ist;
using namespace ist::feat;

namespace {

geo::Points random_cloud(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  geo::Points P(n, 3);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) P(i, k) = d(rng);
  return P;
}

}  // namespace

TEST_CASE("center_points") {
  std::mt19937_64 rng(1);
  geo::Points P = random_cloud(rng, 20);
  geo::Vec3 c;
  geo::Points Pc = center_points(P, &c);
  CHECK(Pc.colwise().mean().norm() < 1e-9);
  CHECK((P.colwise().mean().transpose() - c).norm() < 1e-12);

  geo::Points single(1, 3);
  single.row(0) = geo::Vec3(1, 2, 3).transpose();
  geo::Points sc = center_points(single, &c);
  CHECK(sc.norm() < 1e-12);
  CHECK(c == geo::Vec3(1, 2, 3));

  geo::Points again = center_points(Pc, &c);
  CHECK((again - Pc).norm() < 1e-12);
}

TEST_CASE("knn excludes self and breaks ties by index") {
  geo::Points P(4, 3);
  P << 0, 0, 0, 1, 0, 0, 2, 0, 0, 3, 0, 0;
  const auto idx = knn_indices(P, 2);
  REQUIRE(idx.size() == 8);
  CHECK(idx[0] == 1);  // neighbours of point 0: 1 then 2
  CHECK(idx[1] == 2);
  CHECK(idx[2 * 1 + 0] == 0);  // point 1: 0 and 2 equidistant, index order
  CHECK(idx[2 * 1 + 1] == 2);
}

TEST_CASE("geometric extractor properties") {
  std::mt19937_64 rng(5);
  ParamStore<double> store;
  auto ext = GeomExtractor<double>::create(store, "g", 8, 4, rng);
  geo::Points P = random_cloud(rng, 20);
  geo::Points Pc = center_points(P);
  auto F = ext.forward(Pc, points_to_tensor<double>(Pc));
  CHECK(F.rows() == 20);
  CHECK(F.cols() == 8);

  SUBCASE("too few points rejected") {
    geo::Points tiny = random_cloud(rng, 8);
    CHECK_THROWS_AS(ext.forward(tiny, points_to_tensor<double>(tiny)),
                    TooFewPoints);
  }

  SUBCASE("permutation equivariance") {
    std::vector<int> perm(20);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    geo::Points Pp(20, 3);
    for (int i = 0; i < 20; ++i) Pp.row(i) = Pc.row(perm[i]);
    auto Fp = ext.forward(Pp, points_to_tensor<double>(Pp));
    for (int i = 0; i < 20; ++i)
      for (int j = 0; j < 8; ++j)
        CHECK(Fp.at(i, j) ==
              doctest::Approx(F.at(perm[i], j)).epsilon(1e-9));
  }

  SUBCASE("translation invariance through centering") {
    geo::Points shifted = P;
    shifted.rowwise() += Eigen::RowVector3d(0.7, -0.3, 1.1);
    geo::Points Sc = center_points(shifted);
    auto F2 = ext.forward(Sc, points_to_tensor<double>(Sc));
    for (int i = 0; i < 20; ++i)
      for (int j = 0; j < 8; ++j)
        CHECK(F2.at(i, j) == doctest::Approx(F.at(i, j)).epsilon(1e-9));
  }

  SUBCASE("gradient through the module") {
    geo::Points small = random_cloud(rng, 16);
    geo::Points Sc = center_points(small);
    auto f = [&] {
      return mean_all(
          mul(ext.forward(Sc, points_to_tensor<double>(Sc)),
              ext.forward(Sc, points_to_tensor<double>(Sc))));
    };
    auto rep = grad_check<double>(f, store.tensors(), 1e-5, 1e-3);
    CHECK(rep.passed);
  }
}

TEST_CASE("row-wise branches: independence and degenerate inputs") {
  std::mt19937_64 rng(9);
  ParamStore<double> store;
  auto mlp = Mlp<double>::create(store, "m", {3, 8, 8}, rng);

  geo::Points C(4, 3);
  C << 0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.9, 0.1, 0.4, 0.2, 0.2, 0.2;
  auto F = mlp.forward(points_to_tensor<double>(C));
  for (int j = 0; j < 8; ++j) {
    CHECK(F.at(0, j) == F.at(1, j));  // identical rows, identical features
    CHECK(F.at(0, j) == F.at(3, j));
  }

  // changing row 2 must not affect the others
  geo::Points C2 = C;
  C2.row(2) = Eigen::RowVector3d(0.0, 0.0, 1.0);
  auto F2 = mlp.forward(points_to_tensor<double>(C2));
  for (int i : {0, 1, 3})
    for (int j = 0; j < 8; ++j) CHECK(F2.at(i, j) == F.at(i, j));
}

TEST_CASE("zeroed output layer produces all-zero encodings") {
  std::mt19937_64 rng(11);
  ParamStore<double> store;
  auto mlp = Mlp<double>::create(store, "m", {3, 8, 8}, rng);
  store.find("m.w1")->data().assign(64, 0.0);
  auto F = mlp.forward(points_to_tensor<double>(random_cloud(rng, 5)));
  for (double v : F.data()) CHECK(v == 0.0);
}

TEST_CASE("feature bundle shape contract and finiteness") {
  std::mt19937_64 rng(13);
  ParamStore<float> store;
  auto pf = PointFeat<float>::create(store, "f", 16, 4, true, rng);
  for (int trial = 0; trial < 50; ++trial) {
    geo::Points P = random_cloud(rng, 24);
    geo::Points C = random_cloud(rng, 24);
    C.array() += 0.5;
    auto fs = pf.forward(P, C);
    CHECK(fs.F_geom.rows() == 24);
    CHECK(fs.F_app.rows() == 24);
    CHECK(fs.F_pos.rows() == 24);
    CHECK(fs.F_geom.cols() == 16);
    for (float v : fs.F_geom.data()) CHECK(std::isfinite(v));
    for (float v : fs.F_app.data()) CHECK(std::isfinite(v));
    for (float v : fs.F_pos.data()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("positional branch disabled yields zero features") {
  std::mt19937_64 rng(15);
  ParamStore<double> store;
  auto pf = PointFeat<double>::create(store, "f", 8, 4, false, rng);
  geo::Points P = random_cloud(rng, 20);
  auto fs = pf.forward(P, P);
  for (double v : fs.F_pos.data()) CHECK(v == 0.0);
}
