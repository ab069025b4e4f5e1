#include "ist/pointfeat.hpp"

#include <algorithm>
#include <numeric>

namespace ist::feat {

geo::Points center_points(const geo::Points& P, geo::Vec3* centroid) {
  const geo::Vec3 mu = P.colwise().mean();
  if (centroid) *centroid = mu;
  return P.rowwise() - mu.transpose();
}

std::vector<std::size_t> knn_indices(const geo::Points& P, std::size_t k) {
  const std::size_t n = std::size_t(P.rows());
  std::vector<std::size_t> out(n * k);
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d =
          (P.row(Eigen::Index(i)) - P.row(Eigen::Index(j))).squaredNorm();
      // self pushed to the back; ties broken by index for determinism
      dist[j] = {i == j ? std::numeric_limits<double>::infinity() : d, j};
    }
    std::partial_sort(dist.begin(), dist.begin() + std::ptrdiff_t(k),
                      dist.end());
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = dist[j].second;
  }
  return out;
}

}  // namespace ist::feat
