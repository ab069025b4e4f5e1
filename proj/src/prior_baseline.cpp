#include "ist/prior_baseline.hpp"

#include <limits>

#include "ist/errors.hpp"

namespace ist::prior {

ShapePrior build_prior(PriorMode mode, synth::Category category,
                       const std::map<synth::Category,
                                      std::vector<geo::Points>>& shapes,
                       std::uint64_t noise_seed, std::size_t noise_points,
                       synth::Category shared_from) {
  ShapePrior out;
  out.provenance = mode;
  if (mode == PriorMode::Noise) {
    std::mt19937_64 rng(noise_seed);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    out.points.resize(Eigen::Index(noise_points), 3);
    for (Eigen::Index i = 0; i < out.points.rows(); ++i)
      for (int k = 0; k < 3; ++k) out.points(i, k) = u(rng);
    return out;
  }
  const synth::Category key =
      mode == PriorMode::Shared ? shared_from : category;
  auto it = shapes.find(key);
  if (it == shapes.end() || it->second.empty())
    throw UnknownCategory("build_prior: no shapes for category");
  // mean over index-aligned canonical clouds
  geo::Points mean = it->second.front();
  for (std::size_t s = 1; s < it->second.size(); ++s) mean += it->second[s];
  mean /= double(it->second.size());
  out.points = mean;
  return out;
}

std::vector<std::size_t> nearest_indices(const geo::Points& a,
                                         const geo::Points& b) {
  std::vector<std::size_t> out(std::size_t(a.rows()));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bj = 0;
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      const double d = (a.row(i) - b.row(j)).squaredNorm();
      if (d < best) {
        best = d;
        bj = std::size_t(j);
      }
    }
    out[std::size_t(i)] = bj;
  }
  return out;
}

}  // namespace ist::prior
