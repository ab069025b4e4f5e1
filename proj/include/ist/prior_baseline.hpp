#pragma once

// Compact shape-prior deformation pipeline: a category template cloud is
// deformed by a predicted field D and matched to the observation through a
// row-stochastic matching matrix A; predicted world coordinates are
// A * (prior + D).

#include <map>
#include <random>
#include <vector>

#include "ist/istnet.hpp"
#include "ist/pointfeat.hpp"
#include "ist/synthdata.hpp"

namespace ist::prior {

enum class PriorMode { Category, Shared, Noise };

struct ShapePrior {
  geo::Points points;  // M x 3, canonical frame
  PriorMode provenance;
};

// category: mean canonical cloud of that category (index-aligned across
// seeds); shared: the designated category's prior for everyone; noise:
// seeded uniform samples in the unit cube.
ShapePrior build_prior(PriorMode mode, synth::Category category,
                       const std::map<synth::Category,
                                      std::vector<geo::Points>>& shapes,
                       std::uint64_t noise_seed = 0,
                       std::size_t noise_points = 512,
                       synth::Category shared_from = synth::Category::Box);

template <typename T>
struct DeformOutputs {
  Tensor<T> deformation;   // M x 3
  Tensor<T> matching;      // N x M, rows on the probability simplex
  Tensor<T> reconstructed; // M x 3, prior + deformation
  Tensor<T> world_pred;    // N x 3, matching * reconstructed
};

template <typename T>
class DeformNet {
 public:
  DeformNet() = default;

  static DeformNet create(ParamStore<T>& store, const std::string& prefix,
                          std::size_t d, std::mt19937_64& rng) {
    DeformNet n;
    n.d_ = d;
    n.obs_mlp_ = feat::Mlp<T>::create(store, prefix + ".obs", {3 * d, d}, rng);
    n.prior_mlp_ = feat::Mlp<T>::create(store, prefix + ".prior", {3, d, d}, rng);
    n.deform_mlp_ =
        feat::Mlp<T>::create(store, prefix + ".deform", {2 * d, d, 3}, rng);
    return n;
  }

  DeformOutputs<T> forward(const feat::FeatureSet<T>& f,
                           const ShapePrior& prior) const {
    Tensor<T> obs = obs_mlp_.forward(
        concat_cols(concat_cols(f.F_geom, f.F_app), f.F_pos));  // N x d
    Tensor<T> prior_t = feat::points_to_tensor<T>(prior.points);
    Tensor<T> penc = prior_mlp_.forward(prior_t);  // M x d
    Tensor<T> global = mean_rows(obs);             // 1 x d
    DeformOutputs<T> out;
    out.deformation = deform_mlp_.forward(concat_cols(penc, global));
    // similarity logits scaled by 1/sqrt(d)
    Tensor<T> logits = scale(matmul(obs, transpose(penc)),
                             T(1.0 / std::sqrt(double(d_))));
    out.matching = softmax_rows(logits);
    out.reconstructed = add(prior_t, out.deformation);
    out.world_pred = matmul(out.matching, out.reconstructed);
    return out;
  }

 private:
  std::size_t d_ = 64;
  feat::Mlp<T> obs_mlp_, prior_mlp_, deform_mlp_;
};

// nearest-neighbour index of each row of a in b
std::vector<std::size_t> nearest_indices(const geo::Points& a,
                                         const geo::Points& b);

// Symmetric mean squared nearest-neighbour distance; the neighbour
// assignment is held fixed at the current values (exact a.e.).
template <typename T>
Tensor<T> chamfer(const Tensor<T>& x, const geo::Points& target) {
  const geo::Points xv = net::tensor_to_points(x);
  const auto fwd = nearest_indices(xv, target);
  const auto bwd = nearest_indices(target, xv);
  geo::Points matched_fwd(xv.rows(), 3);
  for (Eigen::Index i = 0; i < xv.rows(); ++i)
    matched_fwd.row(i) = target.row(Eigen::Index(fwd[std::size_t(i)]));
  Tensor<T> d1 = sub(x, feat::points_to_tensor<T>(matched_fwd));
  // mean over points of squared norm = 3 * mean over elements
  Tensor<T> t1 = scale(mean_all(mul(d1, d1)), T(3));
  std::vector<std::size_t> bw(bwd.begin(), bwd.end());
  Tensor<T> d2 = sub(gather_rows(x, bw), feat::points_to_tensor<T>(target));
  Tensor<T> t2 = scale(mean_all(mul(d2, d2)), T(3));
  return add(t1, t2);
}

// chamfer(reconstructed, canonical model) + smooth-L1(world_pred, Q_gt)
template <typename T>
Tensor<T> deform_losses(const DeformOutputs<T>& out,
                        const geo::Points& canonical_model,
                        const geo::Points& Q_gt) {
  return add(chamfer(out.reconstructed, canonical_model),
             smooth_l1(out.world_pred, feat::points_to_tensor<T>(Q_gt)));
}

}  // namespace ist::prior
