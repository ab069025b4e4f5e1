#pragma once

// Camera-space feature extraction: centered geometric features, positional
// encoding of raw coordinates and per-point appearance features. All
// extractors are permutation-equivariant in point order.

#include <random>
#include <string>
#include <vector>

#include "ist/geometry.hpp"
#include "ist/optim.hpp"
#include "ist/tensor.hpp"

namespace ist::feat {

// Stack of linear layers with ReLU between (never after the last).
template <typename T>
class Mlp {
 public:
  Mlp() = default;

  static Mlp create(ParamStore<T>& store, const std::string& prefix,
                    const std::vector<std::size_t>& dims,
                    std::mt19937_64& rng) {
    Mlp m;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      m.weights_.push_back(store.add_glorot(
          prefix + ".w" + std::to_string(l), dims[l], dims[l + 1], rng));
      m.biases_.push_back(
          store.add(prefix + ".b" + std::to_string(l), 1, dims[l + 1]));
    }
    return m;
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      h = add(matmul(h, weights_[l]), biases_[l]);
      if (l + 1 < weights_.size()) h = relu(h);
    }
    return h;
  }

 private:
  std::vector<Tensor<T>> weights_, biases_;
};

template <typename T>
Tensor<T> points_to_tensor(const geo::Points& P) {
  std::vector<T> buf(std::size_t(P.rows()) * 3);
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    for (int k = 0; k < 3; ++k) buf[std::size_t(i) * 3 + k] = T(P(i, k));
  return Tensor<T>::from(std::move(buf), std::size_t(P.rows()), 3);
}

geo::Points center_points(const geo::Points& P, geo::Vec3* centroid = nullptr);

// k nearest neighbours (self excluded) by brute force; ties broken by index
std::vector<std::size_t> knn_indices(const geo::Points& P, std::size_t k);

// Single-scale local aggregation: per-point MLP, kNN grouping with relative
// offsets, local max pooling, then fusion back to per-point features.
template <typename T>
class GeomExtractor {
 public:
  GeomExtractor() = default;

  static GeomExtractor create(ParamStore<T>& store, const std::string& prefix,
                              std::size_t d, std::size_t k,
                              std::mt19937_64& rng) {
    GeomExtractor g;
    g.k_ = k;
    g.point_mlp_ = Mlp<T>::create(store, prefix + ".point", {3, d}, rng);
    g.group_mlp_ = Mlp<T>::create(store, prefix + ".group", {3 + d, d}, rng);
    g.fuse_mlp_ = Mlp<T>::create(store, prefix + ".fuse", {2 * d, d, d}, rng);
    return g;
  }

  // P_centered drives the kNN graph; X is the same cloud as a tensor
  Tensor<T> forward(const geo::Points& P_centered, const Tensor<T>& X) const {
    if (std::size_t(P_centered.rows()) < 16)
      throw TooFewPoints("extract_geom_features: need at least 16 points");
    const std::size_t n = X.rows();
    const auto idx = knn_indices(P_centered, k_);
    std::vector<std::size_t> self(n * k_);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k_; ++j) self[i * k_ + j] = i;
    Tensor<T> h1 = relu(point_mlp_.forward(X));
    Tensor<T> rel = sub(gather_rows(X, idx), gather_rows(X, self));
    Tensor<T> grouped =
        relu(group_mlp_.forward(concat_cols(rel, gather_rows(h1, idx))));
    Tensor<T> pooled = segment_max(grouped, k_);
    return fuse_mlp_.forward(concat_cols(h1, pooled));
  }

  std::size_t k() const { return k_; }

 private:
  std::size_t k_ = 8;
  Mlp<T> point_mlp_, group_mlp_, fuse_mlp_;
};

// Extractor bundle for one observation: geometric features of the centered
// cloud, positional encoding of raw coordinates, appearance features.
template <typename T>
struct FeatureSet {
  Tensor<T> F_geom, F_app, F_pos;  // each N x d
  geo::Vec3 centroid;
};

template <typename T>
class PointFeat {
 public:
  PointFeat() = default;

  static PointFeat create(ParamStore<T>& store, const std::string& prefix,
                          std::size_t d, std::size_t k, bool pos_encoding,
                          std::mt19937_64& rng) {
    PointFeat f;
    f.d_ = d;
    f.pos_enabled_ = pos_encoding;
    f.geom_ = GeomExtractor<T>::create(store, prefix + ".geom", d, k, rng);
    f.app_mlp_ = Mlp<T>::create(store, prefix + ".app", {3, d, d}, rng);
    if (pos_encoding)
      f.pos_mlp_ = Mlp<T>::create(store, prefix + ".pos", {3, d, d}, rng);
    return f;
  }

  FeatureSet<T> forward(const geo::Points& P, const geo::Points& C) const {
    FeatureSet<T> out;
    geo::Points Pc = center_points(P, &out.centroid);
    out.F_geom = geom_.forward(Pc, points_to_tensor<T>(Pc));
    out.F_app = app_mlp_.forward(points_to_tensor<T>(C));
    out.F_pos = pos_enabled_
                    ? pos_mlp_.forward(points_to_tensor<T>(P))
                    : Tensor<T>::zeros(std::size_t(P.rows()), d_);
    return out;
  }

  const GeomExtractor<T>& geom() const { return geom_; }
  const Mlp<T>& pos_mlp() const { return pos_mlp_; }
  const Mlp<T>& app_mlp() const { return app_mlp_; }

 private:
  std::size_t d_ = 64;
  bool pos_enabled_ = true;
  GeomExtractor<T> geom_;
  Mlp<T> app_mlp_, pos_mlp_;
};

}  // namespace ist::feat
