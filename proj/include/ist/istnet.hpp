#pragma once

// IST-Net core: feature-level camera->world transformation with
// reconstruction supervision, training-only camera/world-space enhancers,
// pose estimation heads and the explicit-transformation counterpart.

#include <cmath>
#include <random>
#include <string>

#include "ist/geometry.hpp"
#include "ist/pointfeat.hpp"
#include "ist/synthdata.hpp"

namespace ist::net {

using feat::FeatureSet;
using feat::GeomExtractor;
using feat::Mlp;
using feat::PointFeat;
using feat::points_to_tensor;

enum class FeatLossKind { Mse, L1 };
enum class Variant { Implicit, Explicit };

struct ModelConfig {
  std::size_t d = 64;      // feature width
  std::size_t k = 8;       // kNN group size
  bool use_ist = true;     // implicit space transformation
  bool use_ce = true;      // camera-space enhancer
  bool use_we = true;      // world-space enhancer
  bool use_pe = true;      // positional encoding branch
  double lambda_f = 10.0;
  double lambda_r = 1.0;
  FeatLossKind feat_loss = FeatLossKind::Mse;
  Variant variant = Variant::Implicit;
};

// Rotation head output is stored transposed: row i of Rt is column i of R.
template <typename T>
struct PoseHead {
  Tensor<T> Rt;  // 3 x 3
  Tensor<T> t;   // 1 x 3
  Tensor<T> s;   // 1 x 3, positive by construction

  geo::Pose to_pose() const {
    geo::Pose p;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) p.R(i, j) = double(Rt.at(std::size_t(j), std::size_t(i)));
    for (int k = 0; k < 3; ++k) {
      p.t(k) = double(t.at(0, std::size_t(k)));
      p.s(k) = double(s.at(0, std::size_t(k)));
    }
    return p;
  }
};

// Differentiable Gram-Schmidt of a 1x6 vector; returns R transposed
// (rows are the orthonormal columns).
template <typename T>
Tensor<T> sixd_to_rotation_t(const Tensor<T>& v, T eps = T(1e-8)) {
  auto normalize = [eps](const Tensor<T>& x) {
    auto inv = pow_elem(add(sum_all(mul(x, x)), Tensor<T>::scalar(eps * eps)),
                        T(-0.5));
    return mul(x, inv);
  };
  Tensor<T> a = slice_cols(v, 0, 3);
  Tensor<T> b = slice_cols(v, 3, 6);
  Tensor<T> c0 = normalize(a);
  Tensor<T> proj = mul(c0, sum_all(mul(c0, b)));
  Tensor<T> c1 = normalize(sub(b, proj));
  auto comp = [](const Tensor<T>& x, std::size_t i) {
    return slice_cols(x, i, i + 1);
  };
  // c2 = c0 x c1
  Tensor<T> cx = sub(mul(comp(c0, 1), comp(c1, 2)), mul(comp(c0, 2), comp(c1, 1)));
  Tensor<T> cy = sub(mul(comp(c0, 2), comp(c1, 0)), mul(comp(c0, 0), comp(c1, 2)));
  Tensor<T> cz = sub(mul(comp(c0, 0), comp(c1, 1)), mul(comp(c0, 1), comp(c1, 0)));
  Tensor<T> c2 = concat_cols(concat_cols(cx, cy), cz);
  return reshape(concat_cols(concat_cols(c0, c1), c2), 3, 3);
}

// Pose estimator head (shared architecture for the main and auxiliary
// estimators): fuse -> global pool -> fuse local+global -> pool -> three
// independent heads for R (6D), t (centroid-relative) and s (softplus).
template <typename T>
class PoseEstimator {
 public:
  PoseEstimator() = default;

  static PoseEstimator create(ParamStore<T>& store, const std::string& prefix,
                              std::size_t width_in, std::size_t d,
                              std::mt19937_64& rng) {
    PoseEstimator e;
    e.fuse1_ = Mlp<T>::create(store, prefix + ".fuse1", {width_in, 2 * d, d}, rng);
    e.fuse2_ = Mlp<T>::create(store, prefix + ".fuse2", {2 * d, d}, rng);
    e.rot_head_ = Mlp<T>::create(store, prefix + ".rot", {d, d, 6}, rng);
    e.t_head_ = Mlp<T>::create(store, prefix + ".t", {d, d, 3}, rng);
    e.s_head_ = Mlp<T>::create(store, prefix + ".s", {d, d, 3}, rng);
    return e;
  }

  PoseHead<T> forward(const Tensor<T>& X, const geo::Vec3& centroid) const {
    Tensor<T> h = relu(fuse1_.forward(X));
    Tensor<T> g = mean_rows(h);
    Tensor<T> h2 = relu(fuse2_.forward(concat_cols(h, g)));
    Tensor<T> g2 = mean_rows(h2);
    PoseHead<T> out;
    out.Rt = sixd_to_rotation_t(rot_head_.forward(g2));
    Tensor<T> c = Tensor<T>::from(
        {T(centroid.x()), T(centroid.y()), T(centroid.z())}, 1, 3);
    out.t = add(t_head_.forward(g2), c);
    out.s = softplus(s_head_.forward(g2));
    return out;
  }

 private:
  Mlp<T> fuse1_, fuse2_, rot_head_, t_head_, s_head_;
};

// Frobenius + Euclidean pose loss; for continuous-axis symmetric targets
// the ground-truth rotation is first reduced to the rotation about the
// symmetry axis closest to the prediction (constant w.r.t. the graph).
template <typename T>
Tensor<T> pose_loss(const PoseHead<T>& est, const geo::Pose& gt,
                    const geo::SymmetrySpec& sym) {
  geo::Mat3 R_target = gt.R;
  if (sym.kind == geo::SymmetryKind::ContinuousAxis) {
    const geo::Pose pred = est.to_pose();
    R_target = geo::closest_rotation_about_axis(pred.R, gt.R, sym.axis);
  }
  std::vector<T> rt(9), tv(3), sv(3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) rt[std::size_t(i) * 3 + j] = T(R_target(j, i));
  for (int k = 0; k < 3; ++k) {
    tv[std::size_t(k)] = T(gt.t(k));
    sv[std::size_t(k)] = T(gt.s(k));
  }
  auto Rt_gt = Tensor<T>::from(std::move(rt), 3, 3);
  auto t_gt = Tensor<T>::from(std::move(tv), 1, 3);
  auto s_gt = Tensor<T>::from(std::move(sv), 1, 3);
  return add(add(norm_all(sub(est.Rt, Rt_gt)), norm_all(sub(est.t, t_gt))),
             norm_all(sub(est.s, s_gt)));
}

template <typename T>
struct IstOutputs {
  Tensor<T> F_L;      // N x d fused local features
  Tensor<T> F_G;      // 1 x d global feature
  Tensor<T> F_world;  // N x d transformed features
  Tensor<T> Q_pred;   // N x 3 reconstructed world coordinates
};

struct LossBreakdown {
  double main = 0, aux1 = 0, aux2 = 0, feat = 0, rec = 0, total = 0;
  double lambda_f = 0, lambda_r = 0;
};

template <typename T>
struct StepResult {
  FeatureSet<T> feats;
  IstOutputs<T> ist;
  PoseHead<T> main;
  Tensor<T> loss_main, loss_aux1, loss_aux2, loss_feat, loss_rec, total;
  LossBreakdown breakdown() const {
    LossBreakdown b;
    b.main = double(loss_main.item());
    b.aux1 = double(loss_aux1.item());
    b.aux2 = double(loss_aux2.item());
    b.feat = double(loss_feat.item());
    b.rec = double(loss_rec.item());
    b.total = double(total.item());
    return b;
  }
};

template <typename T>
geo::Points tensor_to_points(const Tensor<T>& t) {
  geo::Points P(Eigen::Index(t.rows()), 3);
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (int k = 0; k < 3; ++k) P(Eigen::Index(i), k) = double(t.at(i, std::size_t(k)));
  return P;
}

template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg, std::uint64_t init_seed = 1)
      : cfg_(cfg) {
    std::mt19937_64 rng(init_seed);
    const std::size_t d = cfg.d;
    feat_ = PointFeat<T>::create(params_, "feat", d, cfg.k, cfg.use_pe, rng);
    const bool world_inputs =
        cfg.use_ist || cfg.variant == Variant::Explicit;
    if (cfg.variant == Variant::Implicit && cfg.use_ist) {
      ist_fuse_ = Mlp<T>::create(params_, "ist.fuse", {3 * d, 2 * d, d}, rng);
      ist_world_ = Mlp<T>::create(params_, "ist.world", {2 * d, 2 * d, d}, rng);
      recon_ = Mlp<T>::create(params_, "ist.recon", {d, d, 3}, rng);
    }
    if (cfg.variant == Variant::Explicit) {
      inter_ = PoseEstimator<T>::create(params_, "expl.inter", 3 * d, d, rng);
      expl_ext_ = GeomExtractor<T>::create(params_, "expl.geom", d, cfg.k, rng);
    }
    if (world_inputs)
      wposenc_ = Mlp<T>::create(params_, "main.wpos", {3, d, d}, rng);
    const std::size_t main_width = world_inputs ? 5 * d : 3 * d;
    main_ = PoseEstimator<T>::create(params_, "main.est", main_width, d, rng);
    if (cfg.use_ce)
      aux1_ = PoseEstimator<T>::create(params_, "ce.est", 3 * d, d, rng);
    if (cfg.use_we) {
      world_ext_ = GeomExtractor<T>::create(params_, "we.geom", d, cfg.k, rng);
      we_wposenc_ = Mlp<T>::create(params_, "we.wpos", {3, d, d}, rng);
      aux2_ = PoseEstimator<T>::create(params_, "we.est", 5 * d, d, rng);
    }
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  FeatureSet<T> features(const geo::Points& P, const geo::Points& C) const {
    return feat_.forward(P, C);
  }

  // Eq. 1 dataflow plus the per-point reconstruction head.
  IstOutputs<T> ist_forward(const FeatureSet<T>& f) const {
    IstOutputs<T> out;
    Tensor<T> cat = concat_cols(concat_cols(f.F_geom, f.F_app), f.F_pos);
    out.F_L = ist_fuse_.forward(cat);
    out.F_G = mean_rows(out.F_L);
    out.F_world = ist_world_.forward(concat_cols(out.F_L, out.F_G));
    out.Q_pred = recon_.forward(out.F_world);
    return out;
  }

  PoseHead<T> main_estimator(const FeatureSet<T>& f, const IstOutputs<T>& ist,
                             const geo::Vec3& centroid) const {
    Tensor<T> cam = concat_cols(concat_cols(f.F_geom, f.F_app), f.F_pos);
    if (!ist.F_world.valid()) return main_.forward(cam, centroid);
    Tensor<T> wpe = wposenc_.forward(ist.Q_pred);
    return main_.forward(concat_cols(concat_cols(cam, ist.F_world), wpe),
                         centroid);
  }

  PoseHead<T> camera_enhancer(const FeatureSet<T>& f,
                              const geo::Vec3& centroid) const {
    if (!cfg_.use_ce) throw TrainingOnly("camera_enhancer disabled");
    Tensor<T> cam = concat_cols(concat_cols(f.F_geom, f.F_app), f.F_pos);
    return aux1_.forward(cam, centroid);
  }

  // Returns the ground-truth world-space features (for the distillation
  // target) and the auxiliary estimate that trains their extractor.
  std::pair<Tensor<T>, PoseHead<T>> world_enhancer(
      const FeatureSet<T>& f, const geo::Points& Q_gt,
      const geo::Vec3& centroid) const {
    if (!cfg_.use_we) throw TrainingOnly("world_enhancer disabled");
    geo::Points Qc = feat::center_points(Q_gt);
    Tensor<T> F_Qo = world_ext_.forward(Qc, points_to_tensor<T>(Qc));
    Tensor<T> cam = concat_cols(concat_cols(f.F_geom, f.F_app), f.F_pos);
    Tensor<T> wpe = we_wposenc_.forward(points_to_tensor<T>(Q_gt));
    PoseHead<T> aux2 =
        aux2_.forward(concat_cols(concat_cols(cam, F_Qo), wpe), centroid);
    return {F_Qo, aux2};
  }

  // Full training-mode graph for one instance (Eq. 4 assembled exactly as
  // logged: total = main + aux1 + aux2 + lf*feat + lr*rec).
  StepResult<T> training_forward(const synth::Instance& inst) const {
    StepResult<T> r;
    r.feats = features(inst.P_o, inst.C_o);
    const geo::SymmetrySpec sym = synth::symmetry_for(inst.category);
    Tensor<T> zero = Tensor<T>::scalar(T(0));
    r.loss_aux1 = zero;
    r.loss_aux2 = zero;
    r.loss_feat = zero;
    r.loss_rec = zero;

    if (cfg_.variant == Variant::Explicit) {
      auto [ist, inter] = explicit_transform(r.feats, inst.P_o);
      r.ist = ist;
      r.loss_aux1 = pose_loss(inter, inst.pose, sym);
      r.loss_rec = smooth_l1(r.ist.Q_pred,
                             points_to_tensor<T>(inst.Q_o));
    } else if (cfg_.use_ist) {
      r.ist = ist_forward(r.feats);
      r.loss_rec = smooth_l1(r.ist.Q_pred, points_to_tensor<T>(inst.Q_o));
    }
    r.main = main_estimator(r.feats, r.ist, r.feats.centroid);
    r.loss_main = pose_loss(r.main, inst.pose, sym);
    if (cfg_.use_ce)
      r.loss_aux1 = add(r.loss_aux1,
                        pose_loss(camera_enhancer(r.feats, r.feats.centroid),
                                  inst.pose, sym));
    if (cfg_.use_we) {
      auto [F_Qo, aux2] = world_enhancer(r.feats, inst.Q_o, r.feats.centroid);
      r.loss_aux2 = pose_loss(aux2, inst.pose, sym);
      if (r.ist.F_world.valid()) {
        Tensor<T> target = F_Qo.detach();  // distillation target only
        r.loss_feat = cfg_.feat_loss == FeatLossKind::Mse
                          ? mse(r.ist.F_world, target)
                          : l1(r.ist.F_world, target);
      }
    }
    r.total = add(add(add(r.loss_main, r.loss_aux1), r.loss_aux2),
                  add(scale(r.loss_feat, T(cfg_.lambda_f)),
                      scale(r.loss_rec, T(cfg_.lambda_r))));
    return r;
  }

  // Inference keeps only the feature extractor, the space transformation
  // and the main estimator; no ground truth ever enters.
  geo::Pose inference(const geo::Points& P, const geo::Points& C) const {
    FeatureSet<T> f = features(P, C);
    IstOutputs<T> ist;
    if (cfg_.variant == Variant::Explicit)
      ist = explicit_transform(f, P).first;
    else if (cfg_.use_ist)
      ist = ist_forward(f);
    return main_estimator(f, ist, f.centroid).to_pose();
  }

  // Predicted world coordinates for the Umeyama matching variant.
  geo::Points predict_world_coords(const geo::Points& P,
                                   const geo::Points& C) const {
    FeatureSet<T> f = features(P, C);
    if (cfg_.variant == Variant::Explicit)
      return tensor_to_points(explicit_transform(f, P).first.Q_pred);
    if (!cfg_.use_ist)
      throw ConfigError("predict_world_coords: transformation disabled");
    return tensor_to_points(ist_forward(f).Q_pred);
  }

 private:
  // Explicit counterpart: intermediate pose, hard coordinate transform,
  // second geometric extractor over the transformed cloud.
  std::pair<IstOutputs<T>, PoseHead<T>> explicit_transform(
      const FeatureSet<T>& f, const geo::Points& P) const {
    Tensor<T> cam = concat_cols(concat_cols(f.F_geom, f.F_app), f.F_pos);
    PoseHead<T> inter = inter_.forward(cam, f.centroid);
    Tensor<T> R = transpose(inter.Rt);
    Tensor<T> inv_s = pow_elem(
        add(sum_all(mul(inter.s, inter.s)), Tensor<T>::scalar(T(1e-12))),
        T(-0.5));
    Tensor<T> Pt = points_to_tensor<T>(P);
    Tensor<T> Q = mul(matmul(sub(Pt, inter.t), R), inv_s);
    IstOutputs<T> out;
    out.Q_pred = Q;
    out.F_world = expl_ext_.forward(tensor_to_points(Q), Q);
    return {out, inter};
  }

  ModelConfig cfg_;
  ParamStore<T> params_;
  PointFeat<T> feat_;
  Mlp<T> ist_fuse_, ist_world_, recon_, wposenc_, we_wposenc_;
  PoseEstimator<T> main_, aux1_, aux2_, inter_;
  GeomExtractor<T> world_ext_, expl_ext_;
};

}  // namespace ist::net
