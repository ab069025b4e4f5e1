#pragma once

// Experiment harness: training loop, direct and Umeyama-matching
// evaluation, the module ablation grid, the prior case study and the
// implicit-vs-explicit benchmark.

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "ist/checkpoint.hpp"
#include "ist/config.hpp"
#include "ist/evalbench.hpp"
#include "ist/istnet.hpp"
#include "ist/prior_baseline.hpp"

namespace ist::harness {

using LogSink = std::function<void(const nlohmann::json&)>;

struct EpochLog {
  std::size_t epoch = 0;
  net::LossBreakdown mean;
  double lr = 0;
};

inline std::uint64_t epoch_seed(std::uint64_t base, std::size_t epoch) {
  return base ^ (0x9E3779B97F4A7C15ull * (epoch + 1));
}

// One epoch: shuffled mini-batches, gradient averaging, Eq. 4 identity
// asserted on every step. Deterministic given (config seed, epoch).
template <typename T>
EpochLog train_epoch(net::Model<T>& model, AdamOptimizer<T>& opt,
                     const std::vector<synth::Instance>& data,
                     const cfg::RunConfig& rc, std::size_t epoch) {
  std::mt19937_64 rng(epoch_seed(rc.seed, epoch));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const bool augmenting = rc.augment.uniform_noise > 0 ||
                          rc.augment.rot_max_deg > 0 ||
                          rc.augment.trans_max > 0 ||
                          rc.augment.scale_jitter > 0;
  synth::AugmentConfig ac{rc.augment.uniform_noise, rc.augment.rot_max_deg,
                          rc.augment.trans_max, rc.augment.scale_jitter};
  EpochLog log;
  log.epoch = epoch;
  std::size_t steps = 0;
  for (std::size_t start = 0; start < order.size(); start += rc.batch_size) {
    const std::size_t end = std::min(order.size(), start + rc.batch_size);
    const T inv_batch = T(1) / T(end - start);
    net::LossBreakdown batch_mean;
    for (std::size_t bi = start; bi < end; ++bi) {
      const synth::Instance& base = data[order[bi]];
      net::StepResult<T> r =
          augmenting ? model.training_forward(synth::augment(base, rng, ac))
                     : model.training_forward(base);
      // Eq. 4 identity: the reported total must equal the recomputed
      // weighted sum of its parts, in the working precision
      const T recomputed =
          T(T(T(r.loss_main.item() + r.loss_aux1.item()) + r.loss_aux2.item()) +
            T(T(T(rc.lambda_f) * r.loss_feat.item()) +
              T(T(rc.lambda_r) * r.loss_rec.item())));
      if (std::abs(double(r.total.item()) - double(recomputed)) > 1e-9)
        throw ConfigError("loss identity violated at a training step");
      Tensor<T> scaled = scale(r.total, inv_batch);
      backprop(scaled);
      const net::LossBreakdown b = r.breakdown();
      batch_mean.main += b.main;
      batch_mean.aux1 += b.aux1;
      batch_mean.aux2 += b.aux2;
      batch_mean.feat += b.feat;
      batch_mean.rec += b.rec;
      batch_mean.total += b.total;
    }
    opt.step(model.params());
    ++steps;
    const double inv = 1.0 / double(end - start);
    log.mean.main += batch_mean.main * inv;
    log.mean.aux1 += batch_mean.aux1 * inv;
    log.mean.aux2 += batch_mean.aux2 * inv;
    log.mean.feat += batch_mean.feat * inv;
    log.mean.rec += batch_mean.rec * inv;
    log.mean.total += batch_mean.total * inv;
  }
  if (steps > 0) {
    const double inv = 1.0 / double(steps);
    log.mean.main *= inv;
    log.mean.aux1 *= inv;
    log.mean.aux2 *= inv;
    log.mean.feat *= inv;
    log.mean.rec *= inv;
    log.mean.total *= inv;
  }
  log.mean.lambda_f = rc.lambda_f;
  log.mean.lambda_r = rc.lambda_r;
  log.lr = opt.learning_rate();
  return log;
}

template <typename T>
std::vector<EpochLog> train_model(net::Model<T>& model, AdamOptimizer<T>& opt,
                                  const std::vector<synth::Instance>& data,
                                  const cfg::RunConfig& rc,
                                  std::size_t first_epoch = 0,
                                  const LogSink& sink = {}) {
  std::vector<EpochLog> logs;
  for (std::size_t e = first_epoch; e < rc.epochs; ++e) {
    EpochLog log = train_epoch(model, opt, data, rc, e);
    if (sink) {
      nlohmann::json j{{"epoch", log.epoch},
                       {"loss_main", log.mean.main},
                       {"loss_aux1", log.mean.aux1},
                       {"loss_aux2", log.mean.aux2},
                       {"loss_feat", log.mean.feat},
                       {"loss_rec", log.mean.rec},
                       {"loss_total", log.mean.total},
                       {"lambda_f", log.mean.lambda_f},
                       {"lambda_r", log.mean.lambda_r},
                       {"lr", log.lr}};
      sink(j);
    }
    logs.push_back(log);
  }
  return logs;
}

template <typename T>
eval::MetricsReport evaluate_direct(const net::Model<T>& model,
                                    const std::vector<synth::Instance>& data,
                                    int iou_grid = 40) {
  std::vector<geo::Pose> preds;
  std::vector<eval::LabeledPose> gts;
  preds.reserve(data.size());
  for (const auto& inst : data) {
    preds.push_back(model.inference(inst.P_o, inst.C_o));
    gts.emplace_back(inst.pose, inst.category);
  }
  return eval::compute_metrics(preds, gts, iou_grid);
}

inline geo::Pose failed_pose() {
  geo::Pose p;
  p.t = geo::Vec3(1e6, 1e6, 1e6);  // misses every threshold
  p.s = geo::Vec3(1e-3, 1e-3, 1e-3);
  return p;
}

// Umeyama matching variant: solve the similarity transform between the
// reconstructed world coordinates and the observed cloud; the box size is
// the recovered scale times the tight-box extents of the reconstruction.
template <typename T>
eval::MetricsReport evaluate_umeyama(const net::Model<T>& model,
                                     const std::vector<synth::Instance>& data,
                                     int iou_grid = 40) {
  std::vector<geo::Pose> preds;
  std::vector<eval::LabeledPose> gts;
  for (const auto& inst : data) {
    geo::Pose pose;
    try {
      const geo::Points Q = model.predict_world_coords(inst.P_o, inst.C_o);
      const geo::Similarity sim = geo::umeyama_solve(Q, inst.P_o);
      pose.R = sim.R;
      pose.t = sim.t;
      const geo::Vec3 ext =
          Q.colwise().maxCoeff().transpose() - Q.colwise().minCoeff().transpose();
      pose.s = sim.scale * ext.cwiseMax(1e-6);
    } catch (const DegenerateConfiguration&) {
      pose = failed_pose();  // instance scored as failure
    }
    preds.push_back(pose);
    gts.emplace_back(inst.pose, inst.category);
  }
  return eval::compute_metrics(preds, gts, iou_grid);
}

// ---- prior case study ----------------------------------------------------

enum class PriorCase { Case1, Case2, Case3, Case4 };

template <typename T>
struct PriorCaseModel {
  ParamStore<T> params;
  feat::PointFeat<T> feat;
  prior::DeformNet<T> deform;       // cases 1-3
  net::PoseEstimator<T> pose_head;  // case 4
  std::map<synth::Category, prior::ShapePrior> priors;
  PriorCase kind;
};

template <typename T>
PriorCaseModel<T> make_prior_case_model(
    PriorCase kind, const cfg::RunConfig& rc,
    const std::vector<synth::Instance>& train_data, std::uint64_t init_seed) {
  PriorCaseModel<T> m;
  m.kind = kind;
  std::mt19937_64 rng(init_seed);
  m.feat = feat::PointFeat<T>::create(m.params, "feat", rc.d, rc.k, rc.use_pe,
                                      rng);
  if (kind == PriorCase::Case4) {
    m.pose_head =
        net::PoseEstimator<T>::create(m.params, "pose", 3 * rc.d, rc.d, rng);
    return m;
  }
  m.deform = prior::DeformNet<T>::create(m.params, "deform", rc.d, rng);
  // gather canonical clouds per category, subsampled to the prior size
  std::map<synth::Category, std::vector<geo::Points>> shapes;
  const std::size_t M = rc.n_points;
  for (const auto& inst : train_data) {
    if (inst.model.rows() == 0) continue;
    const Eigen::Index m_rows =
        std::min<Eigen::Index>(Eigen::Index(M), inst.model.rows());
    shapes[inst.category].push_back(inst.model.topRows(m_rows));
  }
  const prior::PriorMode mode = kind == PriorCase::Case1
                                    ? prior::PriorMode::Category
                                    : kind == PriorCase::Case2
                                          ? prior::PriorMode::Shared
                                          : prior::PriorMode::Noise;
  for (const auto& [cat, v] : shapes)
    m.priors[cat] = prior::build_prior(mode, cat, shapes, init_seed, M);
  return m;
}

template <typename T>
Tensor<T> prior_case_loss(const PriorCaseModel<T>& m,
                          const synth::Instance& inst) {
  feat::FeatureSet<T> f = m.feat.forward(inst.P_o, inst.C_o);
  if (m.kind == PriorCase::Case4) {
    Tensor<T> cam = concat_cols(concat_cols(f.F_geom, f.F_app), f.F_pos);
    net::PoseHead<T> est = m.pose_head.forward(cam, f.centroid);
    return net::pose_loss(est, inst.pose, synth::symmetry_for(inst.category));
  }
  auto out = m.deform.forward(f, m.priors.at(inst.category));
  const Eigen::Index m_rows =
      std::min<Eigen::Index>(out.reconstructed.rows(), inst.model.rows());
  return prior::deform_losses(out, inst.model.topRows(m_rows), inst.Q_o);
}

template <typename T>
geo::Pose prior_case_predict(const PriorCaseModel<T>& m,
                             const synth::Instance& inst) {
  feat::FeatureSet<T> f = m.feat.forward(inst.P_o, inst.C_o);
  if (m.kind == PriorCase::Case4) {
    Tensor<T> cam = concat_cols(concat_cols(f.F_geom, f.F_app), f.F_pos);
    return m.pose_head.forward(cam, f.centroid).to_pose();
  }
  auto out = m.deform.forward(f, m.priors.at(inst.category));
  const geo::Points Q = net::tensor_to_points(out.world_pred);
  try {
    const geo::Similarity sim = geo::umeyama_solve(Q, inst.P_o);
    geo::Pose pose;
    pose.R = sim.R;
    pose.t = sim.t;
    const geo::Points recon = net::tensor_to_points(out.reconstructed);
    const geo::Vec3 ext = recon.colwise().maxCoeff().transpose() -
                          recon.colwise().minCoeff().transpose();
    pose.s = sim.scale * ext.cwiseMax(1e-6);
    return pose;
  } catch (const DegenerateConfiguration&) {
    return failed_pose();
  }
}

// ---- non-template entry points (dispatch on dtype) -----------------------

// Snapshot path when set in the config, otherwise generated in memory.
std::vector<synth::Instance> load_split(const cfg::RunConfig& rc,
                                        bool eval_split);

struct TrainOutcome {
  std::vector<EpochLog> logs;
  eval::MetricsReport direct;
  eval::MetricsReport umeyama;  // only when requested
};

// Train an IST-Net style model per the config and evaluate it. When
// checkpoint_path is non-empty, best (lowest mean total loss) and final
// checkpoints are written as <path>.best and <path>.
TrainOutcome run_experiment(const cfg::RunConfig& rc,
                            const std::vector<synth::Instance>& train_data,
                            const std::vector<synth::Instance>& eval_data,
                            const std::string& checkpoint_path = "",
                            const LogSink& sink = {}, bool want_umeyama = false,
                            int iou_grid = 40);

// Evaluate a checkpoint (mode: "direct" | "umeyama").
eval::MetricsReport eval_checkpoint(const cfg::RunConfig& rc,
                                    const std::string& checkpoint_path,
                                    const std::vector<synth::Instance>& data,
                                    const std::string& mode, int iou_grid = 40);

// Table-3 style grid: E1..E5 switch combinations over the given seeds.
nlohmann::json ablation_grid(const cfg::RunConfig& base,
                             const std::vector<std::uint64_t>& seeds,
                             const LogSink& sink = {});

// lambda_f sweep (Table-7 style) and feat-loss-type comparison.
nlohmann::json lambda_sweep(const cfg::RunConfig& base,
                            const std::vector<double>& lambdas,
                            const LogSink& sink = {});
nlohmann::json feat_loss_comparison(const cfg::RunConfig& base,
                                    const LogSink& sink = {});

// Prior study: cases 1-4 over seeds, JSON table {case -> metric -> values}.
nlohmann::json prior_case_study(const cfg::RunConfig& base,
                                const std::vector<PriorCase>& cases,
                                const std::vector<std::uint64_t>& seeds,
                                const LogSink& sink = {});

// Implicit vs explicit parameter count and inference throughput.
nlohmann::json speed_bench(const cfg::RunConfig& base, std::size_t n_instances,
                           std::size_t warmup, std::size_t iters);

}  // namespace ist::harness
