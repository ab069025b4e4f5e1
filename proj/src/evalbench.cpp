#include "ist/evalbench.hpp"

#include <nlohmann/json.hpp>

#include "ist/errors.hpp"

namespace ist::eval {

void MetricsReport::check_invariants() const {
  auto v = [&](const std::string& m) { return mean(m); };
  const bool ok =
      v("iou_75") <= v("iou_50") + 1e-9 && v("iou_50") <= v("iou_25") + 1e-9 &&
      v("deg5_cm2") <= v("deg5_cm5") + 1e-9 &&
      v("deg5_cm5") <= v("deg10_cm5") + 1e-9 &&
      v("deg10_cm5") <= v("deg10_cm10") + 1e-9 &&
      v("deg5_cm2") <= v("deg10_cm2") + 1e-9 &&
      v("deg10_cm2") <= v("deg10_cm5") + 1e-9;
  if (!ok) throw ConfigError("MetricsReport monotonicity violated");
  for (const auto& [metric, per_cat] : values)
    for (const auto& [cat, val] : per_cat)
      if (val < -1e-9 || val > 100.0 + 1e-9)
        throw ConfigError("MetricsReport value out of [0, 100]");
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["sample_count"] = sample_count;
  j["config_hash"] = config_hash;
  j["seeds"] = seeds;
  for (const auto& [metric, per_cat] : values) j["metrics"][metric] = per_cat;
  return j;
}

MetricsReport compute_metrics(const std::vector<geo::Pose>& preds,
                              const std::vector<LabeledPose>& gts,
                              int iou_grid) {
  if (preds.size() != gts.size())
    throw LengthMismatch("compute_metrics: prediction/label count mismatch");
  struct Thresh {
    const char* name;
    double deg, cm;
  };
  static const Thresh pose_thresh[] = {
      {"deg5_cm2", 5, 0.02},  {"deg5_cm5", 5, 0.05},   {"deg10_cm2", 10, 0.02},
      {"deg10_cm5", 10, 0.05}, {"deg10_cm10", 10, 0.10}};
  static const std::pair<const char*, double> iou_thresh[] = {
      {"iou_25", 0.25}, {"iou_50", 0.50}, {"iou_75", 0.75}};

  std::map<synth::Category, std::size_t> count;
  std::map<std::string, std::map<synth::Category, std::size_t>> hits;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& [gt, cat] = gts[i];
    ++count[cat];
    const geo::SymmetrySpec sym = synth::symmetry_for(cat);
    const double rerr = geo::rotation_error_deg(preds[i].R, gt.R, sym);
    const double terr = (preds[i].t - gt.t).norm();
    const double iou = geo::iou3d(preds[i], gt, iou_grid);
    for (const auto& th : pose_thresh)
      if (rerr <= th.deg && terr <= th.cm) ++hits[th.name][cat];
    for (const auto& [name, th] : iou_thresh)
      if (iou >= th) ++hits[name][cat];
  }

  MetricsReport rep;
  rep.sample_count = preds.size();
  for (const auto& metric : kMetricNames) {
    double cat_sum = 0;
    std::size_t inst_hits = 0;
    for (const auto& [cat, n] : count) {
      const std::size_t h = hits[metric][cat];
      const double pct = 100.0 * double(h) / double(n);
      rep.values[metric][synth::category_name(cat)] = pct;
      cat_sum += pct;
      inst_hits += h;
    }
    rep.values[metric]["mean"] =
        count.empty() ? 0.0 : cat_sum / double(count.size());
    rep.values[metric]["mean_instances"] =
        preds.empty() ? 0.0 : 100.0 * double(inst_hits) / double(preds.size());
  }
  return rep;
}

}  // namespace ist::eval
