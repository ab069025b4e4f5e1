#pragma once

// Benchmark metrics: per-category mean precision at 3D-IoU thresholds and
// combined rotation/translation thresholds, with symmetry-aware rotation
// error.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ist/geometry.hpp"
#include "ist/synthdata.hpp"

namespace ist::eval {

inline const std::vector<std::string> kMetricNames = {
    "iou_25", "iou_50", "iou_75", "deg5_cm2", "deg5_cm5",
    "deg10_cm2", "deg10_cm5", "deg10_cm10"};

struct MetricsReport {
  // metric -> category name (or "mean" / "mean_instances") -> percentage
  std::map<std::string, std::map<std::string, double>> values;
  std::size_t sample_count = 0;
  std::uint64_t config_hash = 0;
  std::vector<std::uint64_t> seeds;

  double mean(const std::string& metric) const {
    return values.at(metric).at("mean");
  }
  // monotonicity across nested thresholds; throws on violation
  void check_invariants() const;
  nlohmann::json to_json() const;
};

using LabeledPose = std::pair<geo::Pose, synth::Category>;

MetricsReport compute_metrics(const std::vector<geo::Pose>& preds,
                              const std::vector<LabeledPose>& gts,
                              int iou_grid = 40);

// parameter count + throughput of a model's inference path
struct BenchResult {
  std::size_t param_count = 0;
  double instances_per_sec = 0;   // median over runs
  double cv = 0;                  // coefficient of variation across runs
};

}  // namespace ist::eval
