#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ist/istnet.hpp"
#include "ist/synthdata.hpp"

#include <nlohmann/json_fwd.hpp>

namespace ist::cfg {

struct OptimizerConfig {
  double learning_rate = 0.01;
  std::uint64_t decay_interval_epochs = 1;  // 0 disables
  double decay_multiplier = 0.5;
};

struct AugmentSettings {
  double uniform_noise = 0.0;
  double rot_max_deg = 0.0;
  double trans_max = 0.0;
  double scale_jitter = 0.0;
};

struct RunConfig {
  // model
  std::size_t d = 64;
  std::size_t k = 8;
  std::size_t n_points = 256;
  double lambda_f = 10.0;
  double lambda_r = 1.0;
  std::string feat_loss = "mse";  // mse | l1
  bool use_ist = true, use_ce = true, use_we = true, use_pe = true;
  std::string variant = "implicit";  // implicit | explicit | prior-case
  std::string dtype = "float32";     // float32 | float64

  // optimization
  OptimizerConfig optimizer;
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;

  // data
  std::string train_data;  // snapshot path; empty -> generate in memory
  std::string eval_data;
  std::size_t train_count = 2000;
  std::size_t eval_count = 400;
  double noise_sigma = 0.002;
  bool partial = false;
  std::size_t model_points = 512;
  AugmentSettings augment;

  net::ModelConfig model_config() const;
  synth::GenConfig gen_config(bool eval_split) const;
  void validate() const;  // throws ConfigError naming the offending field
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& c);
RunConfig load_config(const std::string& path);

// FNV-1a over the canonical (sorted-key) serialization
std::uint64_t config_hash(const RunConfig& c);

// apply "key=value" overrides using the JSON field names
void apply_override(RunConfig& c, const std::string& assignment);

}  // namespace ist::cfg
