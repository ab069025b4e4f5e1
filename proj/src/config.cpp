#include "ist/config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "ist/errors.hpp"

namespace ist::cfg {

using nlohmann::json;

net::ModelConfig RunConfig::model_config() const {
  net::ModelConfig m;
  m.d = d;
  m.k = k;
  m.use_ist = use_ist;
  m.use_ce = use_ce;
  m.use_we = use_we;
  m.use_pe = use_pe;
  m.lambda_f = lambda_f;
  m.lambda_r = lambda_r;
  m.feat_loss = feat_loss == "l1" ? net::FeatLossKind::L1 : net::FeatLossKind::Mse;
  m.variant = variant == "explicit" ? net::Variant::Explicit : net::Variant::Implicit;
  return m;
}

synth::GenConfig RunConfig::gen_config(bool eval_split) const {
  synth::GenConfig g;
  g.count = eval_split ? eval_count : train_count;
  g.n_points = n_points;
  g.model_points = model_points;
  g.noise_sigma = noise_sigma;
  g.partial = partial;
  g.seed = eval_split ? seed * 2 + 1000001 : seed * 2 + 17;
  return g;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("config field '" + field + "': " + why);
  };
  if (d == 0) fail("d", "must be positive");
  if (k == 0) fail("k", "must be positive");
  if (n_points < 16) fail("n_points", "must be at least 16");
  if (lambda_f < 0) fail("lambda_f", "must be >= 0");
  if (lambda_r < 0) fail("lambda_r", "must be >= 0");
  if (feat_loss != "mse" && feat_loss != "l1")
    fail("feat_loss", "must be 'mse' or 'l1'");
  if (variant != "implicit" && variant != "explicit" && variant != "prior-case")
    fail("variant", "unknown variant '" + variant + "'");
  if (dtype != "float32" && dtype != "float64")
    fail("dtype", "must be 'float32' or 'float64'");
  if (!(optimizer.learning_rate > 0))
    fail("optimizer.learning_rate", "must be > 0");
  if (!(optimizer.decay_multiplier > 0))
    fail("optimizer.decay_multiplier", "must be > 0");
  if (batch_size == 0) fail("batch_size", "must be positive");
  if (noise_sigma < 0) fail("noise_sigma", "must be >= 0");
}

json config_to_json(const RunConfig& c) {
  return json{
      {"d", c.d},
      {"k", c.k},
      {"n_points", c.n_points},
      {"lambda_f", c.lambda_f},
      {"lambda_r", c.lambda_r},
      {"feat_loss", c.feat_loss},
      {"use_ist", c.use_ist},
      {"use_ce", c.use_ce},
      {"use_we", c.use_we},
      {"use_pe", c.use_pe},
      {"variant", c.variant},
      {"dtype", c.dtype},
      {"optimizer",
       {{"learning_rate", c.optimizer.learning_rate},
        {"decay_interval_epochs", c.optimizer.decay_interval_epochs},
        {"decay_multiplier", c.optimizer.decay_multiplier}}},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"train_data", c.train_data},
      {"eval_data", c.eval_data},
      {"train_count", c.train_count},
      {"eval_count", c.eval_count},
      {"noise_sigma", c.noise_sigma},
      {"partial", c.partial},
      {"model_points", c.model_points},
      {"augment",
       {{"uniform_noise", c.augment.uniform_noise},
        {"rot_max_deg", c.augment.rot_max_deg},
        {"trans_max", c.augment.trans_max},
        {"scale_jitter", c.augment.scale_jitter}}},
  };
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  try {
    c.d = j.value("d", c.d);
    c.k = j.value("k", c.k);
    c.n_points = j.value("n_points", c.n_points);
    c.lambda_f = j.value("lambda_f", c.lambda_f);
    c.lambda_r = j.value("lambda_r", c.lambda_r);
    c.feat_loss = j.value("feat_loss", c.feat_loss);
    c.use_ist = j.value("use_ist", c.use_ist);
    c.use_ce = j.value("use_ce", c.use_ce);
    c.use_we = j.value("use_we", c.use_we);
    c.use_pe = j.value("use_pe", c.use_pe);
    c.variant = j.value("variant", c.variant);
    c.dtype = j.value("dtype", c.dtype);
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      c.optimizer.learning_rate =
          o.value("learning_rate", c.optimizer.learning_rate);
      c.optimizer.decay_interval_epochs =
          o.value("decay_interval_epochs", c.optimizer.decay_interval_epochs);
      c.optimizer.decay_multiplier =
          o.value("decay_multiplier", c.optimizer.decay_multiplier);
    }
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.train_data = j.value("train_data", c.train_data);
    c.eval_data = j.value("eval_data", c.eval_data);
    c.train_count = j.value("train_count", c.train_count);
    c.eval_count = j.value("eval_count", c.eval_count);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.partial = j.value("partial", c.partial);
    c.model_points = j.value("model_points", c.model_points);
    if (j.contains("augment")) {
      const auto& a = j.at("augment");
      c.augment.uniform_noise = a.value("uniform_noise", 0.0);
      c.augment.rot_max_deg = a.value("rot_max_deg", 0.0);
      c.augment.trans_max = a.value("trans_max", 0.0);
      c.augment.scale_jitter = a.value("scale_jitter", 0.0);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoFailure("cannot open config '" + path + "'");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

std::uint64_t config_hash(const RunConfig& c) {
  const std::string s = config_to_json(c).dump();  // keys sorted canonically
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string val = assignment.substr(eq + 1);
  json j = config_to_json(c);
  // dotted keys address nested objects
  json* slot = &j;
  std::size_t pos = 0;
  std::string k = key;
  while (true) {
    const auto dot = k.find('.');
    if (dot == std::string::npos) break;
    const std::string head = k.substr(0, dot);
    if (!slot->contains(head))
      throw ConfigError("unknown config key '" + key + "'");
    slot = &(*slot)[head];
    k = k.substr(dot + 1);
    (void)pos;
  }
  if (!slot->contains(k)) throw ConfigError("unknown config key '" + key + "'");
  json& field = (*slot)[k];
  try {
    if (field.is_string())
      field = val;
    else if (field.is_boolean())
      field = (val == "true" || val == "1");
    else if (field.is_number_unsigned())
      field = std::stoull(val);
    else
      field = std::stod(val);
  } catch (const std::exception&) {
    throw ConfigError("cannot parse value for '" + key + "'");
  }
  c = config_from_json(j);
}

}  // namespace ist::cfg
