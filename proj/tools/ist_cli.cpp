// Command-line front end: dataset generation, training, evaluation,
// ablation/prior studies and the implicit-vs-explicit benchmark.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ist/harness.hpp"
#include "ist/io_util.hpp"

using nlohmann::json;
using namespace ist;

namespace {

int g_verbosity = 1;  // IST_VERBOSITY: 0 quiet, 1 progress (default)

cfg::RunConfig make_config(const std::string& config_path,
                           const std::vector<std::string>& overrides) {
  cfg::RunConfig rc;
  if (!config_path.empty()) rc = cfg::load_config(config_path);
  for (const auto& o : overrides) cfg::apply_override(rc, o);
  rc.validate();
  return rc;
}

harness::LogSink stdout_sink(std::ofstream* file) {
  return [file](const json& j) {
    const std::string line = j.dump();
    if (g_verbosity > 0) std::cout << line << "\n";
    if (file && file->is_open()) *file << line << "\n" << std::flush;
  };
}

void write_report(const json& j, const std::string& out_path) {
  std::cout << j.dump(2) << std::endl;
  if (!out_path.empty()) {
    const std::string text = j.dump(2) + "\n";
    io::write_file_atomic(
        out_path, std::vector<unsigned char>(text.begin(), text.end()));
  }
}

std::vector<std::uint64_t> parse_seeds(const std::string& s,
                                       std::uint64_t base_seed) {
  if (s.empty()) return {base_seed, base_seed + 1, base_seed + 2};
  std::vector<std::uint64_t> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const std::size_t comma = s.find(',', pos);
    out.push_back(std::stoull(s.substr(pos, comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw ConfigError("--seeds: no seeds given");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* v = std::getenv("IST_VERBOSITY")) g_verbosity = std::atoi(v);

  CLI::App app{"category-level pose estimation workbench"};
  app.require_subcommand(1);

  std::string config_path, out_path, log_path, checkpoint, mode = "direct";
  std::string seeds_arg, ablate_mode = "grid";
  std::vector<std::string> overrides;
  std::size_t bench_instances = 64, bench_runs = 5, bench_warmup = 1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--set", overrides, "override config key=value")
        ->take_all();
  };

  auto* gen = app.add_subcommand("gen-data", "write a dataset snapshot");
  add_common(gen);
  gen->add_option("--out", out_path, "snapshot path")->required();

  auto* train = app.add_subcommand("train", "train a model");
  add_common(train);
  train->add_option("--out", checkpoint, "checkpoint path")->required();
  train->add_option("--log", log_path, "JSON-lines training log");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  ev->add_option("--mode", mode, "direct | umeyama")
      ->check(CLI::IsMember({"direct", "umeyama"}));
  ev->add_option("--out", out_path, "report path");

  auto* ab = app.add_subcommand("ablate", "module/loss ablation studies");
  add_common(ab);
  ab->add_option("--mode", ablate_mode, "grid | lambda | featloss")
      ->check(CLI::IsMember({"grid", "lambda", "featloss"}));
  ab->add_option("--seeds", seeds_arg, "comma-separated seeds (grid mode)");
  ab->add_option("--out", out_path, "report path");

  auto* ps = app.add_subcommand("prior-study", "shape-prior case study");
  add_common(ps);
  ps->add_option("--seeds", seeds_arg, "comma-separated seeds");
  ps->add_option("--out", out_path, "report path");

  auto* be = app.add_subcommand("bench", "implicit vs explicit benchmark");
  add_common(be);
  be->add_option("--instances", bench_instances, "instances per timed run");
  be->add_option("--runs", bench_runs, "timed runs (median reported)");
  be->add_option("--warmup", bench_warmup, "untimed warmup runs");
  be->add_option("--out", out_path, "report path");

  CLI11_PARSE(app, argc, argv);

  try {
    const cfg::RunConfig rc = make_config(config_path, overrides);

    if (gen->parsed()) {
      const auto data = synth::generate_dataset(rc.gen_config(false));
      synth::write_snapshot(data, out_path);
      const auto bytes = io::read_file(out_path);
      std::cout << json{{"count", data.size()},
                        {"path", out_path},
                        {"crc32", io::crc32(bytes.data(), bytes.size())},
                        {"config_hash", cfg::config_hash(rc)}}
                       .dump()
                << std::endl;
      return 0;
    }

    if (train->parsed()) {
      std::ofstream logf;
      if (!log_path.empty()) logf.open(log_path);
      const auto train_data = harness::load_split(rc, false);
      const auto eval_data = harness::load_split(rc, true);
      auto outcome = harness::run_experiment(rc, train_data, eval_data,
                                             checkpoint, stdout_sink(&logf));
      write_report(outcome.direct.to_json(), "");
      return 0;
    }

    if (ev->parsed()) {
      const auto data = harness::load_split(rc, true);
      const auto rep = harness::eval_checkpoint(rc, checkpoint, data, mode);
      write_report(rep.to_json(), out_path);
      return 0;
    }

    if (ab->parsed()) {
      std::ofstream logf;
      json rep;
      if (ablate_mode == "lambda")
        rep = harness::lambda_sweep(rc, {1, 3, 5, 10, 20, 50, 100},
                                    stdout_sink(nullptr));
      else if (ablate_mode == "featloss")
        rep = harness::feat_loss_comparison(rc, stdout_sink(nullptr));
      else
        rep = harness::ablation_grid(rc, parse_seeds(seeds_arg, rc.seed),
                                     stdout_sink(nullptr));
      write_report(rep, out_path);
      return 0;
    }

    if (ps->parsed()) {
      using harness::PriorCase;
      const auto rep = harness::prior_case_study(
          rc,
          {PriorCase::Case1, PriorCase::Case2, PriorCase::Case3,
           PriorCase::Case4},
          parse_seeds(seeds_arg, rc.seed), stdout_sink(nullptr));
      write_report(rep, out_path);
      return 0;
    }

    if (be->parsed()) {
      write_report(
          harness::speed_bench(rc, bench_instances, bench_warmup, bench_runs),
          out_path);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "validation error: " << e.what() << std::endl;
    return 1;
  } catch (const UnknownCategory& e) {
    std::cerr << "validation error: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
