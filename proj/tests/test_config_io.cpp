#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "ist/checkpoint.hpp"
#include "ist/config.hpp"
#include "ist/harness.hpp"

using namespace ist;

TEST_CASE("crc32 known vector and byte codec roundtrip") {
  const char* s = "123456789";
  CHECK(io::crc32(s, 9) == 0xCBF43926u);
  CHECK(io::crc32(s, 0) == 0u);

  io::ByteWriter w;
  w.u32(7);
  w.u64(0xDEADBEEFCAFEull);
  w.f32(1.5f);
  w.str("hello");
  io::ByteReader r{w.buf.data(), w.buf.data() + w.buf.size()};
  CHECK(r.u32() == 7);
  CHECK(r.u64() == 0xDEADBEEFCAFEull);
  CHECK(r.f32() == 1.5f);
  CHECK(r.str() == "hello");
  CHECK_THROWS_AS(r.u32(), ChecksumMismatch);  // past the end
}

TEST_CASE("file helpers") {
  std::vector<std::uint8_t> payload = {1, 2, 3, 250, 0, 17};
  io::write_file_atomic("io_test.bin", payload);
  CHECK(io::read_file("io_test.bin") == payload);
  std::remove("io_test.bin");
  CHECK_THROWS_AS(io::read_file("io_test_missing.bin"), IoFailure);
}

TEST_CASE("config json roundtrip preserves every field") {
  cfg::RunConfig c;
  c.d = 24;
  c.k = 5;
  c.n_points = 48;
  c.lambda_f = 3.5;
  c.feat_loss = "l1";
  c.use_ce = false;
  c.variant = "explicit";
  c.dtype = "float64";
  c.optimizer.learning_rate = 0.003;
  c.optimizer.decay_interval_epochs = 7;
  c.optimizer.decay_multiplier = 0.25;
  c.epochs = 11;
  c.batch_size = 4;
  c.seed = 99;
  c.train_data = "a.bin";
  c.eval_data = "b.bin";
  c.train_count = 10;
  c.eval_count = 5;
  c.noise_sigma = 0.004;
  c.partial = true;
  c.model_points = 64;
  c.augment.rot_max_deg = 10.0;
  c.augment.scale_jitter = 0.05;

  const auto j = cfg::config_to_json(c);
  const auto back = cfg::config_from_json(j);
  CHECK(cfg::config_to_json(back) == j);
  CHECK(cfg::config_hash(back) == cfg::config_hash(c));
}

TEST_CASE("validation names the offending field") {
  cfg::RunConfig c;
  c.n_points = 4;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("n_points"),
                       ConfigError);
  c = cfg::RunConfig{};
  c.feat_loss = "huber";
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("feat_loss"),
                       ConfigError);
  c = cfg::RunConfig{};
  c.optimizer.learning_rate = 0;
  CHECK_THROWS_WITH_AS(c.validate(),
                       doctest::Contains("optimizer.learning_rate"),
                       ConfigError);
  c = cfg::RunConfig{};
  c.dtype = "float16";
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("dtype"), ConfigError);
}

TEST_CASE("config hash is stable and sensitive") {
  cfg::RunConfig a, b;
  CHECK(cfg::config_hash(a) == cfg::config_hash(b));
  b.d = a.d + 1;
  CHECK(cfg::config_hash(a) != cfg::config_hash(b));
  b = a;
  b.augment.trans_max = 0.01;
  CHECK(cfg::config_hash(a) != cfg::config_hash(b));
}

TEST_CASE("overrides accept dotted keys and reject unknown ones") {
  cfg::RunConfig c;
  cfg::apply_override(c, "d=32");
  CHECK(c.d == 32);
  cfg::apply_override(c, "optimizer.learning_rate=0.001");
  CHECK(c.optimizer.learning_rate == doctest::Approx(0.001));
  cfg::apply_override(c, "use_ce=false");
  CHECK(!c.use_ce);
  cfg::apply_override(c, "feat_loss=l1");
  CHECK(c.feat_loss == "l1");
  cfg::apply_override(c, "augment.rot_max_deg=12.5");
  CHECK(c.augment.rot_max_deg == doctest::Approx(12.5));

  CHECK_THROWS_AS(cfg::apply_override(c, "no_such_key=1"), ConfigError);
  CHECK_THROWS_AS(cfg::apply_override(c, "optimizer.momentum=0.9"),
                  ConfigError);
  CHECK_THROWS_AS(cfg::apply_override(c, "just-a-token"), ConfigError);
  CHECK_THROWS_AS(cfg::apply_override(c, "d=notanumber"), ConfigError);
  // an override that fails validation must not go through either
  CHECK_THROWS_AS(cfg::apply_override(c, "feat_loss=huber"), ConfigError);
  CHECK(c.feat_loss == "l1");
}

TEST_CASE("config file loading") {
  cfg::RunConfig c;
  c.d = 20;
  {
    std::ofstream f("cfg_test.json");
    f << cfg::config_to_json(c).dump(2);
  }
  const auto back = cfg::load_config("cfg_test.json");
  CHECK(back.d == 20);
  std::remove("cfg_test.json");
  CHECK_THROWS_AS(cfg::load_config("cfg_missing.json"), IoFailure);
  {
    std::ofstream f("cfg_bad.json");
    f << "{not json";
  }
  CHECK_THROWS_AS(cfg::load_config("cfg_bad.json"), ConfigError);
  std::remove("cfg_bad.json");
}

namespace {

cfg::RunConfig tiny_run_config() {
  cfg::RunConfig rc;
  rc.d = 8;
  rc.k = 4;
  rc.n_points = 24;
  rc.train_count = 12;
  rc.eval_count = 8;
  rc.epochs = 2;
  rc.batch_size = 4;
  rc.seed = 3;
  rc.optimizer.learning_rate = 0.002;
  rc.optimizer.decay_interval_epochs = 1;
  return rc;
}

}  // namespace

TEST_CASE("checkpoint roundtrip restores float32 weights bitwise") {
  const auto rc = tiny_run_config();
  net::Model<float> model(rc.model_config(), 5);
  const std::uint64_t hash = cfg::config_hash(rc);
  ckpt::save_checkpoint("ckpt_test.bin", model.params(), hash);

  net::Model<float> other(rc.model_config(), 6);
  bool differed = false;
  const auto& e1 = model.params().entries();
  auto& e2 = other.params().entries();
  for (std::size_t i = 0; i < e1.size(); ++i)
    if (e1[i].second.data() != e2[i].second.data()) differed = true;
  CHECK(differed);

  ckpt::load_checkpoint("ckpt_test.bin", other.params(), hash);
  for (std::size_t i = 0; i < e1.size(); ++i) {
    CHECK(e2[i].first == e1[i].first);
    CHECK(e2[i].second.data() == e1[i].second.data());
  }

  SUBCASE("config hash mismatch is rejected") {
    CHECK_THROWS_AS(
        ckpt::load_checkpoint("ckpt_test.bin", other.params(), hash + 1),
        ConfigHashMismatch);
  }
  SUBCASE("layout mismatch is rejected") {
    auto rc2 = rc;
    rc2.d = 12;
    net::Model<float> wrong(rc2.model_config(), 5);
    CHECK_THROWS_AS(
        ckpt::load_checkpoint("ckpt_test.bin", wrong.params(), hash),
        ConfigHashMismatch);
  }
  SUBCASE("corruption and format errors") {
    auto bytes = io::read_file("ckpt_test.bin");
    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x55;
    io::write_file_atomic("ckpt_bad.bin", flipped);
    CHECK_THROWS_AS(
        ckpt::load_checkpoint("ckpt_bad.bin", other.params(), hash),
        ChecksumMismatch);
    auto magic = bytes;
    magic[0] = 'X';
    io::write_file_atomic("ckpt_bad.bin", magic);
    CHECK_THROWS_AS(
        ckpt::load_checkpoint("ckpt_bad.bin", other.params(), hash),
        FormatVersionMismatch);
    auto trunc = bytes;
    trunc.resize(trunc.size() - 9);
    io::write_file_atomic("ckpt_bad.bin", trunc);
    CHECK_THROWS_AS(
        ckpt::load_checkpoint("ckpt_bad.bin", other.params(), hash),
        ChecksumMismatch);
    std::remove("ckpt_bad.bin");
  }
  std::remove("ckpt_test.bin");
}

TEST_CASE("optimizer-state resume reproduces training bitwise") {
  auto rc = tiny_run_config();
  const auto train = harness::load_split(rc, false);
  const std::uint64_t hash = cfg::config_hash(rc);
  const std::size_t steps_per_epoch =
      (train.size() + rc.batch_size - 1) / rc.batch_size;
  const DecaySchedule decay{rc.optimizer.decay_interval_epochs * steps_per_epoch,
                            rc.optimizer.decay_multiplier};

  // reference: two epochs straight through
  net::Model<float> ref(rc.model_config(), rc.seed + 1);
  AdamOptimizer<float> ref_opt(rc.optimizer.learning_rate, decay);
  harness::train_epoch(ref, ref_opt, train, rc, 0);
  harness::train_epoch(ref, ref_opt, train, rc, 1);

  // interrupted: one epoch, checkpoint with optimizer state, fresh resume
  net::Model<float> a(rc.model_config(), rc.seed + 1);
  AdamOptimizer<float> a_opt(rc.optimizer.learning_rate, decay);
  harness::train_epoch(a, a_opt, train, rc, 0);
  ckpt::save_checkpoint("resume_test.bin", a.params(), hash, &a_opt);

  net::Model<float> b(rc.model_config(), rc.seed + 99);  // different init
  AdamOptimizer<float> b_opt(rc.optimizer.learning_rate, decay);
  ckpt::load_checkpoint("resume_test.bin", b.params(), hash, &b_opt);
  CHECK(b_opt.steps() == a_opt.steps());
  CHECK(b_opt.learning_rate() == a_opt.learning_rate());
  harness::train_epoch(b, b_opt, train, rc, 1);

  const auto& er = ref.params().entries();
  const auto& eb = b.params().entries();
  REQUIRE(er.size() == eb.size());
  for (std::size_t i = 0; i < er.size(); ++i)
    CHECK(er[i].second.data() == eb[i].second.data());

  SUBCASE("loading optimizer state from a weights-only file fails") {
    ckpt::save_checkpoint("resume_noopt.bin", a.params(), hash);
    net::Model<float> c(rc.model_config(), 1);
    AdamOptimizer<float> c_opt(rc.optimizer.learning_rate, decay);
    CHECK_THROWS_AS(
        ckpt::load_checkpoint("resume_noopt.bin", c.params(), hash, &c_opt),
        ConfigHashMismatch);
    std::remove("resume_noopt.bin");
  }
  std::remove("resume_test.bin");
}

TEST_CASE("training is deterministic for a fixed config") {
  auto rc = tiny_run_config();
  const auto train = harness::load_split(rc, false);
  auto run = [&] {
    net::Model<float> m(rc.model_config(), rc.seed + 1);
    AdamOptimizer<float> opt(rc.optimizer.learning_rate);
    return std::pair(harness::train_model(m, opt, train, rc),
                     m.params().entries().front().second.data());
  };
  const auto [l1, w1] = run();
  const auto [l2, w2] = run();
  REQUIRE(l1.size() == l2.size());
  for (std::size_t e = 0; e < l1.size(); ++e)
    CHECK(l1[e].mean.total == l2[e].mean.total);
  CHECK(w1 == w2);
}
