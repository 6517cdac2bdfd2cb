#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dualfreq/checkpoint.hpp"
#include "dualfreq/errors.hpp"
#include "dualfreq/training.hpp"
#include "helpers.hpp"

using namespace dualfreq;
using testutil::TempDir;

TEST_SUITE_BEGIN("training");

namespace {

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.input_size = 16;
  cfg.batch_size = 8;
  cfg.epochs = 2;
  cfg.model.classifier_widths = {8, 8};
  cfg.model.blocks_per_stage = 1;
  cfg.model.c_int = 8;
  return cfg;
}

}  // namespace

TEST_CASE("lr schedule") {
  for (Index e = 0; e < 10; ++e) CHECK(lr_schedule(e, 2e-4) == 2e-4);
  CHECK(lr_schedule(10, 2e-4) == doctest::Approx(1.6e-4).epsilon(1e-12));
  CHECK(lr_schedule(95, 2e-4) == doctest::Approx(2.684e-5).epsilon(1e-3));
  for (Index e = 0; e <= 200; ++e) CHECK(lr_schedule(e, 2e-4) == 2e-4 * std::pow(0.8, static_cast<double>(e / 10)));
  CHECK_THROWS_AS(lr_schedule(-1, 2e-4), ContractError);
  const TrainConfig d;
  CHECK(d.lr == 2e-4);
  CHECK(d.decay_factor == 0.8);
  CHECK(d.decay_every == 10);
  CHECK(d.lambda == 0.4);
}

TEST_CASE("config file parsing") {
  const auto cfg = parse_train_config("# desk run\nlr = 0.001\n\nbatch_size=16\nlambda=1.0\nsubbands=HL,HH\nwindow_tiling=false\n");
  CHECK(cfg.lr == 0.001);
  CHECK(cfg.batch_size == 16);
  CHECK(cfg.lambda == 1.0);
  CHECK(cfg.model.subbands == SubbandMask{false, false, true, true});
  CHECK_FALSE(cfg.model.window_tiling);
  CHECK(cfg.model_config().lambda == 1.0);

  try {
    parse_train_config("lr=1\nepochs=many\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_train_config("lr 1\n"), ParseError);
  CHECK_THROWS_AS(parse_train_config("learning_rate=1\n"), ParseError);
  CHECK_THROWS_AS(parse_train_config("lambda=1.5\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse_train_config("lr=0\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse_train_config("batch_size=0\n").validate(), ConfigError);
}

TEST_CASE("training split with one class is a configuration error") {
  TempDir dir("oneclass");
  auto m = load_manifest(gen_synthetic(SyntheticSpec{10, 16, 0, 0.5}, dir.str()));
  std::erase_if(m, [](const ManifestEntry& e) { return e.label == 1 && e.split == Split::train; });
  const auto cfg = tiny_config();
  CHECK_THROWS_AS(train(cfg, m, init_detector<float>(cfg.model_config())), ConfigError);
}

TEST_CASE("lambda endpoints leave the unused branch bitwise at init") {
  TempDir dir("endpoint");
  const auto m = load_manifest(gen_synthetic(SyntheticSpec{10, 16, 1, 0.75}, dir.str()));
  for (double lambda : {1.0, 0.0}) {
    auto cfg = tiny_config();
    cfg.lambda = lambda;
    const auto init = init_detector<float>(cfg.model_config());
    const auto result = train(cfg, m, init);
    const char* frozen = lambda == 1.0 ? kDwtPrefix : kFftPrefix;
    const char* live = lambda == 1.0 ? kFftPrefix : kDwtPrefix;
    bool frozen_same = true, live_moved = false;
    for (const auto& e : init) {
      const bool same = bitwise_equal(e.value, result.params[e.name]);
      if (has_prefix(e.name, frozen)) frozen_same = frozen_same && same;
      if (has_prefix(e.name, live)) live_moved = live_moved || !same;
    }
    CHECK(frozen_same);
    CHECK(live_moved);
  }
}

TEST_CASE("overfits 8 images in 200 steps") {
  TempDir dir("overfit");
  auto m = load_manifest(gen_synthetic(SyntheticSpec{5, 16, 2, 0.75}, dir.str()));
  // 4 real + 4 fake from the train split
  std::vector<ManifestEntry> eight;
  Index real = 0, fake = 0;
  for (auto e : m) {
    if (e.split != Split::train) continue;
    Index& n = e.label ? fake : real;
    if (n++ < 4) eight.push_back(e);
  }
  REQUIRE(eight.size() == 8);
  // default model at 16x16; one step per epoch, so the per-epoch decay is switched off
  TrainConfig cfg;
  cfg.input_size = 16;
  cfg.batch_size = 8;
  cfg.epochs = 200;
  cfg.decay_every = 1000;
  const auto result = train(cfg, eight, init_detector<float>(cfg.model_config()));
  REQUIRE(result.log.size() == 200);
  INFO("final loss " << result.log.back().train_loss);
  CHECK(result.log.back().train_loss < 0.05);
  // moving average over 5 epochs decreases from epoch 3 on
  std::vector<double> ma;
  for (std::size_t e = 3; e + 5 <= result.log.size(); ++e) {
    double s = 0;
    for (std::size_t k = e; k < e + 5; ++k) s += result.log[k].train_loss;
    ma.push_back(s / 5);
  }
  Index rises = 0;
  for (std::size_t i = 1; i < ma.size(); ++i) rises += ma[i] > ma[i - 1];
  INFO("moving-average increases: " << rises);
  CHECK(rises == 0);
}

TEST_CASE("same seed gives bitwise-identical checkpoints and logs") {
  TempDir data("det_data"), a("det_a"), b("det_b");
  const auto m = load_manifest(gen_synthetic(SyntheticSpec{10, 16, 4, 0.75}, data.str()));
  auto cfg = tiny_config();
  cfg.checkpoint_every = 1;
  TrainOptions oa, ob;
  oa.out_dir = a.str();
  ob.out_dir = b.str();
  train(cfg, m, init_detector<float>(cfg.model_config()), oa);
  train(cfg, m, init_detector<float>(cfg.model_config()), ob);
  for (const char* f : {"model.ckpt", "model.ckpt.config.json", "train_log.csv", "checkpoint_epoch1.ckpt"}) {
    INFO(f);
    REQUIRE(std::filesystem::exists(a.path / f));
    CHECK(file_bytes(a.path / f) == file_bytes(b.path / f));
  }
  const auto log = file_bytes(a.path / "train_log.csv");
  CHECK(log.rfind("epoch,lr,train_loss,val_acc,val_ap\n", 0) == 0);
  // a different seed changes the result
  cfg.seed = 99;
  TempDir c("det_c");
  TrainOptions oc;
  oc.out_dir = c.str();
  train(cfg, m, init_detector<float>(cfg.model_config()), oc);
  CHECK(file_bytes(a.path / "model.ckpt") != file_bytes(c.path / "model.ckpt"));
}

TEST_CASE("checkpoint round trip and rejection of bad files") {
  TempDir dir("ckpt");
  const auto cfg = tiny_config().model_config();
  const auto p = init_detector<float>(cfg);
  const auto path = (dir.path / "m.ckpt").string();
  save_model(path, p, cfg);
  const auto loaded = load_model(path);
  CHECK(bitwise_equal(loaded.params, p));
  CHECK(loaded.config.to_json() == cfg.to_json());

  auto bad = p;
  bad.begin()->value[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(save_checkpoint((dir.path / "nan.ckpt").string(), bad), NumericError);

  std::ofstream((dir.path / "junk.ckpt").string()) << "not a checkpoint";
  CHECK_THROWS_AS(load_checkpoint((dir.path / "junk.ckpt").string()), ParseError);
  const auto bytes = file_bytes(path);
  std::ofstream((dir.path / "cut.ckpt").string(), std::ios::binary) << bytes.substr(0, bytes.size() - 10);
  CHECK_THROWS_AS(load_checkpoint((dir.path / "cut.ckpt").string()), ParseError);
  CHECK_THROWS_AS(load_checkpoint((dir.path / "none.ckpt").string()), IoError);
}

TEST_SUITE_END();
