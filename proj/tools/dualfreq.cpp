// dualfreq: command-line front end. Exit 0 on success, 1 when a library
// contract fails (bad data, bad config, failed gradient check), 2 on usage errors.
#include <CLI11.hpp>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "dualfreq/checkpoint.hpp"
#include "dualfreq/data.hpp"
#include "dualfreq/evaluation.hpp"
#include "dualfreq/gradcheck.hpp"
#include "dualfreq/training.hpp"

namespace fs = std::filesystem;
using namespace dualfreq;

namespace {

struct Common {
  std::string out;
  int threads = 1;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* app, Common& c, bool out_required) {
  auto* out = app->add_option("--out", c.out, "Directory for every file this command writes");
  if (out_required) out->required();
  app->add_option("--threads", c.threads, "Worker threads for decoding and scoring (1 keeps runs bitwise reproducible)")
      ->default_val(1)
      ->check(CLI::PositiveNumber);
  app->add_option("--seed", c.seed, "Seed for every random choice the command makes")->default_val(0);
}

// Training keys exposed as flags; values go through the same parser as config files.
const std::vector<std::pair<std::string, std::string>> kTrainFlags = {
    {"lr", "Base learning rate (default 2e-4)"},
    {"batch_size", "Mini-batch size (default 32)"},
    {"epochs", "Number of epochs (default 30)"},
    {"decay_factor", "Learning-rate multiplier per decay step (default 0.8)"},
    {"decay_every", "Epochs between learning-rate decays (default 10)"},
    {"lambda", "Fusion weight of the FFT branch in [0,1] (default 0.4)"},
    {"input_size", "Square input side in pixels, power of two >= 16 (default 32)"},
    {"checkpoint_every", "Write checkpoint_epoch<N>.ckpt every N epochs; 0 writes only model.ckpt"},
    {"c_int", "Internal channels of each attention block (default 16)"},
    {"classifier_widths", "Classifier stage widths as W1,W2 (default 32,32)"},
    {"blocks_per_stage", "Residual blocks per classifier stage (default 2)"},
    {"subbands", "Kept DWT subbands: all, or a comma list of LL,LH,HL,HH"},
    {"window_tiling", "true: tile subbands so each DWT window sees one 2x2 block per band; false: raster layout"},
    {"fft_part", "FFT-branch input: phase or phase_amplitude"},
    {"dwt_layernorm", "LayerNorm before the DWT attention block (true/false)"},
    {"ln_eps", "LayerNorm epsilon (default 1e-5)"},
};

// Bad flag values are usage errors (exit 2), unlike bad data or config files.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainFlags {
  std::string config;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--config", f.config,
                  "key=value config file; flags given on the command line override its keys")
      ->check(CLI::ExistingFile);
  for (const auto& [key, help] : kTrainFlags) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    f.options[key] = app->add_option(flag, f.values[key], help);
  }
}

TrainConfig resolve_train_config(const TrainFlags& f, const Common& c, const CLI::App* app) {
  TrainConfig cfg = f.config.empty() ? TrainConfig{} : load_train_config(f.config);
  // --seed always wins when given; otherwise the config file's seed stands
  if (app->count("--seed") > 0 || f.config.empty()) cfg.seed = c.seed;
  for (const auto& [key, opt] : f.options) {
    if (opt->count() == 0) continue;
    try {
      set_train_key(cfg, key, f.values.at(key));
    } catch (const ConfigError& e) {
      throw UsageError(opt->get_name() + ": " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

void write_file(const std::string& dir, const std::string& name, const std::string& text) {
  ensure_dir(dir);
  const auto path = fs::path(dir) / name;
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

ImageSet load_eval_set(const std::string& manifest_path, const std::string& split, Index size, int threads) {
  auto manifest = load_manifest(manifest_path);
  if (split != "all") manifest = select_split(manifest, parse_split(split));
  if (manifest.empty()) throw ContractError("no images in split '" + split + "' of " + manifest_path);
  std::vector<std::size_t> idx(manifest.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  ImageSet set;
  for (const auto& e : manifest) {
    set.labels.push_back(static_cast<float>(e.label));
    set.paths.push_back(e.path);
  }
  set.images = load_images(manifest, idx, size, threads);
  return set;
}

std::vector<int> int_labels(const ImageSet& set) {
  std::vector<int> out;
  for (float l : set.labels) out.push_back(l > 0.5f ? 1 : 0);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Training allocates and frees many mid-sized buffers per step; keep them
  // on the heap instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
  CLI::App app{"Dual-frequency (DWT + FFT) fake image detector"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  // gen-synthetic
  Common gen_c;
  SyntheticSpec spec;
  auto* gen = app.add_subcommand("gen-synthetic", "Write a seeded real/fake PPM corpus and manifest.jsonl");
  add_common(gen, gen_c, true);
  gen->add_option("--n-per-class", spec.n_per_class, "Images per class")->default_val(2000)->check(CLI::PositiveNumber);
  gen->add_option("--size", spec.size, "Image side in pixels (even)")->default_val(32);
  gen->add_option("--strength", spec.artifact_strength,
                  "Blend strength of the 2x upsampling artifact in fake images, 0..1")
      ->default_val(0.75);

  // train
  Common train_c;
  TrainFlags train_f;
  std::string train_manifest;
  auto* train_cmd = app.add_subcommand("train", "Train a detector; writes model.ckpt, its config sidecar and train_log.csv");
  add_common(train_cmd, train_c, true);
  train_cmd->add_option("--manifest", train_manifest, "Manifest (JSON lines) with train/val/test splits")
      ->required()
      ->check(CLI::ExistingFile);
  add_train_flags(train_cmd, train_f);

  // eval
  Common eval_c;
  std::string eval_ckpt, eval_manifest, eval_split = "test";
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint; prints accuracy,ap,n as CSV");
  add_common(eval_cmd, eval_c, false);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint written by train")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--manifest", eval_manifest, "Manifest to score")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", eval_split, "train, val, test or all")->default_val("test");

  // phase-swap
  Common ps_c;
  std::string ps_ckpt, ps_manifest, ps_split = "test";
  Index ps_pairs = 200;
  auto* ps_cmd = app.add_subcommand(
      "phase-swap", "Score real/fake composites that exchange Fourier phase and amplitude; writes phase_swap.csv");
  add_common(ps_cmd, ps_c, false);
  ps_cmd->add_option("--checkpoint", ps_ckpt, "Checkpoint written by train")->required()->check(CLI::ExistingFile);
  ps_cmd->add_option("--manifest", ps_manifest, "Manifest providing both real and fake images")->required()->check(CLI::ExistingFile);
  ps_cmd->add_option("--split", ps_split, "train, val, test or all")->default_val("test");
  ps_cmd->add_option("--pairs", ps_pairs, "Number of real/fake pairs")->default_val(200)->check(CLI::PositiveNumber);

  // ablate
  Common ab_c;
  TrainFlags ab_f;
  std::string ab_manifest, ab_group = "modules";
  auto* ab_cmd = app.add_subcommand("ablate", "Train and test a grid of variants; writes ablation.csv and one directory per variant");
  add_common(ab_cmd, ab_c, true);
  ab_cmd->add_option("--manifest", ab_manifest, "Manifest with train/val/test splits")->required()->check(CLI::ExistingFile);
  ab_cmd->add_option("--group", ab_group, "lambda, subbands, modules, fft_part or all")->default_val("modules");
  add_train_flags(ab_cmd, ab_f);

  // gradcheck
  Common gc_c;
  Index gc_trials = 100, gc_coords = 200;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every kernel and the full detector");
  add_common(gc_cmd, gc_c, false);
  gc_cmd->add_option("--trials", gc_trials, "Random cases per kernel")->default_val(100)->check(CLI::PositiveNumber);
  gc_cmd->add_option("--coords", gc_coords, "Sampled parameter entries for the end-to-end check")->default_val(200)->check(CLI::PositiveNumber);

  // histogram
  Common hist_c;
  std::string hist_ckpt, hist_manifest, hist_split = "test";
  Index hist_bins = 20;
  auto* hist_cmd = app.add_subcommand("histogram", "Per-class logit histogram; writes histogram.csv");
  add_common(hist_cmd, hist_c, false);
  hist_cmd->add_option("--checkpoint", hist_ckpt, "Checkpoint written by train")->required()->check(CLI::ExistingFile);
  hist_cmd->add_option("--manifest", hist_manifest, "Manifest to score")->required()->check(CLI::ExistingFile);
  hist_cmd->add_option("--split", hist_split, "train, val, test or all")->default_val("test");
  hist_cmd->add_option("--bins", hist_bins, "Number of equal-width bins")->default_val(20)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      spec.seed = gen_c.seed;
      try {
        spec.validate();
      } catch (const ConfigError& e) {
        throw UsageError(e.what());
      }
      std::cout << gen_synthetic(spec, gen_c.out) << "\n";
    } else if (*train_cmd) {
      const auto cfg = resolve_train_config(train_f, train_c, train_cmd);
      const auto manifest = load_manifest(train_manifest);
      TrainOptions opts;
      opts.out_dir = train_c.out;
      opts.threads = train_c.threads;
      opts.on_epoch = [](const EpochLog& e) {
        std::printf("epoch %ld lr %.3g loss %.5f val_acc %.4f val_ap %.4f\n", static_cast<long>(e.epoch), e.lr,
                    e.train_loss, e.val_acc, e.val_ap);
        std::fflush(stdout);
      };
      train(cfg, manifest, init_detector<float>(cfg.model_config()), opts);
    } else if (*eval_cmd) {
      const auto model = load_model(eval_ckpt);
      const auto set = load_eval_set(eval_manifest, eval_split, model.config.input_size, eval_c.threads);
      const auto csv = format_eval_csv(evaluate(model.params, model.config, set, eval_c.threads));
      std::cout << csv;
      if (!eval_c.out.empty()) write_file(eval_c.out, "eval.csv", csv);
    } else if (*ps_cmd) {
      const auto model = load_model(ps_ckpt);
      const auto set = load_eval_set(ps_manifest, ps_split, model.config.input_size, ps_c.threads);
      const auto r = phase_swap_experiment(model.params, model.config, set, ps_pairs, ps_c.seed, ps_c.threads);
      char buf[160];
      std::snprintf(buf, sizeof buf, "mean_prob_fake_phase,mean_prob_fake_amp,n\n%.9g,%.9g,%ld\n",
                    r.mean_prob_fake_phase, r.mean_prob_fake_amp, static_cast<long>(r.n));
      std::cout << buf;
      if (!ps_c.out.empty()) write_file(ps_c.out, "phase_swap.csv", buf);
    } else if (*ab_cmd) {
      const auto cfg = resolve_train_config(ab_f, ab_c, ab_cmd);
      std::vector<AblationVariant> variants;
      try {
        variants = ablation_variants(cfg.model_config(), ab_group);
      } catch (const ConfigError& e) {
        throw UsageError(std::string("--group: ") + e.what());
      }
      const auto rows = ablation_run(cfg, variants, load_manifest(ab_manifest), ab_c.out, ab_c.threads);
      std::cout << format_ablation_csv(rows);
    } else if (*gc_cmd) {
      auto rows = kernel_gradcheck(gc_c.seed, gc_trials);
      rows.push_back(detector_gradcheck(gc_c.seed, gradcheck_detector_config(), gc_coords));
      const auto csv = format_gradcheck_csv(rows);
      std::cout << csv;
      if (!gc_c.out.empty()) write_file(gc_c.out, "gradcheck.csv", csv);
      for (const auto& r : rows) {
        if (!r.pass()) {
          std::cerr << "gradcheck: " << r.kernel << " exceeds tolerance\n";
          return 1;
        }
      }
    } else if (*hist_cmd) {
      const auto model = load_model(hist_ckpt);
      const auto set = load_eval_set(hist_manifest, hist_split, model.config.input_size, hist_c.threads);
      const auto h = logit_histogram(score_logits(model.params, model.config, set.images, 64, hist_c.threads),
                                     int_labels(set), hist_bins);
      const auto csv = format_histogram_csv(h);
      std::cout << csv;
      std::printf("overlap %.6f\n", h.overlap);
      if (!hist_c.out.empty()) write_file(hist_c.out, "histogram.csv", csv);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const dualfreq::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
