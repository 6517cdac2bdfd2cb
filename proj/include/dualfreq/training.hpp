#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dualfreq/data.hpp"
#include "dualfreq/detector.hpp"

namespace dualfreq {

struct TrainConfig {
  double lr = 2e-4;
  Index batch_size = 32;
  Index epochs = 30;
  double decay_factor = 0.8;
  Index decay_every = 10;
  double lambda = 0.4;
  std::uint64_t seed = 0;
  Index input_size = 32;
  Index checkpoint_every = 0;  // 0: final checkpoint only

  // Model shape and ablation switches; lambda, seed and input_size above are
  // copied into it by model_config().
  DetectorConfig model;

  void validate() const;
  DetectorConfig model_config() const;
};

// Flat key=value text, '#' comments. Keys are the TrainConfig field names plus
// model keys: c_int, classifier_widths (e.g. 32,32), blocks_per_stage,
// subbands, window_tiling, fft_part, dwt_layernorm, ln_eps.
void set_train_key(TrainConfig& cfg, const std::string& key, const std::string& value);
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::string& path);

// base_lr * factor^floor(epoch / every)
double lr_schedule(Index epoch, double base_lr, double factor = 0.8, Index every = 10);

struct EpochLog {
  Index epoch = 0;
  double lr = 0, train_loss = 0, val_acc = 0, val_ap = 0;
};

struct TrainOptions {
  std::string out_dir;  // empty: write nothing
  int threads = 1;      // image decoding and validation scoring only
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  ParameterSet<float> params;
  std::vector<EpochLog> log;
};

// Mini-batch Adam on mean BCE. Shuffling uses its own generator seeded from
// cfg.seed. Writes train_log.csv, periodic checkpoints and model.ckpt under
// out_dir. ConfigError when the train split lacks a class; NumericError on a
// non-finite loss (the batch's image indices are dumped to nan_batch.txt).
TrainResult train(const TrainConfig& cfg, const std::vector<ManifestEntry>& manifest,
                  ParameterSet<float> params, const TrainOptions& options = {});

// Preloaded, preprocessed images of one split.
struct ImageSet {
  Tensor<float> images;  // [n, 3, size, size]
  std::vector<float> labels;
  std::vector<std::string> paths;

  Index size() const { return static_cast<Index>(labels.size()); }
  Tensor<float> batch(const std::vector<Index>& rows) const;
};

ImageSet load_split(const std::vector<ManifestEntry>& manifest, Split split, Index size,
                    int threads);

std::string format_train_log(const std::vector<EpochLog>& log);

}  // namespace dualfreq
