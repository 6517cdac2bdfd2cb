#include "dualfreq/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "dualfreq/adam.hpp"
#include "dualfreq/checkpoint.hpp"
#include "dualfreq/evaluation.hpp"

namespace dualfreq {
namespace {

namespace fs = std::filesystem;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
}

Index to_index(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used == v.size()) return static_cast<Index>(i);
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (!(decay_factor > 0.0)) throw ConfigError("decay_factor must be positive");
  if (decay_every < 1) throw ConfigError("decay_every must be at least 1");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
  model_config().validate();
}

DetectorConfig TrainConfig::model_config() const {
  DetectorConfig m = model;
  m.lambda = lambda;
  m.seed = seed;
  m.input_size = input_size;
  return m;
}

void set_train_key(TrainConfig& cfg, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "lr") cfg.lr = to_double(key, v);
  else if (key == "batch_size") cfg.batch_size = to_index(key, v);
  else if (key == "epochs") cfg.epochs = to_index(key, v);
  else if (key == "decay_factor") cfg.decay_factor = to_double(key, v);
  else if (key == "decay_every") cfg.decay_every = to_index(key, v);
  else if (key == "lambda") cfg.lambda = to_double(key, v);
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_index(key, v));
  else if (key == "input_size") cfg.input_size = to_index(key, v);
  else if (key == "checkpoint_every") cfg.checkpoint_every = to_index(key, v);
  else if (key == "c_int") cfg.model.c_int = to_index(key, v);
  else if (key == "blocks_per_stage") cfg.model.blocks_per_stage = to_index(key, v);
  else if (key == "classifier_widths") {
    const auto comma = v.find(',');
    if (comma == std::string::npos) throw ConfigError("classifier_widths expects two comma-separated widths");
    cfg.model.classifier_widths = {to_index(key, trim(v.substr(0, comma))), to_index(key, trim(v.substr(comma + 1)))};
  } else if (key == "subbands") cfg.model.subbands = parse_subbands(v);
  else if (key == "window_tiling") cfg.model.window_tiling = to_bool(key, v);
  else if (key == "dwt_layernorm") cfg.model.dwt_layernorm = to_bool(key, v);
  else if (key == "ln_eps") cfg.model.ln_eps = to_double(key, v);
  else if (key == "fft_part") {
    if (v == "phase") cfg.model.fft_part = FftPart::phase;
    else if (v == "phase_amplitude") cfg.model.fft_part = FftPart::phase_amplitude;
    else throw ConfigError("fft_part must be phase or phase_amplitude");
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config: expected key=value", line_no);
    try {
      set_train_key(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ParseError(std::string("config: ") + e.what(), line_no);
    }
  }
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

double lr_schedule(Index epoch, double base_lr, double factor, Index every) {
  if (epoch < 0) throw ContractError("lr_schedule: epoch must be non-negative");
  return base_lr * std::pow(factor, static_cast<double>(epoch / every));
}

Tensor<float> ImageSet::batch(const std::vector<Index>& rows) const {
  const Index per = images.size() / std::max<Index>(images.dim(0), 1);
  Shape shape = images.shape();
  shape[0] = static_cast<Index>(rows.size());
  Tensor<float> out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.array().segment(static_cast<Index>(i) * per, per) = images.array().segment(rows[i] * per, per);
  }
  return out;
}

ImageSet load_split(const std::vector<ManifestEntry>& manifest, Split split, Index size, int threads) {
  ImageSet set;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (manifest[i].split != split) continue;
    idx.push_back(i);
    set.labels.push_back(static_cast<float>(manifest[i].label));
    set.paths.push_back(manifest[i].path);
  }
  if (!idx.empty()) set.images = load_images(manifest, idx, size, threads);
  return set;
}

std::string format_train_log(const std::vector<EpochLog>& log) {
  std::string out = "epoch,lr,train_loss,val_acc,val_ap\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch) + "," + fmt(e.lr) + "," + fmt(e.train_loss) + "," + fmt(e.val_acc) +
           "," + fmt(e.val_ap) + "\n";
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const std::vector<ManifestEntry>& manifest,
                  ParameterSet<float> params, const TrainOptions& options) {
  cfg.validate();
  const DetectorConfig model = cfg.model_config();
  const auto train_counts = count_classes(select_split(manifest, Split::train));
  if (train_counts.real == 0 || train_counts.fake == 0) {
    throw ConfigError("training split needs both classes (real " + std::to_string(train_counts.real) +
                      ", fake " + std::to_string(train_counts.fake) + ")");
  }
  const ImageSet train_set = load_split(manifest, Split::train, cfg.input_size, options.threads);
  const ImageSet val_set = load_split(manifest, Split::val, cfg.input_size, options.threads);

  fs::path out_dir;
  if (!options.out_dir.empty()) {
    out_dir = options.out_dir;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  }

  auto state = adam_init(params);
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x53485546464c45ULL);
  std::vector<Index> order(static_cast<std::size_t>(train_set.size()));
  std::iota(order.begin(), order.end(), Index{0});

  TrainResult result;
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg.lr, cfg.decay_factor, cfg.decay_every);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0;
    for (Index start = 0, batch_no = 0; start < train_set.size(); start += cfg.batch_size, ++batch_no) {
      const Index end = std::min(start + cfg.batch_size, train_set.size());
      const std::vector<Index> rows(order.begin() + start, order.begin() + end);
      Tensor<float> labels({end - start});
      for (Index i = 0; i < end - start; ++i) labels[i] = train_set.labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])];

      Tape<float> tape;
      BoundParameters<float> bound(tape, params);
      const auto prob = detector_probabilities(tape.constant(train_set.batch(rows)), bound, model);
      const auto loss = bce_loss(prob, labels);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        if (!out_dir.empty()) {
          std::string dump = "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_no) + "\n";
          for (Index r : rows) dump += train_set.paths[static_cast<std::size_t>(r)] + "\n";
          write_text(out_dir / "nan_batch.txt", dump);
        }
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no));
      }
      tape.backward(loss);
      adam_step(params, bound.gradients(), state, lr);
      loss_sum += value * static_cast<double>(end - start);
    }

    EpochLog entry{epoch, lr, loss_sum / static_cast<double>(train_set.size()),
                   std::nan(""), std::nan("")};
    if (val_set.size() > 0) {
      const auto report = evaluate(params, model, val_set, options.threads);
      entry.val_acc = report.accuracy;
      entry.val_ap = report.average_precision;
    }
    result.log.push_back(entry);
    if (options.on_epoch) options.on_epoch(entry);
    if (!out_dir.empty()) {
      write_text(out_dir / "train_log.csv", format_train_log(result.log));
      if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
        save_model((out_dir / ("checkpoint_epoch" + std::to_string(epoch + 1) + ".ckpt")).string(), params, model);
      }
    }
  }
  if (!out_dir.empty()) {
    write_text(out_dir / "train_log.csv", format_train_log(result.log));
    save_model((out_dir / "model.ckpt").string(), params, model);
  }
  result.params = std::move(params);
  return result;
}

}  // namespace dualfreq
