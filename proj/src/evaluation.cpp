#include "dualfreq/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>

namespace dualfreq {
namespace {

namespace fs = std::filesystem;

void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels, const char* what) {
  if (scores.empty()) throw ContractError(std::string(what) + ": empty input");
  if (scores.size() != labels.size()) {
    throw DimensionError(std::string(what) + ": " + std::to_string(scores.size()) + " scores but " +
                         std::to_string(labels.size()) + " labels");
  }
  for (int l : labels) {
    if (l != 0 && l != 1) throw ContractError(std::string(what) + ": labels must be 0 or 1");
  }
}

std::vector<int> int_labels(const std::vector<float>& labels) {
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] > 0.5f ? 1 : 0;
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string lambda_name(double l) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "lambda=%g", l);
  return buf;
}

std::string dir_name(const std::string& variant) {
  std::string out;
  for (char c : variant) out += std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ? c : '_';
  return out;
}

}  // namespace

double accuracy(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  check_inputs(scores, labels, "accuracy");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    correct += static_cast<int>(scores[i] >= threshold) == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels, "average_precision");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total = 0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] != 1) continue;
    ++hits;
    total += static_cast<double>(hits) / static_cast<double>(rank + 1);
  }
  if (hits == 0) throw ContractError("average_precision: undefined without positive labels");
  return total / static_cast<double>(hits);
}

std::vector<double> score_logits(const ParameterSet<float>& params, const DetectorConfig& cfg,
                                 const Tensor<float>& images, Index batch, int threads) {
  require_rank(images.shape(), 4, "score_logits");
  const Index n = images.dim(0), per = images.size() / n;
  const Index chunks = (n + batch - 1) / batch;
  std::vector<double> out(static_cast<std::size_t>(n));
  auto work = [&](Index worker, Index workers) {
    for (Index c = worker; c < chunks; c += workers) {
      const Index lo = c * batch, hi = std::min(n, lo + batch);
      Shape shape = images.shape();
      shape[0] = hi - lo;
      Tensor<float> x(shape, images.array().segment(lo * per, (hi - lo) * per));
      const auto logits = predict_logits(params, cfg, x);
      for (Index i = lo; i < hi; ++i) out[static_cast<std::size_t>(i)] = logits[i - lo];
    }
  };
  const Index workers = std::clamp<Index>(threads, 1, std::max<Index>(chunks, 1));
  if (workers == 1) {
    work(0, 1);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (Index w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        work(w, workers);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<double> sigmoid(const std::vector<double>& logits) {
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-logits[i]));
  return out;
}

EvalReport evaluate(const ParameterSet<float>& params, const DetectorConfig& cfg, const ImageSet& set,
                    int threads) {
  if (set.size() == 0) throw ContractError("evaluate: no images");
  const auto probs = sigmoid(score_logits(params, cfg, set.images, 64, threads));
  const auto labels = int_labels(set.labels);
  EvalReport r;
  r.n = set.size();
  r.accuracy = accuracy(probs, labels, r.threshold);
  const bool any_positive = std::find(labels.begin(), labels.end(), 1) != labels.end();
  r.average_precision = any_positive ? average_precision(probs, labels) : std::nan("");
  return r;
}

std::string format_eval_csv(const EvalReport& report) {
  return "accuracy,ap,n\n" + fmt(report.accuracy) + "," + fmt(report.average_precision) + "," +
         std::to_string(report.n) + "\n";
}

PhaseSwapResult phase_swap_experiment(const ParameterSet<float>& params, const DetectorConfig& cfg,
                                      const ImageSet& set, Index n, std::uint64_t seed, int threads) {
  std::vector<Index> reals, fakes;
  for (Index i = 0; i < set.size(); ++i) (set.labels[static_cast<std::size_t>(i)] > 0.5f ? fakes : reals).push_back(i);
  if (n < 1 || static_cast<Index>(reals.size()) < n || static_cast<Index>(fakes.size()) < n) {
    throw ContractError("phase_swap_experiment: need " + std::to_string(n) + " images per class, have " +
                        std::to_string(reals.size()) + " real and " + std::to_string(fakes.size()) + " fake");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(reals.begin(), reals.end(), rng);
  std::shuffle(fakes.begin(), fakes.end(), rng);

  Shape shape = set.images.shape();
  shape[0] = n;
  Tensor<float> fake_phase(shape), fake_amp(shape);
  const Index per = set.images.size() / set.size();
  for (Index i = 0; i < n; ++i) {
    Shape one = shape;
    one[0] = 1;
    const auto real = Tensor<double>(one, set.images.array().segment(reals[static_cast<std::size_t>(i)] * per, per).cast<double>());
    const auto fake = Tensor<double>(one, set.images.array().segment(fakes[static_cast<std::size_t>(i)] * per, per).cast<double>());
    // phase_swap(a, b) = (|a| with phase(b), |b| with phase(a)).
    const auto [real_amp_fake_phase, fake_amp_real_phase] = phase_swap(real, fake);
    fake_phase.array().segment(i * per, per) = real_amp_fake_phase.array().cast<float>();
    fake_amp.array().segment(i * per, per) = fake_amp_real_phase.array().cast<float>();
  }
  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  PhaseSwapResult r;
  r.n = n;
  r.mean_prob_fake_phase = mean(sigmoid(score_logits(params, cfg, fake_phase, 64, threads)));
  r.mean_prob_fake_amp = mean(sigmoid(score_logits(params, cfg, fake_amp, 64, threads)));
  return r;
}

LogitHistogram logit_histogram(const std::vector<double>& logits, const std::vector<int>& labels,
                               Index bins) {
  check_inputs(logits, labels, "logit_histogram");
  if (bins < 1) throw ContractError("logit_histogram: bins must be positive");
  const auto [lo_it, hi_it] = std::minmax_element(logits.begin(), logits.end());
  const double lo = *lo_it;
  const double hi = *hi_it > lo ? *hi_it : lo + 1.0;
  LogitHistogram h;
  h.edges.resize(static_cast<std::size_t>(bins + 1));
  for (Index b = 0; b <= bins; ++b) h.edges[static_cast<std::size_t>(b)] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
  h.real.assign(static_cast<std::size_t>(bins), 0);
  h.fake.assign(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    auto b = static_cast<Index>(std::floor((logits[i] - lo) / (hi - lo) * static_cast<double>(bins)));
    b = std::clamp<Index>(b, 0, bins - 1);
    (labels[i] == 1 ? h.fake : h.real)[static_cast<std::size_t>(b)] += 1;
  }
  const auto n_real = std::accumulate(h.real.begin(), h.real.end(), Index{0});
  const auto n_fake = std::accumulate(h.fake.begin(), h.fake.end(), Index{0});
  if (n_real > 0 && n_fake > 0) {
    for (Index b = 0; b < bins; ++b) {
      h.overlap += std::min(static_cast<double>(h.real[static_cast<std::size_t>(b)]) / static_cast<double>(n_real),
                            static_cast<double>(h.fake[static_cast<std::size_t>(b)]) / static_cast<double>(n_fake));
    }
  }
  return h;
}

std::string format_histogram_csv(const LogitHistogram& h) {
  std::string out = "bin_lo,bin_hi,real_count,fake_count\n";
  for (std::size_t b = 0; b < h.real.size(); ++b) {
    out += fmt(h.edges[b]) + "," + fmt(h.edges[b + 1]) + "," + std::to_string(h.real[b]) + "," +
           std::to_string(h.fake[b]) + "\n";
  }
  return out;
}

std::vector<AblationVariant> ablation_variants(const DetectorConfig& base, const std::string& group) {
  std::vector<AblationVariant> out;
  const bool all = group == "all";
  bool known = all;
  if (all || group == "modules") {
    known = true;
    out.push_back({"full", base});
    auto v = base;
    v.lambda = 0.0;
    out.push_back({"no-fft-branch", v});
    v = base;
    v.lambda = 1.0;
    out.push_back({"no-dwt-branch", v});
    v = base;
    v.window_tiling = false;
    out.push_back({"no-tiling", v});
  }
  if (all || group == "lambda") {
    known = true;
    for (double l : {0.0, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0}) {
      auto v = base;
      v.lambda = l;
      out.push_back({lambda_name(l), v});
    }
  }
  if (all || group == "subbands") {
    known = true;
    for (const char* s : {"LL", "LH", "HL", "HH", "HL,HH", "LH,HL,HH", "LL,LH,HL,HH"}) {
      auto v = base;
      v.subbands = parse_subbands(s);
      std::string name = s;
      std::replace(name.begin(), name.end(), ',', '+');
      out.push_back({"subbands=" + name, v});
    }
  }
  if (all || group == "fft_part") {
    known = true;
    auto v = base;
    v.fft_part = FftPart::phase;
    out.push_back({"fft=phase-only", v});
    v.fft_part = FftPart::phase_amplitude;
    out.push_back({"fft=phase+amplitude", v});
  }
  if (!known) throw ConfigError("unknown ablation group '" + group + "' (lambda, subbands, modules, fft_part, all)");
  return out;
}

std::vector<AblationRow> ablation_run(const TrainConfig& base, const std::vector<AblationVariant>& variants,
                                      const std::vector<ManifestEntry>& manifest, const std::string& out_dir,
                                      int threads) {
  const ImageSet test = load_split(manifest, Split::test, base.input_size, threads);
  if (test.size() == 0) throw ContractError("ablation_run: manifest has no test split");
  std::vector<AblationRow> rows;
  for (const auto& variant : variants) {
    TrainConfig cfg = base;
    cfg.model = variant.model;
    cfg.lambda = variant.model.lambda;
    TrainOptions opts;
    opts.threads = threads;
    if (!out_dir.empty()) opts.out_dir = (fs::path(out_dir) / dir_name(variant.name)).string();
    const auto result = train(cfg, manifest, init_detector<float>(cfg.model_config()), opts);
    rows.push_back({variant.name, evaluate(result.params, cfg.model_config(), test, threads)});
    if (!out_dir.empty()) {
      std::ofstream out(fs::path(out_dir) / "ablation.csv", std::ios::trunc);
      out << format_ablation_csv(rows);
      if (!out) throw IoError("cannot write ablation.csv under " + out_dir);
    }
  }
  return rows;
}

std::string format_ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "variant,accuracy,ap,n\n";
  for (const auto& r : rows) {
    out += r.variant + "," + fmt(r.report.accuracy) + "," + fmt(r.report.average_precision) + "," +
           std::to_string(r.report.n) + "\n";
  }
  return out;
}

}  // namespace dualfreq
