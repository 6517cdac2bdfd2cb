#include "dualfreq/detector.hpp"

#include <json.hpp>
#include <random>
#include <sstream>

namespace dualfreq {
namespace {

using json = nlohmann::json;

const char* kSubbandNames[4] = {"LL", "LH", "HL", "HH"};

RswConfig dwt_rsw(const DetectorConfig& cfg) { return {3, cfg.c_int, cfg.dwt_window}; }

RswConfig fft_rsw(const DetectorConfig& cfg) {
  return {cfg.fft_part == FftPart::phase ? 3 : 6, cfg.c_int, cfg.fft_window};
}

std::string block_name(Index stage, Index block) {
  return std::string(kClassifierPrefix) + "s" + std::to_string(stage) + ".b" + std::to_string(block) + ".";
}

void check_image(const Shape& shape, const DetectorConfig& cfg) {
  if (shape.size() != 4 || shape[1] != 3) {
    throw DimensionError("detector expects [B, 3, H, W], got " + shape_str(shape));
  }
  for (Index e : {shape[2], shape[3]}) {
    if (!is_power_of_two(e) || e < 16) {
      throw UnsupportedSizeError("detector needs power-of-two extents >= 16, got " + shape_str(shape));
    }
  }
  if (shape[2] % (2 * cfg.dwt_window) != 0 || shape[2] % cfg.fft_window != 0 ||
      shape[3] % cfg.fft_window != 0) {
    throw DimensionError("image extents incompatible with window sides: " + shape_str(shape));
  }
}

void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ContractError("fusion weight lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
}

template <typename Scalar>
void add_conv3x3(ParameterSet<Scalar>& params, const std::string& name, Index co, Index ci,
                 std::mt19937_64& rng) {
  params.add(name + "_w", fan_in_uniform<Scalar>({co, ci, 3, 3}, ci * 9, rng));
  params.add(name + "_b", Tensor<Scalar>({co}));
}

}  // namespace

bool has_prefix(const std::string& name, const char* prefix) {
  return name.rfind(prefix, 0) == 0;
}

SubbandMask parse_subbands(const std::string& text) {
  if (text == "all") return kAllSubbands;
  SubbandMask mask{false, false, false, false};
  std::stringstream ss(text);
  std::string item;
  bool any = false;
  while (std::getline(ss, item, ',')) {
    bool found = false;
    for (std::size_t s = 0; s < 4; ++s) {
      if (item == kSubbandNames[s]) mask[s] = found = any = true;
    }
    if (!found) throw ConfigError("unknown subband '" + item + "' (expected LL, LH, HL, HH)");
  }
  if (!any) throw ConfigError("subband list is empty");
  return mask;
}

std::string format_subbands(const SubbandMask& mask) {
  std::string out;
  for (std::size_t s = 0; s < 4; ++s) {
    if (!mask[s]) continue;
    if (!out.empty()) out += ",";
    out += kSubbandNames[s];
  }
  return out;
}

void DetectorConfig::validate() const {
  if (!is_power_of_two(input_size) || input_size < 16) {
    throw ConfigError("input_size must be a power of two >= 16");
  }
  if (c_int < 1) throw ConfigError("c_int must be positive");
  if (dwt_window < 1 || fft_window < 1) throw ConfigError("window sides must be positive");
  if (input_size % (2 * dwt_window) != 0 || input_size % fft_window != 0) {
    throw ConfigError("input_size is not divisible by the window sides");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (classifier_widths[0] < 1 || classifier_widths[1] < 1) {
    throw ConfigError("classifier widths must be positive");
  }
  if (blocks_per_stage < 0) throw ConfigError("blocks_per_stage must be non-negative");
  if (!(ln_eps > 0.0)) throw ConfigError("ln_eps must be positive");
  if (subbands == SubbandMask{false, false, false, false}) {
    throw ConfigError("at least one subband must be kept");
  }
}

std::string DetectorConfig::to_json() const {
  json j;
  j["input_size"] = input_size;
  j["c_int"] = c_int;
  j["dwt_window"] = dwt_window;
  j["fft_window"] = fft_window;
  j["lambda"] = lambda;
  j["classifier_widths"] = {classifier_widths[0], classifier_widths[1]};
  j["blocks_per_stage"] = blocks_per_stage;
  j["seed"] = seed;
  j["subbands"] = format_subbands(subbands);
  j["window_tiling"] = window_tiling;
  j["fft_part"] = fft_part == FftPart::phase ? "phase" : "phase_amplitude";
  j["dwt_layernorm"] = dwt_layernorm;
  j["ln_eps"] = ln_eps;
  j["bypass_attention"] = bypass_attention;
  return j.dump(2);
}

DetectorConfig DetectorConfig::from_json(const std::string& text) {
  DetectorConfig cfg;
  try {
    const json j = json::parse(text);
    auto get = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("input_size", cfg.input_size);
    get("c_int", cfg.c_int);
    get("dwt_window", cfg.dwt_window);
    get("fft_window", cfg.fft_window);
    get("lambda", cfg.lambda);
    if (j.contains("classifier_widths")) {
      const auto w = j.at("classifier_widths").get<std::vector<Index>>();
      if (w.size() != 2) throw ConfigError("classifier_widths needs two entries");
      cfg.classifier_widths = {w[0], w[1]};
    }
    get("blocks_per_stage", cfg.blocks_per_stage);
    get("seed", cfg.seed);
    if (j.contains("subbands")) cfg.subbands = parse_subbands(j.at("subbands").get<std::string>());
    get("window_tiling", cfg.window_tiling);
    if (j.contains("fft_part")) {
      const auto part = j.at("fft_part").get<std::string>();
      if (part == "phase") cfg.fft_part = FftPart::phase;
      else if (part == "phase_amplitude") cfg.fft_part = FftPart::phase_amplitude;
      else throw ConfigError("unknown fft_part '" + part + "'");
    }
    get("dwt_layernorm", cfg.dwt_layernorm);
    get("ln_eps", cfg.ln_eps);
    get("bypass_attention", cfg.bypass_attention);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

template <typename Scalar>
ParameterSet<Scalar> init_detector(const DetectorConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  ParameterSet<Scalar> p;
  const std::string dwt = kDwtPrefix, fft = kFftPrefix, cls = kClassifierPrefix;
  init_rsw(p, dwt + "rsw.", dwt_rsw(cfg), rng);
  p.add(dwt + "ln_gamma", Tensor<Scalar>::constant({3}, Scalar(1)));
  p.add(dwt + "ln_beta", Tensor<Scalar>({3}));
  init_rsw(p, fft + "rsw.", fft_rsw(cfg), rng);

  const Index w1 = cfg.classifier_widths[0], w2 = cfg.classifier_widths[1];
  add_conv3x3(p, cls + "stem", w1, 3, rng);
  for (Index stage = 0; stage < 2; ++stage) {
    const Index width = stage == 0 ? w1 : w2;
    if (stage == 1) add_conv3x3(p, cls + "down", w2, w1, rng);
    for (Index b = 0; b < cfg.blocks_per_stage; ++b) {
      const std::string name = block_name(stage, b);
      add_conv3x3(p, name + "conv1", width, width, rng);
      p.add(name + "norm_g", Tensor<Scalar>::constant({width}, Scalar(1)));
      p.add(name + "norm_b", Tensor<Scalar>({width}));
      add_conv3x3(p, name + "conv2", width, width, rng);
    }
  }
  p.add(cls + "fc_w", fan_in_uniform<Scalar>({w2, 1}, w2, rng));
  p.add(cls + "fc_b", Tensor<Scalar>({1}));
  return p;
}

template <typename Scalar>
Var<Scalar> dwt_branch(const Var<Scalar>& x, const BoundParameters<Scalar>& p,
                       const DetectorConfig& cfg) {
  check_image(x.shape(), cfg);
  const std::string prefix = kDwtPrefix;
  const auto ihat = mask_subbands(dwt_haar2(x), cfg.subbands);
  const auto grid = tile_grid(ihat.shape());
  auto tiled = dwt_window_tile(ihat, cfg.window_tiling);
  if (!cfg.bypass_attention) {
    if (cfg.dwt_layernorm) {
      tiled = layernorm(tiled, p[prefix + "ln_gamma"], p[prefix + "ln_beta"],
                        kernels::NormAxes{3, 1}, static_cast<Scalar>(cfg.ln_eps));
    }
    tiled = rsw_forward(tiled, p, prefix + "rsw.", dwt_rsw(cfg));
  }
  return idwt_haar2(dwt_window_untile(tiled, grid, cfg.window_tiling));
}

template <typename Scalar>
Var<Scalar> fft_branch(const Var<Scalar>& x, const BoundParameters<Scalar>& p,
                       const DetectorConfig& cfg) {
  check_image(x.shape(), cfg);
  auto& tape = p.tape();
  const Shape image = x.shape();
  const auto polar = polar_decompose(fft2(x));
  // The stored amplitude is reused unchanged; gradients reach the phase only.
  const auto amplitude = tape.constant(slice(polar, 0, 0, 1).value().reshaped(image));
  const auto phase = reshape(slice(polar, 0, 1, 1), image);
  if (cfg.bypass_attention) return ifft2_real(polar_recombine(amplitude, phase));

  const std::string prefix = std::string(kFftPrefix) + "rsw.";
  if (cfg.fft_part == FftPart::phase) {
    const auto new_phase = rsw_forward(phase, p, prefix, fft_rsw(cfg));
    return ifft2_real(polar_recombine(amplitude, new_phase));
  }
  // Amplitude enters on a log scale next to the phase; the first three output
  // channels come back as a log-amplitude.
  const auto joint = concat<Scalar>({log1p(amplitude), phase}, 1);
  const auto out = rsw_forward(joint, p, prefix, fft_rsw(cfg));
  const auto new_amplitude = abs(expm1(slice(out, 1, 0, 3)));
  const auto new_phase = slice(out, 1, 3, 3);
  return ifft2_real(polar_recombine(new_amplitude, new_phase));
}

template <typename Scalar>
Tensor<Scalar> fuse(const Tensor<Scalar>& dwt_out, const Tensor<Scalar>& fft_out, double lambda) {
  check_lambda(lambda);
  require_same_shape(dwt_out.shape(), fft_out.shape(), "fuse");
  const auto l = static_cast<Scalar>(lambda);
  return Tensor<Scalar>(dwt_out.shape(), (Scalar(1) - l) * dwt_out.array() + l * fft_out.array());
}

template <typename Scalar>
Var<Scalar> fuse(const Var<Scalar>& dwt_out, const Var<Scalar>& fft_out, double lambda) {
  check_lambda(lambda);
  const auto l = static_cast<Scalar>(lambda);
  return axpby(Scalar(1) - l, dwt_out, l, fft_out);
}

template <typename Scalar>
Var<Scalar> detector_features(const Var<Scalar>& x, const BoundParameters<Scalar>& p,
                              const DetectorConfig& cfg) {
  check_lambda(cfg.lambda);
  if (cfg.lambda == 0.0) return dwt_branch(x, p, cfg);
  if (cfg.lambda == 1.0) return fft_branch(x, p, cfg);
  return fuse(dwt_branch(x, p, cfg), fft_branch(x, p, cfg), cfg.lambda);
}

template <typename Scalar>
Var<Scalar> classifier_logits(const Var<Scalar>& features, const BoundParameters<Scalar>& p,
                              const DetectorConfig& cfg) {
  const std::string cls = kClassifierPrefix;
  auto conv = [&p](const Var<Scalar>& in, const std::string& name, Index stride = 1) {
    return conv3x3(in, p[name + "_w"], p[name + "_b"], stride);
  };
  auto h = gelu(conv(features, cls + "stem"));
  for (Index stage = 0; stage < 2; ++stage) {
    if (stage == 1) h = gelu(conv(h, cls + "down", 2));
    for (Index b = 0; b < cfg.blocks_per_stage; ++b) {
      const std::string name = block_name(stage, b);
      auto r = conv(h, name + "conv1");
      r = layernorm(r, p[name + "norm_g"], p[name + "norm_b"], kernels::NormAxes{1, 1},
                    static_cast<Scalar>(cfg.ln_eps));
      r = conv(gelu(r), name + "conv2");
      h = add(h, r);
    }
  }
  const auto logits = linear(global_avg_pool(h), p[cls + "fc_w"], p[cls + "fc_b"]);
  return reshape(logits, Shape{features.dim(0)});
}

template <typename Scalar>
Var<Scalar> detector_logits(const Var<Scalar>& x, const BoundParameters<Scalar>& p,
                            const DetectorConfig& cfg) {
  return classifier_logits(detector_features(x, p, cfg), p, cfg);
}

template <typename Scalar>
Var<Scalar> detector_probabilities(const Var<Scalar>& x, const BoundParameters<Scalar>& p,
                                   const DetectorConfig& cfg) {
  return sigmoid(detector_logits(x, p, cfg));
}

template <typename Scalar>
Tensor<Scalar> predict_logits(const ParameterSet<Scalar>& params, const DetectorConfig& cfg,
                              const Tensor<Scalar>& images) {
  Tape<Scalar> tape;
  BoundParameters<Scalar> p(tape, params, /*requires_grad=*/false);
  return detector_logits(tape.constant(images), p, cfg).value();
}

#define DUALFREQ_INSTANTIATE_DETECTOR(S)                                                        \
  template ParameterSet<S> init_detector(const DetectorConfig&);                                \
  template Var<S> dwt_branch(const Var<S>&, const BoundParameters<S>&, const DetectorConfig&);  \
  template Var<S> fft_branch(const Var<S>&, const BoundParameters<S>&, const DetectorConfig&);  \
  template Tensor<S> fuse(const Tensor<S>&, const Tensor<S>&, double);                          \
  template Var<S> fuse(const Var<S>&, const Var<S>&, double);                                   \
  template Var<S> detector_features(const Var<S>&, const BoundParameters<S>&,                   \
                                    const DetectorConfig&);                                     \
  template Var<S> classifier_logits(const Var<S>&, const BoundParameters<S>&,                   \
                                    const DetectorConfig&);                                     \
  template Var<S> detector_logits(const Var<S>&, const BoundParameters<S>&,                     \
                                  const DetectorConfig&);                                       \
  template Var<S> detector_probabilities(const Var<S>&, const BoundParameters<S>&,              \
                                         const DetectorConfig&);                                \
  template Tensor<S> predict_logits(const ParameterSet<S>&, const DetectorConfig&,              \
                                    const Tensor<S>&);

DUALFREQ_INSTANTIATE_DETECTOR(float)
DUALFREQ_INSTANTIATE_DETECTOR(double)

}  // namespace dualfreq
