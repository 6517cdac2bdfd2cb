#include "dualfreq/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <numbers>
#include <numeric>
#include <random>

#include "dualfreq/binding.hpp"
#include "dualfreq/frequency.hpp"
#include "dualfreq/rswattention.hpp"
#include "dualfreq/windows.hpp"

namespace dualfreq {
namespace {

using T = Tensor<double>;
using V = Var<double>;
using Rng = std::mt19937_64;

// Loss value for the given inputs; fills grads (one per input) when non-null.
using Eval = std::function<double(const std::vector<T>&, std::vector<T>*)>;
using OpFn = std::function<V(Tape<double>&, const std::vector<V>&)>;

struct Case {
  std::vector<T> inputs;
  Eval eval;
};

Index pick(Rng& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

T rand_t(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) { return T::uniform(std::move(s), lo, hi, rng); }

Shape rand_shape(Rng& rng, Index max_rank = 3, Index max_dim = 4) {
  Shape s(static_cast<std::size_t>(pick(rng, 1, max_rank)));
  for (auto& d : s) d = pick(rng, 1, max_dim);
  return s;
}

// Plain ops: the probe is a weighted sum with weights fixed per case.
Case op_case(std::vector<T> inputs, OpFn fn, Rng& rng) {
  Shape out_shape;
  {
    Tape<double> tape;
    std::vector<V> vars;
    for (const auto& in : inputs) vars.push_back(tape.constant(in));
    out_shape = fn(tape, vars).shape();
  }
  auto weights = std::make_shared<T>(rand_t(out_shape, rng));
  Eval eval = [fn = std::move(fn), weights](const std::vector<T>& in, std::vector<T>* grads) {
    Tape<double> tape;
    std::vector<V> vars;
    for (const auto& t : in) vars.push_back(grads ? tape.leaf(t) : tape.constant(t));
    const auto loss = weighted_sum(fn(tape, vars), *weights);
    if (grads) {
      tape.backward(loss);
      grads->clear();
      for (const auto& v : vars) grads->push_back(tape.grad(v));
    }
    return loss.value()[0];
  };
  return Case{std::move(inputs), std::move(eval)};
}

std::vector<double> flatten(const std::vector<T>& ts) {
  std::vector<double> out;
  for (const auto& t : ts) out.insert(out.end(), t.data(), t.data() + t.size());
  return out;
}

double check_case(const Case& c, double h) {
  std::vector<T> grads;
  c.eval(c.inputs, &grads);
  std::vector<double> numeric;
  auto in = c.inputs;
  for (auto& t : in) {
    for (Index i = 0; i < t.size(); ++i) {
      const double keep = t[i];
      t[i] = keep + h;
      const double up = c.eval(in, nullptr);
      t[i] = keep - h;
      const double down = c.eval(in, nullptr);
      t[i] = keep;
      numeric.push_back((up - down) / (2 * h));
    }
  }
  return relative_error(flatten(grads), numeric);
}

Shape image_shape(Rng& rng, Index multiple = 1, Index max_blocks = 3) {
  return {pick(rng, 1, 2), pick(rng, 1, 3), multiple * pick(rng, 1, max_blocks), multiple * pick(rng, 1, max_blocks)};
}

Shape pow2_shape(Rng& rng) {
  return {pick(rng, 1, 2), pick(rng, 1, 2), Index{1} << pick(rng, 0, 3), Index{1} << pick(rng, 0, 3)};
}

using Builder = std::function<Case(Rng&)>;

Case unary(Rng& rng, V (*f)(const V&), double lo = -2.0, double hi = 2.0) {
  return op_case({rand_t(rand_shape(rng), rng, lo, hi)}, [f](Tape<double>&, const std::vector<V>& v) { return f(v[0]); }, rng);
}

Case binary(Rng& rng, V (*f)(const V&, const V&)) {
  const auto s = rand_shape(rng);
  return op_case({rand_t(s, rng), rand_t(s, rng)}, [f](Tape<double>&, const std::vector<V>& v) { return f(v[0], v[1]); }, rng);
}

Case rsw_case(Rng& rng) {
  RswConfig cfg;
  cfg.c_in = pick(rng, 1, 3);
  cfg.c_int = pick(rng, 1, 4);
  cfg.window = pick(rng, 1, 3);
  const Shape xs{pick(rng, 1, 2), cfg.c_in, cfg.window * pick(rng, 1, 2), cfg.window * pick(rng, 1, 2)};
  ParameterSet<double> init;
  init_rsw(init, "r.", cfg, rng);
  std::vector<T> inputs{rand_t(xs, rng)};
  std::vector<std::string> names;
  for (const auto& e : init) {
    names.push_back(e.name);
    // biases start at zero; give them values so their paths are exercised
    inputs.push_back(rand_t(e.value.shape(), rng));
  }
  Shape out_shape = xs;
  auto weights = std::make_shared<T>(rand_t(out_shape, rng));
  Eval eval = [names, cfg, weights](const std::vector<T>& in, std::vector<T>* grads) {
    ParameterSet<double> params;
    for (std::size_t i = 0; i < names.size(); ++i) params.add(names[i], in[i + 1]);
    Tape<double> tape;
    BoundParameters<double> bound(tape, params, grads != nullptr);
    const auto x = grads ? tape.leaf(in[0]) : tape.constant(in[0]);
    const auto loss = weighted_sum(rsw_forward(x, bound, "r.", cfg), *weights);
    if (grads) {
      tape.backward(loss);
      grads->clear();
      grads->push_back(tape.grad(x));
      for (auto& e : bound.gradients()) grads->push_back(e.value);
    }
    return loss.value()[0];
  };
  return Case{std::move(inputs), std::move(eval)};
}

std::vector<std::pair<std::string, Builder>> builders() {
  using Ops = std::vector<V>;
  std::vector<std::pair<std::string, Builder>> b;
  b.emplace_back("add", [](Rng& r) { return binary(r, add<double>); });
  b.emplace_back("sub", [](Rng& r) { return binary(r, sub<double>); });
  b.emplace_back("mul", [](Rng& r) { return binary(r, mul<double>); });
  b.emplace_back("scale", [](Rng& r) {
    const double f = std::uniform_real_distribution<double>(-2, 2)(r);
    return op_case({rand_t(rand_shape(r), r)}, [f](Tape<double>&, const Ops& v) { return scale(v[0], f); }, r);
  });
  b.emplace_back("axpby", [](Rng& r) {
    std::uniform_real_distribution<double> d(-2, 2);
    const double a = d(r), c = d(r);
    const auto s = rand_shape(r);
    return op_case({rand_t(s, r), rand_t(s, r)}, [a, c](Tape<double>&, const Ops& v) { return axpby(a, v[0], c, v[1]); }, r);
  });
  b.emplace_back("sigmoid", [](Rng& r) { return unary(r, sigmoid<double>, -4, 4); });
  b.emplace_back("exp", [](Rng& r) { return unary(r, exp<double>); });
  b.emplace_back("expm1", [](Rng& r) { return unary(r, expm1<double>); });
  b.emplace_back("log1p", [](Rng& r) { return unary(r, log1p<double>, -0.5, 2.0); });
  b.emplace_back("abs", [](Rng& r) {
    // keep away from the kink at 0
    auto x = rand_t(rand_shape(r), r, 0.1, 1.0);
    for (Index i = 0; i < x.size(); ++i) x[i] *= (r() & 1) ? 1 : -1;
    return op_case({x}, [](Tape<double>&, const Ops& v) { return abs(v[0]); }, r);
  });
  b.emplace_back("gelu", [](Rng& r) { return unary(r, gelu<double>, -3, 3); });
  b.emplace_back("sum", [](Rng& r) { return unary(r, sum<double>); });
  b.emplace_back("mean", [](Rng& r) { return unary(r, mean<double>); });
  b.emplace_back("reshape", [](Rng& r) {
    const Shape s{pick(r, 1, 3), pick(r, 1, 3), pick(r, 1, 3)};
    return op_case({rand_t(s, r)}, [s](Tape<double>&, const Ops& v) { return reshape(v[0], {s[2], s[0] * s[1]}); }, r);
  });
  b.emplace_back("gather", [](Rng& r) {
    const auto s = rand_shape(r);
    auto perm = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(shape_size(s)));
    std::iota(perm->begin(), perm->end(), Index{0});
    std::shuffle(perm->begin(), perm->end(), r);
    Permutation p = perm;
    return op_case({rand_t(s, r)}, [p, s](Tape<double>&, const Ops& v) { return gather(v[0], p, s); }, r);
  });
  b.emplace_back("slice", [](Rng& r) {
    const auto s = rand_shape(r);
    const Index axis = pick(r, 0, static_cast<Index>(s.size()) - 1);
    const Index start = pick(r, 0, s[static_cast<std::size_t>(axis)] - 1);
    const Index len = pick(r, 1, s[static_cast<std::size_t>(axis)] - start);
    return op_case({rand_t(s, r)}, [=](Tape<double>&, const Ops& v) { return slice(v[0], axis, start, len); }, r);
  });
  b.emplace_back("concat", [](Rng& r) {
    const auto s = rand_shape(r);
    const Index axis = pick(r, 0, static_cast<Index>(s.size()) - 1);
    std::vector<T> parts;
    for (Index k = pick(r, 1, 3); k > 0; --k) {
      auto ps = s;
      ps[static_cast<std::size_t>(axis)] = pick(r, 1, 3);
      parts.push_back(rand_t(ps, r));
    }
    return op_case(parts, [axis](Tape<double>&, const Ops& v) { return concat(v, axis); }, r);
  });
  b.emplace_back("matmul", [](Rng& r) {
    const Index m = pick(r, 1, 4), k = pick(r, 1, 4), n = pick(r, 1, 4);
    return op_case({rand_t({m, k}, r), rand_t({k, n}, r)}, [](Tape<double>&, const Ops& v) { return matmul(v[0], v[1]); }, r);
  });
  b.emplace_back("matmul_batched_bt", [](Rng& r) {
    const Index s = pick(r, 1, 3), m = pick(r, 1, 4), k = pick(r, 1, 4), n = pick(r, 1, 4);
    return op_case({rand_t({s, m, k}, r), rand_t({s, n, k}, r)},
                   [](Tape<double>&, const Ops& v) { return matmul(v[0], v[1], true); }, r);
  });
  b.emplace_back("softmax", [](Rng& r) {
    const auto s = rand_shape(r);
    const Index axis = pick(r, 0, static_cast<Index>(s.size()) - 1);
    return op_case({rand_t(s, r, -3, 3)}, [axis](Tape<double>&, const Ops& v) { return softmax(v[0], axis); }, r);
  });
  b.emplace_back("linear", [](Rng& r) {
    const Index n = pick(r, 1, 4), m = pick(r, 1, 4);
    return op_case({rand_t({pick(r, 1, 3), pick(r, 1, 3), n}, r), rand_t({n, m}, r), rand_t({m}, r)},
                   [](Tape<double>&, const Ops& v) { return linear(v[0], v[1], v[2]); }, r);
  });
  b.emplace_back("layernorm_chw", [](Rng& r) {
    const auto s = image_shape(r);
    return op_case({rand_t(s, r), rand_t({s[1]}, r), rand_t({s[1]}, r)},
                   [](Tape<double>&, const Ops& v) { return layernorm(v[0], v[1], v[2], kernels::NormAxes{1, 1}, 1e-5); }, r);
  });
  b.emplace_back("layernorm_last", [](Rng& r) {
    const Shape s{pick(r, 1, 2), pick(r, 1, 3), pick(r, 1, 4), pick(r, 2, 8)};
    return op_case({rand_t(s, r), rand_t({s[1]}, r), rand_t({s[1]}, r)},
                   [](Tape<double>&, const Ops& v) { return layernorm(v[0], v[1], v[2], kernels::NormAxes{3, 1}, 1e-5); }, r);
  });
  b.emplace_back("conv1x1", [](Rng& r) {
    const auto s = image_shape(r);
    const Index co = pick(r, 1, 3);
    return op_case({rand_t(s, r), rand_t({co, s[1]}, r), rand_t({co}, r)},
                   [](Tape<double>&, const Ops& v) { return conv1x1(v[0], v[1], v[2]); }, r);
  });
  b.emplace_back("depthwise_conv3x3", [](Rng& r) {
    const auto s = image_shape(r, 1, 4);
    return op_case({rand_t(s, r), rand_t({s[1], 3, 3}, r), rand_t({s[1]}, r)},
                   [](Tape<double>&, const Ops& v) { return depthwise_conv3x3(v[0], v[1], v[2]); }, r);
  });
  for (Index stride : {Index{1}, Index{2}}) {
    b.emplace_back("conv3x3_s" + std::to_string(stride), [stride](Rng& r) {
      const auto s = image_shape(r, 1, 4);
      const Index co = pick(r, 1, 3);
      return op_case({rand_t(s, r), rand_t({co, s[1], 3, 3}, r), rand_t({co}, r)},
                     [stride](Tape<double>&, const Ops& v) { return conv3x3(v[0], v[1], v[2], stride); }, r);
    });
  }
  b.emplace_back("global_avg_pool", [](Rng& r) {
    return op_case({rand_t(image_shape(r), r)}, [](Tape<double>&, const Ops& v) { return global_avg_pool(v[0]); }, r);
  });
  b.emplace_back("bce_loss", [](Rng& r) {
    const Index n = pick(r, 1, 8);
    T labels({n});
    for (Index i = 0; i < n; ++i) labels[i] = static_cast<double>(r() & 1);
    return op_case({rand_t({n}, r, 0.05, 0.95)}, [labels](Tape<double>&, const Ops& v) { return bce_loss(v[0], labels); }, r);
  });
  b.emplace_back("softmax_bce", [](Rng& r) {
    T labels({8});
    for (Index i = 0; i < 8; ++i) labels[i] = static_cast<double>(r() & 1);
    return op_case({rand_t({8}, r, -2, 2)},
                   [labels](Tape<double>&, const Ops& v) { return bce_loss(softmax(v[0], 0), labels); }, r);
  });
  b.emplace_back("dwt_haar2", [](Rng& r) {
    return op_case({rand_t(image_shape(r, 2), r)}, [](Tape<double>&, const Ops& v) { return dwt_haar2(v[0]); }, r);
  });
  b.emplace_back("idwt_haar2", [](Rng& r) {
    const Shape s{pick(r, 1, 2), 4, pick(r, 1, 3), pick(r, 1, 3), pick(r, 1, 3)};
    return op_case({rand_t(s, r)}, [](Tape<double>&, const Ops& v) { return idwt_haar2(v[0]); }, r);
  });
  b.emplace_back("mask_subbands", [](Rng& r) {
    const Shape s{pick(r, 1, 2), 4, pick(r, 1, 3), pick(r, 1, 3), pick(r, 1, 3)};
    SubbandMask m{};
    for (auto& k : m) k = r() & 1;
    return op_case({rand_t(s, r)}, [m](Tape<double>&, const Ops& v) { return mask_subbands(v[0], m); }, r);
  });
  b.emplace_back("fft2", [](Rng& r) {
    return op_case({rand_t(pow2_shape(r), r)}, [](Tape<double>&, const Ops& v) { return fft2(v[0]); }, r);
  });
  b.emplace_back("ifft2_real", [](Rng& r) {
    auto s = pow2_shape(r);
    s.insert(s.begin(), 2);
    return op_case({rand_t(s, r)}, [](Tape<double>&, const Ops& v) { return ifft2_real(v[0]); }, r);
  });
  b.emplace_back("polar_decompose", [](Rng& r) {
    // amplitude bounded away from 0 and phase away from the branch cut at +-pi
    const auto s = pow2_shape(r);
    const Index n = shape_size(s);
    auto amp = rand_t(s, r, 0.2, 1.5), phase = rand_t(s, r, -std::numbers::pi + 0.1, std::numbers::pi - 0.1);
    Shape ps = s;
    ps.insert(ps.begin(), 2);
    T packed(ps);
    for (Index i = 0; i < n; ++i) {
      packed[i] = amp[i] * std::cos(phase[i]);
      packed[n + i] = amp[i] * std::sin(phase[i]);
    }
    return op_case({packed}, [](Tape<double>&, const Ops& v) { return polar_decompose(v[0]); }, r);
  });
  b.emplace_back("polar_recombine", [](Rng& r) {
    const auto s = pow2_shape(r);
    return op_case({rand_t(s, r, 0.1, 2), rand_t(s, r, -3, 3)},
                   [](Tape<double>&, const Ops& v) { return polar_recombine(v[0], v[1]); }, r);
  });
  b.emplace_back("window_partition", [](Rng& r) {
    const Index side = pick(r, 1, 3);
    return op_case({rand_t(image_shape(r, side, 2), r)},
                   [side](Tape<double>&, const Ops& v) { return window_partition(v[0], side); }, r);
  });
  b.emplace_back("window_inverse", [](Rng& r) {
    const Index side = pick(r, 1, 3);
    const auto grid = window_grid(image_shape(r, side, 2), side);
    return op_case({rand_t(grid.windowed_shape(), r)},
                   [grid](Tape<double>&, const Ops& v) { return window_inverse(v[0], grid); }, r);
  });
  for (bool tiled : {true, false}) {
    const std::string suffix = tiled ? "tiled" : "flat";
    b.emplace_back("dwt_window_tile_" + suffix, [tiled](Rng& r) {
      const Shape s{pick(r, 1, 2), 4, pick(r, 1, 3), 2 * pick(r, 1, 2), 2 * pick(r, 1, 2)};
      return op_case({rand_t(s, r)}, [tiled](Tape<double>&, const Ops& v) { return dwt_window_tile(v[0], tiled); }, r);
    });
    b.emplace_back("dwt_window_untile_" + suffix, [tiled](Rng& r) {
      const auto grid = tile_grid({pick(r, 1, 2), 4, pick(r, 1, 3), 2 * pick(r, 1, 2), 2 * pick(r, 1, 2)});
      return op_case({rand_t(grid.tiled_shape(), r)},
                     [grid, tiled](Tape<double>&, const Ops& v) { return dwt_window_untile(v[0], grid, tiled); }, r);
    });
  }
  b.emplace_back("lo_attention", [](Rng& r) {
    const Shape s{pick(r, 1, 3), pick(r, 1, 4), pick(r, 1, 5)};
    return op_case({rand_t(s, r), rand_t(s, r), rand_t(s, r)},
                   [](Tape<double>&, const Ops& v) { return lo_attention(v[0], v[1], v[2]); }, r);
  });
  b.emplace_back("gmlp", [](Rng& r) {
    const Index n = pick(r, 1, 5);
    return op_case({rand_t({pick(r, 1, 3), pick(r, 1, 3), n}, r), rand_t({n, n}, r), rand_t({n}, r)},
                   [](Tape<double>&, const Ops& v) { return gmlp(v[0], v[1], v[2]); }, r);
  });
  b.emplace_back("rsw_block", rsw_case);
  return b;
}

template <typename S>
S detector_loss(const ParameterSet<S>& params, const DetectorConfig& cfg, const Tensor<S>& image,
                const Tensor<S>& label, ParameterSet<S>* grads) {
  Tape<S> tape;
  BoundParameters<S> bound(tape, params, grads != nullptr);
  const auto loss = bce_loss(detector_probabilities(tape.constant(image), bound, cfg), label);
  if (grads) {
    tape.backward(loss);
    *grads = bound.gradients();
  }
  return loss.value()[0];
}

}  // namespace

double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  if (analytic.size() != numeric.size()) throw DimensionError("relative_error: length mismatch");
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-10});
}

std::vector<GradcheckRow> kernel_gradcheck(std::uint64_t seed, Index trials, double h, double tolerance) {
  if (trials < 1) throw ContractError("kernel_gradcheck: trials must be positive");
  std::vector<GradcheckRow> rows;
  Index k = 0;
  for (const auto& [name, build] : builders()) {
    GradcheckRow row{name, 0.0, trials, tolerance};
    for (Index t = 0; t < trials; ++t) {
      Rng rng(seed * 1000003ULL + static_cast<std::uint64_t>(k) * 7919ULL + static_cast<std::uint64_t>(t));
      const double err = check_case(build(rng), h);
      if (std::isnan(err) || err > row.max_rel_error) row.max_rel_error = err;
    }
    rows.push_back(row);
    ++k;
  }
  return rows;
}

DetectorConfig gradcheck_detector_config() {
  DetectorConfig cfg;
  cfg.input_size = 16;
  return cfg;
}

GradcheckRow detector_gradcheck(std::uint64_t seed, const DetectorConfig& cfg_in, Index coords, double h,
                                double tolerance) {
  DetectorConfig cfg = cfg_in;
  cfg.seed = seed;
  cfg.validate();
  Rng rng(seed ^ 0x6772616463686bULL);
  const auto params = init_detector<float>(cfg);
  const auto image = Tensor<float>::uniform({1, 3, cfg.input_size, cfg.input_size}, 0.0f, 1.0f, rng);
  Tensor<float> label({1});
  label[0] = static_cast<float>(rng() & 1);

  ParameterSet<float> grads;
  detector_loss(params, cfg, image, label, &grads);

  // flat coordinates over the whole parameter set, sampled without replacement
  std::vector<std::pair<std::string, Index>> all;
  for (const auto& e : params) {
    for (Index i = 0; i < e.value.size(); ++i) all.emplace_back(e.name, i);
  }
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min<std::size_t>(all.size(), static_cast<std::size_t>(coords)));

  auto dparams = params.cast<double>();
  const auto dimage = image.cast<double>();
  const auto dlabel = label.cast<double>();
  std::vector<double> analytic, numeric;
  for (const auto& [name, i] : all) {
    analytic.push_back(grads[name][i]);
    double& p = dparams[name][i];
    const double keep = p;
    p = keep + h;
    const double up = detector_loss<double>(dparams, cfg, dimage, dlabel, nullptr);
    p = keep - h;
    const double down = detector_loss<double>(dparams, cfg, dimage, dlabel, nullptr);
    p = keep;
    numeric.push_back((up - down) / (2 * h));
  }
  return GradcheckRow{"detector_end_to_end", relative_error(analytic, numeric), static_cast<Index>(all.size()), tolerance};
}

std::string format_gradcheck_csv(const std::vector<GradcheckRow>& rows) {
  std::string out = "kernel,max_rel_error,trials,tolerance,pass\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.3e", r.max_rel_error);
    out += r.kernel + "," + buf + "," + std::to_string(r.trials) + ",";
    std::snprintf(buf, sizeof buf, "%g", r.tolerance);
    out += std::string(buf) + "," + (r.pass() ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace dualfreq
