#include "dualfreq/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>
#include <thread>

namespace dualfreq {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t image_seed(std::uint64_t seed, int label, Index index) {
  return splitmix(splitmix(seed) ^ splitmix(static_cast<std::uint64_t>(label) * 0x100000000ULL +
                                            static_cast<std::uint64_t>(index)));
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(std::istream& in, const std::string& path) {
  std::string tok;
  while (tok.empty()) {
    int c = in.get();
    if (c == EOF) throw IoError(path + ": truncated PPM header");
    if (c == '#') {
      std::string rest;
      std::getline(in, rest);
    } else if (!std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      while (std::isdigit(in.peek()) || std::isalpha(in.peek())) tok.push_back(static_cast<char>(in.get()));
    }
  }
  return tok;
}

Index parse_positive(const std::string& tok, const std::string& path) {
  try {
    std::size_t used = 0;
    const long v = std::stol(tok, &used);
    if (used == tok.size() && v > 0) return v;
  } catch (const std::exception&) {
  }
  throw IoError(path + ": bad PPM header field '" + tok + "'");
}

float smoothstep(float t) { return t * t * (3.0f - 2.0f * t); }

// One octave of value noise with lattice spacing `cell`, sampled at size x size.
void add_octave(std::vector<float>& plane, Index size, Index cell, float amplitude,
                std::mt19937_64& rng) {
  const Index n = size / cell + 1;
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> lattice(static_cast<std::size_t>(n * n));
  for (auto& v : lattice) v = dist(rng);
  auto at = [&](Index i, Index j) { return lattice[static_cast<std::size_t>(i * n + j)]; };
  for (Index y = 0; y < size; ++y) {
    const Index i = y / cell;
    const float ty = smoothstep(static_cast<float>(y % cell) / static_cast<float>(cell));
    for (Index x = 0; x < size; ++x) {
      const Index j = x / cell;
      const float tx = smoothstep(static_cast<float>(x % cell) / static_cast<float>(cell));
      const float top = at(i, j) + (at(i, j + 1) - at(i, j)) * tx;
      const float bottom = at(i + 1, j) + (at(i + 1, j + 1) - at(i + 1, j)) * tx;
      plane[static_cast<std::size_t>(y * size + x)] += amplitude * (top + (bottom - top) * ty);
    }
  }
}

// [1 2 1]^T [1 2 1] / 16 with clamped borders.
void blur3x3(std::vector<float>& plane, Index size) {
  std::vector<float> out(plane.size());
  const float k[3] = {0.25f, 0.5f, 0.25f};
  auto clamp = [size](Index v) { return std::clamp<Index>(v, 0, size - 1); };
  for (Index y = 0; y < size; ++y) {
    for (Index x = 0; x < size; ++x) {
      float acc = 0;
      for (Index dy = -1; dy <= 1; ++dy)
        for (Index dx = -1; dx <= 1; ++dx)
          acc += k[dy + 1] * k[dx + 1] * plane[static_cast<std::size_t>(clamp(y + dy) * size + clamp(x + dx))];
      out[static_cast<std::size_t>(y * size + x)] = acc;
    }
  }
  plane.swap(out);
}

std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw ConfigError("unknown split '" + text + "'");
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ManifestEntry e;
    try {
      const json j = json::parse(line);
      e.path = j.at("path").get<std::string>();
      e.label = j.at("label").get<int>();
      e.split = parse_split(j.at("split").get<std::string>());
    } catch (const json::exception& ex) {
      throw ParseError(path + ": malformed manifest entry: " + ex.what(), line_no);
    } catch (const ConfigError& ex) {
      throw ParseError(path + ": " + ex.what(), line_no);
    }
    if (e.label != 0 && e.label != 1) {
      throw ParseError(path + ": label must be 0 or 1, got " + std::to_string(e.label), line_no);
    }
    if (fs::path(e.path).is_relative()) e.path = (base / e.path).string();
    if (!fs::exists(e.path)) throw IoError(path + ": line " + std::to_string(line_no) + ": no such image " + e.path);
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path);
  for (const auto& e : entries) {
    json j;
    j["path"] = e.path;
    j["label"] = e.label;
    j["split"] = split_name(e.split);
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("short write to " + path);
}

std::vector<ManifestEntry> select_split(const std::vector<ManifestEntry>& entries, Split split) {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(e);
  }
  return out;
}

ClassCounts count_classes(const std::vector<ManifestEntry>& entries) {
  ClassCounts c;
  for (const auto& e : entries) (e.label == 1 ? c.fake : c.real) += 1;
  return c;
}

Image8 read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path);
  if (ppm_token(in, path) != "P6") throw IoError(path + ": unsupported image format (expected binary P6 PPM)");
  Image8 img;
  img.width = parse_positive(ppm_token(in, path), path);
  img.height = parse_positive(ppm_token(in, path), path);
  if (parse_positive(ppm_token(in, path), path) != 255) throw IoError(path + ": only maxval 255 is supported");
  in.get();  // single whitespace after maxval
  img.rgb.resize(static_cast<std::size_t>(img.width * img.height * 3));
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.rgb.size())) throw IoError(path + ": truncated pixel data");
  return img;
}

void write_ppm(const std::string& path, const Image8& image) {
  if (static_cast<Index>(image.rgb.size()) != image.width * image.height * 3) {
    throw DimensionError("write_ppm: pixel buffer does not match " + std::to_string(image.width) + "x" +
                         std::to_string(image.height));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image " + path);
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw IoError("short write to " + path);
}

Tensor<float> preprocess(const Image8& image, Index size) {
  if (size < 1) throw ContractError("preprocess: size must be positive");
  const Index side = std::min(image.width, image.height);
  const Index x0 = (image.width - side) / 2, y0 = (image.height - side) / 2;
  const double scale = static_cast<double>(side) / static_cast<double>(size);
  auto pixel = [&](Index y, Index x, Index c) {
    return static_cast<float>(image.rgb[static_cast<std::size_t>(((y0 + y) * image.width + x0 + x) * 3 + c)]);
  };
  // Source coordinate and weight for each destination index along one axis.
  struct Tap {
    Index lo, hi;
    float t;
  };
  std::vector<Tap> taps(static_cast<std::size_t>(size));
  for (Index d = 0; d < size; ++d) {
    const double src = std::clamp((static_cast<double>(d) + 0.5) * scale - 0.5, 0.0, static_cast<double>(side - 1));
    const auto lo = static_cast<Index>(std::floor(src));
    taps[static_cast<std::size_t>(d)] = {lo, std::min(lo + 1, side - 1), static_cast<float>(src - static_cast<double>(lo))};
  }
  Tensor<float> out({3, size, size});
  for (Index c = 0; c < 3; ++c) {
    for (Index y = 0; y < size; ++y) {
      const auto& ty = taps[static_cast<std::size_t>(y)];
      for (Index x = 0; x < size; ++x) {
        const auto& tx = taps[static_cast<std::size_t>(x)];
        const float top = pixel(ty.lo, tx.lo, c) * (1 - tx.t) + pixel(ty.lo, tx.hi, c) * tx.t;
        const float bottom = pixel(ty.hi, tx.lo, c) * (1 - tx.t) + pixel(ty.hi, tx.hi, c) * tx.t;
        out(c, y, x) = (top * (1 - ty.t) + bottom * ty.t) / 255.0f;
      }
    }
  }
  return out;
}

Tensor<float> decode_and_preprocess(const std::string& path, Index size) {
  return preprocess(read_ppm(path), size);
}

Tensor<float> load_images(const std::vector<ManifestEntry>& entries,
                          const std::vector<std::size_t>& indices, Index size, int threads) {
  const auto n = static_cast<Index>(indices.size());
  Tensor<float> batch({std::max<Index>(n, 1), 3, size, size});
  if (n == 0) throw ContractError("load_images: empty selection");
  const Index per = 3 * size * size;
  auto work = [&](Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      const auto img = decode_and_preprocess(entries.at(indices[static_cast<std::size_t>(i)]).path, size);
      std::copy(img.data(), img.data() + per, batch.data() + i * per);
    }
  };
  const Index workers = std::clamp<Index>(threads, 1, n);
  if (workers == 1) {
    work(0, n);
    return batch;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (Index w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        work(n * w / workers, n * (w + 1) / workers);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return batch;
}

void SyntheticSpec::validate() const {
  if (n_per_class < 1) throw ConfigError("n_per_class must be at least 1");
  if (size < 16 || (size & (size - 1)) != 0) throw ConfigError("size must be a power of two >= 16");
  if (!(artifact_strength >= 0.0 && artifact_strength <= 1.0)) {
    throw ConfigError("artifact_strength must lie in [0, 1]");
  }
}

Tensor<float> synthetic_image(const SyntheticSpec& spec, int label, Index index) {
  spec.validate();
  std::mt19937_64 rng(image_seed(spec.seed, label, index));
  std::uniform_real_distribution<float> uni(0.0f, 1.0f);
  const Index size = spec.size;
  // Spectral slope: 0 is rough (all octaves equal), 2 is smooth.
  const float slope = 2.0f * uni(rng);
  const float contrast = 0.08f + 0.14f * uni(rng);
  const float base = 0.3f + 0.4f * uni(rng);

  Tensor<float> out({3, size, size});
  std::vector<float> plane(static_cast<std::size_t>(size * size));
  for (Index c = 0; c < 3; ++c) {
    std::fill(plane.begin(), plane.end(), 0.0f);
    for (Index cell = 1; cell <= size / 2; cell *= 2) {
      add_octave(plane, size, cell, std::pow(static_cast<float>(cell), slope), rng);
    }
    double mean = 0, sq = 0;
    for (float v : plane) mean += v;
    mean /= static_cast<double>(plane.size());
    for (float v : plane) sq += (v - mean) * (v - mean);
    const auto inv_std = static_cast<float>(1.0 / std::sqrt(sq / static_cast<double>(plane.size()) + 1e-12));
    const float channel_mean = base + 0.2f * (uni(rng) - 0.5f);
    for (auto& v : plane) v = channel_mean + contrast * (v - static_cast<float>(mean)) * inv_std;
    blur3x3(plane, size);

    if (label == 1 && spec.artifact_strength > 0.0) {
      const auto s = static_cast<float>(spec.artifact_strength);
      for (Index y = 0; y < size; y += 2) {
        for (Index x = 0; x < size; x += 2) {
          float* p[4] = {&plane[static_cast<std::size_t>(y * size + x)], &plane[static_cast<std::size_t>(y * size + x + 1)],
                         &plane[static_cast<std::size_t>((y + 1) * size + x)], &plane[static_cast<std::size_t>((y + 1) * size + x + 1)]};
          const float box = 0.25f * (*p[0] + *p[1] + *p[2] + *p[3]);
          for (float* v : p) *v = s == 1.0f ? box : (1.0f - s) * *v + s * box;
        }
      }
    }
    for (Index i = 0; i < size * size; ++i) out.data()[c * size * size + i] = std::clamp(plane[static_cast<std::size_t>(i)], 0.0f, 1.0f);
  }
  return out;
}

std::string gen_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
  spec.validate();
  const fs::path root(out_dir);
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  if (ec) throw IoError("cannot create " + (root / "images").string() + ": " + ec.message());

  std::vector<ManifestEntry> entries;
  const Index n = spec.n_per_class;
  const Index n_train = n * 8 / 10, n_val = n / 10;
  for (int label = 0; label < 2; ++label) {
    // Split membership is a seeded shuffle of the per-class indices.
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::mt19937_64 split_rng(splitmix(spec.seed ^ (0x5eed0000ULL + static_cast<std::uint64_t>(label))));
    std::shuffle(order.begin(), order.end(), split_rng);
    std::vector<Split> split_of(static_cast<std::size_t>(n));
    for (Index r = 0; r < n; ++r) {
      split_of[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] =
          r < n_train ? Split::train : (r < n_train + n_val ? Split::val : Split::test);
    }
    for (Index i = 0; i < n; ++i) {
      const auto t = synthetic_image(spec, label, i);
      Image8 img{spec.size, spec.size, std::vector<std::uint8_t>(static_cast<std::size_t>(spec.size * spec.size * 3))};
      for (Index y = 0; y < spec.size; ++y)
        for (Index x = 0; x < spec.size; ++x)
          for (Index c = 0; c < 3; ++c)
            img.rgb[static_cast<std::size_t>((y * spec.size + x) * 3 + c)] = quantize(t(c, y, x));
      char name[64];
      std::snprintf(name, sizeof name, "images/%s_%06ld.ppm", label ? "fake" : "real", static_cast<long>(i));
      write_ppm((root / name).string(), img);
      entries.push_back({name, label, split_of[static_cast<std::size_t>(i)]});
    }
  }
  const auto manifest = (root / "manifest.jsonl").string();
  write_manifest(manifest, entries);
  return manifest;
}

}  // namespace dualfreq
