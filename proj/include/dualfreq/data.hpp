#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dualfreq/tensor.hpp"

namespace dualfreq {

enum class Split { train, val, test };

const char* split_name(Split s);
Split parse_split(const std::string& text);  // ConfigError on unknown names

struct ManifestEntry {
  std::string path;  // resolved against the manifest's directory when relative
  int label = 0;     // 0 real, 1 fake
  Split split = Split::train;
};

struct ClassCounts {
  Index real = 0, fake = 0;
};

// JSON lines: {"path": ..., "label": 0|1, "split": "train"|"val"|"test"}.
// Blank lines are skipped. ParseError names the offending line; IoError when
// the manifest or a listed image is missing.
std::vector<ManifestEntry> load_manifest(const std::string& path);

// Paths are written as given.
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

std::vector<ManifestEntry> select_split(const std::vector<ManifestEntry>& entries, Split split);
ClassCounts count_classes(const std::vector<ManifestEntry>& entries);

// 8-bit interleaved RGB.
struct Image8 {
  Index width = 0, height = 0;
  std::vector<std::uint8_t> rgb;
};

Image8 read_ppm(const std::string& path);  // binary P6, maxval 255
void write_ppm(const std::string& path, const Image8& image);

// Center crop to the largest square, bilinear resize (half-pixel centers,
// edge clamped) to size x size, scale to [0, 1]. Returns [3, size, size].
Tensor<float> preprocess(const Image8& image, Index size);
Tensor<float> decode_and_preprocess(const std::string& path, Index size);

// Stacks the listed entries into [B, 3, size, size]; decoding is spread over
// `threads` workers, the result does not depend on the thread count.
Tensor<float> load_images(const std::vector<ManifestEntry>& entries,
                          const std::vector<std::size_t>& indices, Index size, int threads = 1);

struct SyntheticSpec {
  Index n_per_class = 2000;
  Index size = 32;
  std::uint64_t seed = 0;
  double artifact_strength = 0.75;

  void validate() const;
};

// Real images: per-channel value noise summed over octaves with a per-image
// spectral slope, then a 3x3 binomial blur. Fake images: a fresh draw from the
// same generator, mixed with its 2x2-box-downsampled, nearest-upsampled copy
// at the given strength. Writes images/*.ppm and manifest.jsonl into out_dir
// (80/10/10 split per class) and returns the manifest path.
std::string gen_synthetic(const SyntheticSpec& spec, const std::string& out_dir);

// The in-memory image the generator would write for (seed, label, index),
// before quantization. Exposed for tests.
Tensor<float> synthetic_image(const SyntheticSpec& spec, int label, Index index);

}  // namespace dualfreq
