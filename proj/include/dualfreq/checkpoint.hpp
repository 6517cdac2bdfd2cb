#pragma once

#include <string>

#include "dualfreq/detector.hpp"
#include "dualfreq/params.hpp"

namespace dualfreq {

// Layout (see docs/checkpoint-format.md): one line of JSON index, a '\n', then
// the little-endian f32 payload. Offsets in the index count from the payload start.
void save_checkpoint(const std::string& path, const ParameterSet<float>& params);
ParameterSet<float> load_checkpoint(const std::string& path);

// Model config sidecar, written next to the checkpoint as <path>.config.json.
std::string config_path_for(const std::string& checkpoint_path);
void save_model(const std::string& path, const ParameterSet<float>& params,
                const DetectorConfig& cfg);

struct LoadedModel {
  ParameterSet<float> params;
  DetectorConfig config;
};
LoadedModel load_model(const std::string& path);

}  // namespace dualfreq
