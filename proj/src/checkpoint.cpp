#include "dualfreq/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace dualfreq {
namespace {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "payload is written in native order");

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

}  // namespace

void save_checkpoint(const std::string& path, const ParameterSet<float>& params) {
  // ordered_json keeps the parameter order in the index as well as the payload.
  nlohmann::ordered_json index = nlohmann::ordered_json::object();
  std::string payload;
  for (const auto& e : params) {
    if (!e.value.all_finite()) throw NumericError("parameter '" + e.name + "' is not finite");
    index[e.name] = {{"shape", e.value.shape()}, {"offset", payload.size()}, {"dtype", "f32"}};
    const auto bytes = static_cast<std::size_t>(e.value.size()) * sizeof(float);
    const auto at = payload.size();
    payload.resize(at + bytes);
    std::memcpy(payload.data() + at, e.value.data(), bytes);
  }
  write_file(path, index.dump() + "\n" + payload);
}

ParameterSet<float> load_checkpoint(const std::string& path) {
  const std::string bytes = read_file(path);
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) throw ParseError(path + ": missing index line", 1);
  nlohmann::ordered_json index;
  try {
    index = nlohmann::ordered_json::parse(bytes.substr(0, newline));
  } catch (const json::exception& e) {
    throw ParseError(path + ": bad index: " + e.what(), 1);
  }
  const char* payload = bytes.data() + newline + 1;
  const auto payload_size = bytes.size() - newline - 1;
  ParameterSet<float> params;
  for (const auto& [name, entry] : index.items()) {
    try {
      if (entry.at("dtype").get<std::string>() != "f32") {
        throw ParseError(path + ": parameter '" + name + "' has unsupported dtype", 1);
      }
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      Tensor<float> t(shape);
      const auto n = static_cast<std::size_t>(t.size()) * sizeof(float);
      if (offset + n > payload_size) throw ParseError(path + ": payload truncated at '" + name + "'", 1);
      std::memcpy(t.data(), payload + offset, n);
      params.add(name, std::move(t));
    } catch (const json::exception& e) {
      throw ParseError(path + ": bad entry '" + name + "': " + e.what(), 1);
    }
  }
  return params;
}

std::string config_path_for(const std::string& checkpoint_path) {
  return checkpoint_path + ".config.json";
}

void save_model(const std::string& path, const ParameterSet<float>& params,
                const DetectorConfig& cfg) {
  save_checkpoint(path, params);
  write_file(config_path_for(path), cfg.to_json() + "\n");
}

LoadedModel load_model(const std::string& path) {
  LoadedModel m{load_checkpoint(path), DetectorConfig::from_json(read_file(config_path_for(path)))};
  const auto expected = init_detector<float>(m.config);
  for (const auto& e : expected) {
    if (!m.params.contains(e.name)) {
      throw ConfigError(path + ": checkpoint lacks parameter '" + e.name + "'");
    }
    require_same_shape(m.params[e.name].shape(), e.value.shape(), e.name.c_str());
  }
  if (m.params.size() != expected.size()) {
    throw ConfigError(path + ": checkpoint has parameters the model config does not use");
  }
  return m;
}

}  // namespace dualfreq
