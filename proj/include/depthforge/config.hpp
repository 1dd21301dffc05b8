#pragma once

#include "depthforge/engine.hpp"
#include "depthforge/synth.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace depthforge {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a run needs. Serialized as JSON with sections scene, data,
/// run, perturb and ablation; missing keys keep their defaults and unknown
/// keys are rejected.
struct Config {
  SceneSpec scene{};
  DatasetConfig data{};
  RunConfig run{};
  AblationConfig ablation{};

  void validate() const;
  friend bool operator==(const Config&, const Config&) = default;
};

std::string serialize_config(const Config& config);
Config parse_config(const std::string& text);
Config load_config(const std::filesystem::path& path);

}  // namespace depthforge
