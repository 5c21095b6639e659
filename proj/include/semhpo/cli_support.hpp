#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace semhpo {

/// Provenance record written next to every artifact a subcommand produces.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, content hash
  std::vector<std::string> artifacts;
  std::string version = SEMHPO_VERSION;

  /// Hashes the input file and records it; throws ConfigError if unreadable.
  void add_input(const std::string& path);
  /// Fingerprint of command, config, seed, inputs and version; artifact
  /// paths are excluded so a run directory can be named after it.
  std::string hash() const;
  nlohmann::json to_json() const;
  /// Writes manifest.json into dir and returns its path.
  std::string write(const std::string& dir) const;
};

}  // namespace semhpo
