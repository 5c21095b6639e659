#include "semhpo/cli_support.hpp"

#include <filesystem>
#include <fstream>

#include "semhpo/error.hpp"
#include "semhpo/hash.hpp"

namespace semhpo {

void RunManifest::add_input(const std::string& path) { inputs.emplace_back(path, hex64(hash_file(path))); }

std::string RunManifest::hash() const {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = config;
  j["seed"] = seed;
  j["version"] = version;
  auto& in = j["inputs"] = nlohmann::json::array();
  for (const auto& [path, h] : inputs) in.push_back(h);
  return hex64(fnv1a(j.dump()));
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = config;
  j["seed"] = seed;
  j["version"] = version;
  auto& in = j["inputs"] = nlohmann::json::array();
  for (const auto& [path, h] : inputs) in.push_back({{"path", path}, {"hash", h}});
  j["artifacts"] = artifacts;
  j["manifest_hash"] = hash();
  return j;
}

std::string RunManifest::write(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  const auto path = (std::filesystem::path(dir) / "manifest.json").string();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << to_json().dump(2) << '\n';
  return path;
}

}  // namespace semhpo
