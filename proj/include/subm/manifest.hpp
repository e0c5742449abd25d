#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "subm/format.hpp"

namespace subm {

/// Every CLI command writes one manifest next to its outputs: a single
/// line-delimited JSON record holding the fully resolved configuration. A
/// rerun with the same manifest reproduces byte-identical primary outputs.
inline void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                           const nlohmann::json& config, const std::vector<std::string>& inputs,
                           const std::vector<std::string>& outputs) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  nlohmann::json j{{"command", command},
                   {"config", config},
                   {"inputs", inputs},
                   {"outputs", outputs},
                   {"timestamp", stamp}};
  write_file_atomic(out_dir / (command + ".manifest.jsonl"), j.dump() + "\n");
}

}  // namespace subm
