#pragma once

#include <json.hpp>
#include <map>
#include <string>
#include <vector>

namespace swea {

/// Reproducibility record for one CLI run: the exact invocation, the fully
/// resolved configuration (seeds included), and content hashes of every file
/// read or written. Deliberately carries no timestamps so a re-run emits a
/// byte-identical manifest.
struct RunManifest {
  std::string tool_version = "swea 1.0";
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::string> inputs;   // path -> content hash
  std::map<std::string, std::string> outputs;  // path -> content hash

  void add_input(const std::string& path);
  void add_output(const std::string& path);

  nlohmann::json to_json() const;

  /// Atomic write of the JSON rendering, trailing newline included.
  void write(const std::string& path) const;
};

/// FNV-1a (64-bit, hex) over the file's bytes.
std::string file_hash(const std::string& path);

}  // namespace swea
