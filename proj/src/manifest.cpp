#include "swea/manifest.hpp"

#include "swea/binio.hpp"

namespace swea {

std::string file_hash(const std::string& path) {
  return fnv1a_hex(read_file_bytes(path));
}

void RunManifest::add_input(const std::string& path) {
  inputs[path] = file_hash(path);
}

void RunManifest::add_output(const std::string& path) {
  outputs[path] = file_hash(path);
}

nlohmann::json RunManifest::to_json() const {
  return {{"tool_version", tool_version},
          {"command", command},
          {"argv", argv},
          {"config", config},
          {"inputs", inputs},
          {"outputs", outputs}};
}

void RunManifest::write(const std::string& path) const {
  atomic_write_file(path, to_json().dump(2) + "\n");
}

}  // namespace swea
