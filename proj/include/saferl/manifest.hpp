#pragma once

#include <map>
#include <string>

namespace saferl::io {

// FNV-1a 64-bit content digest, hex encoded.
std::string fnv1a_hex(const std::string& bytes);
std::string file_digest(const std::string& path);

// Every command writes one of these next to its artifacts: what ran, under
// which config, and the digests of everything read and written.
struct Manifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // path -> digest
  std::map<std::string, std::string> outputs;  // path -> digest

  void add_input(const std::string& path) { inputs[path] = file_digest(path); }
  void add_output(const std::string& path) { outputs[path] = file_digest(path); }
  void write(const std::string& path) const;
};

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace saferl::io
