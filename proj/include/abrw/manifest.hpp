#pragma once

// Run manifests: a JSON record of the resolved configuration, the seed, and a
// content digest for every file a command produced, sufficient to re-run the
// command and verify bit-identical outputs.

#include <cstdint>
#include <string>
#include <vector>

#include "abrw/config.hpp"

namespace abrw {

struct OutputEntry {
  std::string path;    // relative to the manifest directory
  std::string digest;  // fnv1a-64 of the file bytes, 16 hex digits
};

struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  std::string config_text;  // resolved configuration, round-trippable
  std::vector<OutputEntry> outputs;
  std::vector<std::pair<std::string, std::string>> summary;  // key, value
};

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::string fnv1a64_file_hex(const std::string& path);

void write_manifest(const RunManifest& m, const std::string& path);
RunManifest read_manifest(const std::string& path);

// True when the file's first non-whitespace byte is '{' (manifest rather than
// INI configuration).
bool looks_like_manifest(const std::string& path);

}  // namespace abrw
