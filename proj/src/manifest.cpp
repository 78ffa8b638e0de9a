#include "abrw/manifest.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "abrw/errors.hpp"

namespace abrw {

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string fnv1a64_file_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("digest: cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    const auto got = static_cast<std::size_t>(in.gcount());
    for (std::size_t i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
    if (!in) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

void write_manifest(const RunManifest& m, const std::string& path) {
  nlohmann::json j;
  j["format"] = "abrw-manifest-v1";
  j["command"] = m.command;
  j["seed"] = m.seed;
  j["config"] = m.config_text;
  j["outputs"] = nlohmann::json::array();
  for (const auto& o : m.outputs)
    j["outputs"].push_back({{"path", o.path}, {"digest", o.digest}});
  j["summary"] = nlohmann::json::object();
  for (const auto& [k, v] : m.summary) j["summary"][k] = v;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("manifest: cannot open " + path);
  out << j.dump(2) << "\n";
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("manifest: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("manifest: parse failure: ") + e.what());
  }
  if (j.value("format", "") != "abrw-manifest-v1")
    throw ConfigError("manifest: unrecognized format field");
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config_text = j.at("config").get<std::string>();
  for (const auto& o : j.at("outputs"))
    m.outputs.push_back({o.at("path").get<std::string>(),
                         o.at("digest").get<std::string>()});
  if (j.contains("summary"))
    for (const auto& [k, v] : j.at("summary").items())
      m.summary.emplace_back(k, v.get<std::string>());
  return m;
}

bool looks_like_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) return false;
  char c = 0;
  while (in.get(c)) {
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') continue;
    return c == '{';
  }
  return false;
}

}  // namespace abrw
