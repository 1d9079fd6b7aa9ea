#pragma once
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "sqz/errors.hpp"

// Run manifests: enough to re-execute a command and check the outputs landed
// byte-identical. Contents are deterministic (no timestamps, no host info),
// so a manifest file itself is stable across reruns.

namespace sqz {

inline uint64_t fnv1a64(const void* data, size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 14695981039346656037ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("digest: cannot open " + path);
  uint64_t h = 14695981039346656037ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const auto n = static_cast<size_t>(in.gcount());
    for (size_t i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!in) break;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct RunManifest {
  std::string tool = "sqzlab";
  std::string version;
  std::string command;
  uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::string> inputs;   // input file name -> digest
  std::map<std::string, std::string> outputs;  // output file name -> digest
  nlohmann::json results = nlohmann::json::object();  // derived scalars worth keeping

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["tool"] = tool;
    j["version"] = version;
    j["command"] = command;
    j["seed"] = seed;
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["results"] = results;
    return j;
  }

  static RunManifest from_json(const nlohmann::json& j) {
    RunManifest m;
    try {
      m.tool = j.at("tool").get<std::string>();
      m.version = j.at("version").get<std::string>();
      m.command = j.at("command").get<std::string>();
      m.seed = j.at("seed").get<uint64_t>();
      m.config = j.at("config");
      if (j.contains("inputs")) m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
      m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
      if (j.contains("results")) m.results = j.at("results");
    } catch (const nlohmann::json::exception& e) {
      throw data_error(std::string("manifest: malformed: ") + e.what());
    }
    return m;
  }
};

inline void write_manifest(const std::string& path, const RunManifest& m) {
  const std::filesystem::path target(path);
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("manifest: cannot open for writing: " + tmp.string());
    out << m.to_json().dump(2) << '\n';
    out.flush();
    if (!out) throw data_error("manifest: write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw data_error("manifest: rename failed: " + target.string() + ": " + ec.message());
}

inline RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("manifest: cannot open " + path);
  try {
    return RunManifest::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw data_error("manifest: " + path + ": " + e.what());
  }
}

}  // namespace sqz
