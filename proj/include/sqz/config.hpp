#pragma once
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sqz/errors.hpp"

// JSON config access with key-path error messages, plus dotted-key overrides
// for the command line (--set cavity.kappa_e_hz=1.5e8).

namespace sqz {

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("config: cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw config_error("config: " + path + ": " + e.what());
  }
}

class ConfigView {
 public:
  explicit ConfigView(const nlohmann::json& j, std::string path = "")
      : j_(&j), path_(std::move(path)) {
    if (!j.is_object()) throw config_error("config: " + label() + " must be an object");
  }

  bool has(const std::string& key) const { return j_->contains(key); }

  double number(const std::string& key) const {
    const nlohmann::json& v = require(key);
    if (!v.is_number()) throw config_error("config: " + join(key) + " must be a number");
    return v.get<double>();
  }

  double number_or(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }

  std::string text(const std::string& key) const {
    const nlohmann::json& v = require(key);
    if (!v.is_string()) throw config_error("config: " + join(key) + " must be a string");
    return v.get<std::string>();
  }

  std::string text_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? text(key) : fallback;
  }

  bool flag_or(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const nlohmann::json& v = (*j_)[key];
    if (!v.is_boolean()) throw config_error("config: " + join(key) + " must be a boolean");
    return v.get<bool>();
  }

  std::vector<double> numbers(const std::string& key) const {
    const nlohmann::json& v = require(key);
    if (!v.is_array()) throw config_error("config: " + join(key) + " must be an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& e : v) {
      if (!e.is_number()) throw config_error("config: " + join(key) + " must hold numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  ConfigView section(const std::string& key) const {
    const nlohmann::json& v = require(key);
    if (!v.is_object()) throw config_error("config: " + join(key) + " must be an object");
    return ConfigView(v, join(key));
  }

  const nlohmann::json& raw() const { return *j_; }

 private:
  const nlohmann::json& require(const std::string& key) const {
    if (!j_->contains(key)) throw config_error("config: missing key " + join(key));
    return (*j_)[key];
  }
  std::string join(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  std::string label() const { return path_.empty() ? std::string("root") : path_; }

  const nlohmann::json* j_;
  std::string path_;
};

// Apply one "dotted.key=value" override. The value is parsed as JSON when it
// parses, otherwise taken as a string.
inline void apply_override(nlohmann::json& root, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw config_error("override must look like key.path=value: " + assignment);
  const std::string keypath = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  nlohmann::json* node = &root;
  size_t start = 0;
  while (true) {
    const size_t dot = keypath.find('.', start);
    const std::string key = keypath.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw config_error("override has an empty key segment: " + assignment);
    if (dot == std::string::npos) {
      nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
      return;
    }
    if (!node->contains(key) || !(*node)[key].is_object()) (*node)[key] = nlohmann::json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace sqz
