#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "fsr/errors.hpp"
#include "fsr/metrics.hpp"
#include "fsr/model.hpp"
#include "fsr/training.hpp"

namespace fsr {

/// Declarative run description for `fsr train`.
///
/// Grammar: one `key = value` per line; `#` starts a comment; blank lines are
/// ignored; keys are unique. Relative paths resolve against the directory of
/// the config file. Keys not listed in kRunConfigKeys are rejected.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  std::filesystem::path checkpoint;  // defaults to out_dir / "model.ckpt"
};

inline const std::set<std::string>& run_config_keys() {
  static const std::set<std::string> keys = {
      "scale",        "depth",        "base_channels", "attention",  "zero_init_final", "normalization",
      "batch_size",   "learning_rate", "epochs",       "seed",       "wfe_alpha",       "adam_beta1",
      "adam_beta2",   "adam_eps",     "val_interval",  "val_subset", "max_steps",       "val_ssim",
      "data_dir",     "out_dir",      "checkpoint"};
  return keys;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename V>
V parse_value(const std::string& key, const std::string& text) {
  std::istringstream ss(text);
  V v{};
  ss >> v;
  std::string rest;
  if (!ss || (ss >> rest)) throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + text + "'");
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {}) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (!run_config_keys().contains(key)) {
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (!kv.emplace(key, value).second) {
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }

  RunConfig rc;
  auto path_of = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  for (const auto& [key, v] : kv) {
    using detail::parse_bool;
    using detail::parse_value;
    if (key == "scale") {
      rc.model.scale = rc.train.scale = parse_value<int>(key, v);
    } else if (key == "depth") {
      rc.model.depth = parse_value<int>(key, v);
    } else if (key == "base_channels") {
      rc.model.base_channels = parse_value<int>(key, v);
    } else if (key == "attention") {
      rc.model.attention_enabled = parse_bool(key, v);
    } else if (key == "zero_init_final") {
      rc.model.zero_init_final = parse_bool(key, v);
    } else if (key == "normalization") {
      rc.model.normalization = parse_normalization(v);
    } else if (key == "batch_size") {
      rc.train.batch_size = parse_value<int>(key, v);
    } else if (key == "learning_rate") {
      rc.train.learning_rate = parse_value<double>(key, v);
    } else if (key == "epochs") {
      rc.train.epochs = parse_value<int>(key, v);
      if (rc.train.epochs < 0) throw ConfigError("config key 'epochs' must be >= 0");
    } else if (key == "seed") {
      rc.train.seed = parse_value<std::uint64_t>(key, v);
    } else if (key == "wfe_alpha") {
      rc.train.wfe_alpha = parse_value<double>(key, v);
    } else if (key == "adam_beta1") {
      rc.train.adam_beta1 = parse_value<double>(key, v);
    } else if (key == "adam_beta2") {
      rc.train.adam_beta2 = parse_value<double>(key, v);
    } else if (key == "adam_eps") {
      rc.train.adam_eps = parse_value<double>(key, v);
    } else if (key == "val_interval") {
      rc.train.val_interval = parse_value<int>(key, v);
    } else if (key == "val_subset") {
      rc.train.val_subset = parse_value<int>(key, v);
    } else if (key == "max_steps") {
      rc.train.max_steps = parse_value<std::int64_t>(key, v);
    } else if (key == "val_ssim") {
      try {
        rc.train.val_ssim = parse_ssim_mode(v);
      } catch (const ParameterError& e) {
        throw ConfigError(std::string("config key 'val_ssim': ") + e.what());
      }
    } else if (key == "data_dir") {
      rc.data_dir = path_of(v);
    } else if (key == "out_dir") {
      rc.out_dir = path_of(v);
    } else if (key == "checkpoint") {
      rc.checkpoint = path_of(v);
    }
  }
  if (!kv.contains("data_dir")) throw ConfigError("config is missing required path 'data_dir'");
  if (!kv.contains("out_dir")) throw ConfigError("config is missing required path 'out_dir'");
  if (rc.checkpoint.empty()) rc.checkpoint = rc.out_dir / "model.ckpt";
  rc.model.validate();
  rc.train.validate();
  return rc;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

}  // namespace fsr
