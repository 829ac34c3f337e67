/* Copyright 2026 The crfind Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

// key = value run configuration. Unknown keys are errors.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "crfind/corpus.hpp"
#include "crfind/error.hpp"
#include "crfind/evaluation.hpp"
#include "crfind/feature_model.hpp"
#include "crfind/induction.hpp"
#include "crfind/model_io.hpp"
#include "crfind/numeric.hpp"
#include "crfind/observation.hpp"

namespace crfind {

struct RunConfig {
  // Data and outputs. Relative paths are resolved against base_dir.
  std::string train;
  std::string test;
  std::string model;
  std::string report;
  std::string feature_log;
  std::string lexicon_dir;
  std::filesystem::path base_dir;

  ReadOptions reading;
  RegistryOptions tests;
  bool lexicon_case_sensitive = false;

  InductionConfig induction;
  bool edge_features = true;
  double variance = 10.0;

  // Fixed-feature training.
  int train_iterations = 200;
  double gradient_tolerance = 1e-4;
  // none | singletons | patterns
  std::string baseline = "patterns";
  std::vector<std::pair<int, int>> patterns = {{-1, 0}, {0, 1}};

  // Segment scheme for test-set scores.
  SegmentationMode scheme = SegmentationMode::kIob2;

  std::uint64_t seed = 1;
  double holdout = 0.0;
  std::size_t threads = 1;

  std::filesystem::path resolve(const std::string& p) const {
    if (p.empty() || p == "-") return p;
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }

  void set(const std::string& key, const std::string& value);
};

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  auto as_bool = [&]() {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ConfigError("key '" + key + "': expected a boolean, found '" + value + "'");
  };
  auto as_int = [&]() {
    long long v = 0;
    if (!parse_int(value, v)) throw ConfigError("key '" + key + "': expected an integer, found '" + value + "'");
    return v;
  };
  auto as_count = [&]() {
    long long v = as_int();
    if (v < 0) throw ConfigError("key '" + key + "': must be non-negative");
    return static_cast<std::size_t>(v);
  };
  auto as_double = [&]() {
    double v = 0.0;
    if (!parse_double(value, v) || !std::isfinite(v))
      throw ConfigError("key '" + key + "': expected a number, found '" + value + "'");
    return v;
  };
  auto positive = [&](double v) {
    if (!(v > 0.0)) throw ConfigError("key '" + key + "': must be positive");
    return v;
  };

  if (key == "train") train = value;
  else if (key == "test") test = value;
  else if (key == "model") model = value;
  else if (key == "report") report = value;
  else if (key == "feature_log") feature_log = value;
  else if (key == "lexicon_dir") lexicon_dir = value;
  else if (key == "label_column") reading.label_column = static_cast<int>(as_int());
  else if (key == "header_mode") {
    auto m = parse_header_mode(value);
    if (!m) throw ConfigError("key 'header_mode': expected none, first_token or column");
    reading.header_mode = *m;
  } else if (key == "header_column") reading.header_column = static_cast<int>(as_int());
  else if (key == "aux_names") tests.aux_names = detail::split_list(value);
  else if (key == "lexicon_case_sensitive") lexicon_case_sensitive = as_bool();
  else if (key == "tests.words") tests.words = as_bool();
  else if (key == "tests.aux") tests.aux = as_bool();
  else if (key == "tests.shapes") tests.shapes = as_bool();
  else if (key == "tests.lexicons") tests.lexicons = as_bool();
  else if (key == "tests.first_mention") tests.first_mention = as_bool();
  else if (key == "tests.headers") tests.headers = as_bool();
  else if (key == "offsets") {
    tests.offsets.clear();
    for (const auto& o : detail::split_list(value)) {
      long long v = 0;
      if (!parse_int(o, v)) throw ConfigError("key 'offsets': bad offset '" + o + "'");
      tests.offsets.push_back(static_cast<int>(v));
    }
    if (tests.offsets.empty()) throw ConfigError("key 'offsets': at least one offset is required");
  } else if (key == "min_word_count") tests.min_word_count = as_count();
  else if (key == "variance") variance = positive(as_double());
  else if (key == "gain_threshold") induction.gain_threshold = positive(as_double());
  else if (key == "max_features_per_round") induction.max_features_per_round = as_count();
  else if (key == "candidate_pool") {
    induction.pool_size = as_count();
    if (induction.pool_size == 0) throw ConfigError("key 'candidate_pool': must be positive");
  } else if (key == "lbfgs_iterations") induction.lbfgs_iterations = static_cast<int>(as_count());
  else if (key == "lbfgs_history") {
    induction.lbfgs_history = static_cast<int>(as_count());
    if (induction.lbfgs_history == 0) throw ConfigError("key 'lbfgs_history': must be positive");
  } else if (key == "max_rounds") induction.max_rounds = static_cast<int>(as_count());
  else if (key == "margin") {
    if (value == "none" || value.empty()) induction.margin.reset();
    else {
      double m = as_double();
      if (m < 0.0) throw ConfigError("key 'margin': must be non-negative");
      induction.margin = m;
    }
  } else if (key == "expansion") {
    if (value == "none") induction.expansion = ExpansionMode::kNone;
    else if (value == "all-sources") induction.expansion = ExpansionMode::kAllSources;
    else throw ConfigError("key 'expansion': expected none or all-sources");
  } else if (key == "edge_features") edge_features = as_bool();
  else if (key == "train_iterations") train_iterations = static_cast<int>(as_count());
  else if (key == "gradient_tolerance") gradient_tolerance = positive(as_double());
  else if (key == "baseline") {
    if (value != "none" && value != "singletons" && value != "patterns")
      throw ConfigError("key 'baseline': expected none, singletons or patterns");
    baseline = value;
  } else if (key == "patterns") {
    patterns.clear();
    for (const auto& p : detail::split_list(value)) {
      auto colon = p.find(':');
      long long a = 0, b = 0;
      if (colon == std::string::npos || !parse_int(p.substr(0, colon), a) || !parse_int(p.substr(colon + 1), b))
        throw ConfigError("key 'patterns': expected offset pairs like 0:1, found '" + p + "'");
      patterns.emplace_back(static_cast<int>(a), static_cast<int>(b));
    }
  } else if (key == "scheme") {
    if (value == "iob2") scheme = SegmentationMode::kIob2;
    else if (value == "runs") scheme = SegmentationMode::kLabelRuns;
    else throw ConfigError("key 'scheme': expected iob2 or runs");
  } else if (key == "seed") seed = static_cast<std::uint64_t>(as_count());
  else if (key == "holdout") {
    holdout = as_double();
    if (holdout < 0.0 || holdout >= 1.0) throw ConfigError("key 'holdout': must be in [0, 1)");
  } else if (key == "threads") {
    threads = std::max<std::size_t>(1, as_count());
  } else {
    throw ConfigError("unknown configuration key '" + key + "'");
  }
}

// Parses "key = value" lines; '#' starts a comment line.
inline RunConfig parse_config(std::istream& in, const std::string& source = "<config>") {
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    try {
      cfg.set(detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  RunConfig cfg = parse_config(in, path.string());
  cfg.base_dir = path.parent_path();
  return cfg;
}

// Applies "key=value" overrides (command-line flags).
inline void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    cfg.set(detail::trim(o.substr(0, eq)), detail::trim(o.substr(eq + 1)));
  }
}

}  // namespace crfind
