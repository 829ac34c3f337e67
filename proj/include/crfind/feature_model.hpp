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

// Conjunctions, state-bound features and the CRF model that owns them.

#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <initializer_list>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "crfind/error.hpp"
#include "crfind/observation.hpp"

namespace crfind {

using LabelId = int;

// Source-state sentinels. START is the virtual state before position 0;
// WILDCARD matches any previous state including START.
inline constexpr int kStartState = -1;
inline constexpr int kWildcard = -2;

class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> names) {
    for (auto& n : names) add(n);
  }

  LabelId add(const std::string& name) {
    if (auto it = index_.find(name); it != index_.end()) return it->second;
    const auto id = static_cast<LabelId>(names_.size());
    names_.push_back(name);
    index_.emplace(name, id);
    return id;
  }

  std::optional<LabelId> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  LabelId at(const std::string& name) const {
    auto id = find(name);
    if (!id) throw ValidationError("label '" + name + "' is not in the model's label set");
    return *id;
  }

  const std::string& name(LabelId id) const { return names_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  std::vector<LabelId> encode(std::span<const std::string> labels) const {
    std::vector<LabelId> out;
    out.reserve(labels.size());
    for (const auto& l : labels) out.push_back(at(l));
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, LabelId> index_;
};

// A set of atomic tests, kept sorted and duplicate-free so that equal sets
// compare equal.
class Conjunction {
 public:
  Conjunction() = default;
  explicit Conjunction(std::vector<TestId> tests) : tests_(std::move(tests)) {
    std::sort(tests_.begin(), tests_.end());
    tests_.erase(std::unique(tests_.begin(), tests_.end()), tests_.end());
  }
  Conjunction(std::initializer_list<TestId> tests) : Conjunction(std::vector<TestId>(tests)) {}

  const std::vector<TestId>& tests() const { return tests_; }
  std::size_t size() const { return tests_.size(); }
  bool empty() const { return tests_.empty(); }

  Conjunction conjoin(const Conjunction& other) const {
    std::vector<TestId> merged;
    merged.reserve(tests_.size() + other.tests_.size());
    std::set_union(tests_.begin(), tests_.end(), other.tests_.begin(), other.tests_.end(),
                   std::back_inserter(merged));
    Conjunction out;
    out.tests_ = std::move(merged);
    return out;
  }

  bool fires(const ObservationMatrix& obs, std::size_t t) const {
    auto row = obs.firing_at(t);
    return std::includes(row.begin(), row.end(), tests_.begin(), tests_.end());
  }

  std::string describe(const TestRegistry& registry) const {
    std::string out;
    for (std::size_t i = 0; i < tests_.size(); ++i) {
      if (i) out += " & ";
      out += registry.describe(tests_[i]);
    }
    return out;
  }

  friend bool operator==(const Conjunction&, const Conjunction&) = default;
  friend auto operator<=>(const Conjunction&, const Conjunction&) = default;

 private:
  std::vector<TestId> tests_;
};

struct Feature {
  // Absent for pure-transition features.
  std::optional<Conjunction> conjunction;
  int source = kWildcard;
  LabelId destination = 0;

  bool matches_states(int prev, LabelId cur) const {
    return cur == destination && (source == kWildcard || source == prev);
  }

  // f(prev, cur, o, t) with prev = kStartState at t = 0.
  int value(int prev, LabelId cur, const ObservationMatrix& obs, std::size_t t) const {
    if (!matches_states(prev, cur)) return 0;
    return (!conjunction || conjunction->fires(obs, t)) ? 1 : 0;
  }

  friend bool operator==(const Feature&, const Feature&) = default;
  friend auto operator<=>(const Feature&, const Feature&) = default;
};

enum class ExpansionMode { kNone, kAllSources };

// Turns a selected state-agnostic feature into the features added to the
// model: itself, plus (all-sources mode) one copy per previous state.
inline std::vector<Feature> expand_candidate(const Feature& g, ExpansionMode mode, std::size_t num_labels) {
  if (g.source != kWildcard) throw ValidationError("expand_candidate: feature source must be WILDCARD");
  std::vector<Feature> out{g};
  if (mode == ExpansionMode::kAllSources) {
    for (int src = kStartState; src < static_cast<int>(num_labels); ++src) {
      Feature f = g;
      f.source = src;
      out.push_back(std::move(f));
    }
  }
  return out;
}

class CrfModel {
 public:
  CrfModel() = default;
  CrfModel(LabelSet labels, TestRegistry registry, double variance = 10.0)
      : labels_(std::move(labels)), registry_(std::move(registry)), variance_(variance) {
    if (!(variance_ > 0.0)) throw ValidationError("prior variance must be positive");
  }

  const LabelSet& labels() const { return labels_; }
  std::size_t num_labels() const { return labels_.size(); }
  const TestRegistry& registry() const { return registry_; }
  double variance() const { return variance_; }
  void set_variance(double v) {
    if (!(v > 0.0)) throw ValidationError("prior variance must be positive");
    variance_ = v;
  }

  std::size_t size() const { return features_.size(); }
  const std::vector<Feature>& features() const { return features_; }
  const Feature& feature(std::size_t k) const { return features_.at(k); }

  const std::vector<double>& weights() const { return weights_; }
  void set_weights(std::vector<double> w) {
    if (w.size() != features_.size()) throw ValidationError("weight vector size does not match feature count");
    for (double x : w)
      if (!std::isfinite(x)) throw ValidationError("non-finite weight");
    weights_ = std::move(w);
  }

  bool contains(const Feature& f) const { return feature_ids_.count(f) != 0; }

  // Appends features not already present (in order, dense ids) with the
  // given initial weights. Returns the number actually added.
  std::size_t add_features(std::span<const Feature> added, std::span<const double> initial) {
    if (added.size() != initial.size()) throw ValidationError("add_features: one initial weight per feature");
    for (double w : initial)
      if (!std::isfinite(w)) throw ValidationError("add_features: non-finite initial weight");
    std::size_t count = 0;
    for (std::size_t i = 0; i < added.size(); ++i) {
      const Feature& f = added[i];
      if (f.destination < 0 || static_cast<std::size_t>(f.destination) >= num_labels())
        throw ValidationError("feature destination out of range");
      if (f.source < kWildcard || f.source >= static_cast<int>(num_labels()))
        throw ValidationError("feature source out of range");
      if (f.conjunction) {
        if (f.conjunction->empty()) throw ValidationError("empty conjunction");
        for (TestId k : f.conjunction->tests())
          if (k < 0 || static_cast<std::size_t>(k) >= registry_.size())
            throw ValidationError("conjunction references unknown test " + std::to_string(k));
      }
      if (contains(f)) continue;
      const std::size_t id = features_.size();
      features_.push_back(f);
      weights_.push_back(initial[i]);
      feature_ids_.emplace(f, id);
      ++count;
    }
    return count;
  }

  std::optional<std::size_t> find(const Feature& f) const {
    auto it = feature_ids_.find(f);
    if (it == feature_ids_.end()) return std::nullopt;
    return it->second;
  }

  // Whether some feature with this conjunction and destination exists,
  // whatever its source.
  bool has_conjunction_for(const Conjunction& c, LabelId destination) const {
    // Features order by (conjunction, source, destination); scan the block
    // for this conjunction.
    const Feature first{c, kWildcard - 1, -1};
    for (auto it = feature_ids_.lower_bound(first); it != feature_ids_.end(); ++it) {
      if (it->first.conjunction != std::optional<Conjunction>(c)) break;
      if (it->first.destination == destination) return true;
    }
    return false;
  }

  // Distinct conjunctions used by the model's features, in first-use order.
  std::vector<Conjunction> conjunctions() const {
    std::vector<Conjunction> out;
    std::map<Conjunction, bool> seen;
    for (const auto& f : features_)
      if (f.conjunction && seen.emplace(*f.conjunction, true).second) out.push_back(*f.conjunction);
    return out;
  }

 private:
  LabelSet labels_;
  TestRegistry registry_;
  std::vector<Feature> features_;
  std::vector<double> weights_;
  double variance_ = 10.0;
  std::map<Feature, std::size_t> feature_ids_;
};

inline std::size_t add_features(CrfModel& model, std::span<const Feature> added, std::span<const double> initial) {
  return model.add_features(added, initial);
}

// Every pure-transition feature (source in labels + START, destination in
// labels), weight 0.
inline void seed_edge_features(CrfModel& model) {
  std::vector<Feature> edges;
  for (int src = kStartState; src < static_cast<int>(model.num_labels()); ++src)
    for (LabelId dst = 0; dst < static_cast<LabelId>(model.num_labels()); ++dst)
      edges.push_back(Feature{std::nullopt, src, dst});
  std::vector<double> zeros(edges.size(), 0.0);
  model.add_features(edges, zeros);
}

// Lookup from observations to the conjunction features they switch on.
// Covers features with ids in [from, model.size()).
class FeatureIndex {
 public:
  explicit FeatureIndex(const CrfModel& model, std::size_t from = 0) : model_(&model), from_(from) {
    std::map<Conjunction, std::size_t> slot;
    for (std::size_t k = from; k < model.size(); ++k) {
      const auto& f = model.feature(k);
      if (!f.conjunction) {
        transitions_.push_back(k);
        continue;
      }
      auto [it, inserted] = slot.emplace(*f.conjunction, conjunctions_.size());
      if (inserted) {
        conjunctions_.push_back(*f.conjunction);
        features_of_.emplace_back();
        by_first_[f.conjunction->tests().front()].push_back(it->second);
      }
      features_of_[it->second].push_back(k);
    }
  }

  // Pure-transition features, active at every position.
  const std::vector<std::size_t>& transitions() const { return transitions_; }

  // Appends to active[t] the ids of conjunction features whose conjunction
  // fires at t. Each row stays sorted.
  void collect(const ObservationMatrix& obs, std::vector<std::vector<std::size_t>>& active) const {
    active.resize(obs.length());
    for (std::size_t t = 0; t < obs.length(); ++t) {
      auto& row = active[t];
      const std::size_t before = row.size();
      for (TestId k : obs.firing_at(t)) {
        auto it = by_first_.find(k);
        if (it == by_first_.end()) continue;
        for (std::size_t c : it->second)
          if (conjunctions_[c].fires(obs, t))
            row.insert(row.end(), features_of_[c].begin(), features_of_[c].end());
      }
      std::sort(row.begin() + static_cast<std::ptrdiff_t>(before), row.end());
    }
  }

  std::vector<std::vector<std::size_t>> collect(const ObservationMatrix& obs) const {
    std::vector<std::vector<std::size_t>> active;
    collect(obs, active);
    return active;
  }

 private:
  const CrfModel* model_;
  std::size_t from_;
  std::vector<std::size_t> transitions_;
  std::vector<Conjunction> conjunctions_;
  std::vector<std::vector<std::size_t>> features_of_;
  std::unordered_map<TestId, std::vector<std::size_t>> by_first_;
};

// Per-position transition scores for one sentence:
// score(t, src, dst) = sum_k weight_k * f_k(src, dst, o, t).
// Source slot num_labels stands for START (used at t = 0 only).
class Potentials {
 public:
  Potentials() = default;
  Potentials(std::size_t length, std::size_t num_labels)
      : length_(length), labels_(num_labels), table_(length * (num_labels + 1) * num_labels, 0.0) {}

  std::size_t length() const { return length_; }
  std::size_t num_labels() const { return labels_; }
  std::size_t start_slot() const { return labels_; }

  double& at(std::size_t t, std::size_t src_slot, std::size_t dst) {
    return table_[(t * (labels_ + 1) + src_slot) * labels_ + dst];
  }
  double at(std::size_t t, std::size_t src_slot, std::size_t dst) const {
    return table_[(t * (labels_ + 1) + src_slot) * labels_ + dst];
  }

  // src may be kStartState.
  double score(std::size_t t, int src, LabelId dst) const {
    return at(t, src == kStartState ? labels_ : static_cast<std::size_t>(src), static_cast<std::size_t>(dst));
  }

  // Adds `w` wherever feature f is on at position t.
  void add_feature(std::size_t t, const Feature& f, double w) {
    const auto dst = static_cast<std::size_t>(f.destination);
    if (t == 0) {
      if (f.source == kWildcard || f.source == kStartState) at(0, labels_, dst) += w;
      return;
    }
    if (f.source == kWildcard) {
      for (std::size_t s = 0; s < labels_; ++s) at(t, s, dst) += w;
    } else if (f.source >= 0) {
      at(t, static_cast<std::size_t>(f.source), dst) += w;
    }
  }

 private:
  std::size_t length_ = 0;
  std::size_t labels_ = 0;
  std::vector<double> table_;
};

// Conjunction features active at each position, plus the always-on
// transition features. Rebuilt or extended when the feature set grows.
struct ActiveFeatures {
  std::vector<std::vector<std::size_t>> by_position;
  std::vector<std::size_t> transitions;

  void extend(const FeatureIndex& index, const ObservationMatrix& obs) {
    index.collect(obs, by_position);
    transitions.insert(transitions.end(), index.transitions().begin(), index.transitions().end());
  }
};

inline ActiveFeatures collect_active(const CrfModel& model, const ObservationMatrix& obs) {
  ActiveFeatures a;
  a.extend(FeatureIndex(model), obs);
  return a;
}

inline Potentials compute_potentials(const CrfModel& model, const ActiveFeatures& active, std::span<const double> weights) {
  const std::size_t T = active.by_position.size();
  Potentials p(T, model.num_labels());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k : active.transitions) p.add_feature(t, model.feature(k), weights[k]);
    for (std::size_t k : active.by_position[t]) p.add_feature(t, model.feature(k), weights[k]);
  }
  return p;
}

inline Potentials compute_potentials(const CrfModel& model, const ObservationMatrix& obs) {
  return compute_potentials(model, collect_active(model, obs), model.weights());
}

// Weighted sum of the features on for (src -> dst) at position t.
inline double score_transition(const CrfModel& model, const ObservationMatrix& obs, std::size_t t, int src,
                               LabelId dst) {
  if (t >= obs.length()) throw ValidationError("score_transition: position out of range");
  if ((src == kStartState) != (t == 0)) throw ValidationError("score_transition: START is the source only at t = 0");
  return compute_potentials(model, obs).score(t, src, dst);
}

}  // namespace crfind
