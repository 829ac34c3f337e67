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

// Fixed-pattern feature sets, the non-induced comparison point.

#pragma once

#include <set>
#include <span>
#include <utility>
#include <vector>

#include "crfind/feature_model.hpp"
#include "crfind/training.hpp"

namespace crfind {

struct BaselineOptions {
  // Every test seen firing in the data, paired with every destination.
  bool singletons = true;
  // (offset a, offset b): every pair of a test at offset a and a test at
  // offset b that fire together somewhere in the data.
  std::vector<std::pair<int, int>> patterns;
};

inline std::vector<Feature> baseline_features(const CrfModel& model, std::span<const Instance> data,
                                              const BaselineOptions& opts) {
  const auto& reg = model.registry();
  std::set<Conjunction> conjs;
  for (const auto& in : data) {
    for (std::size_t t = 0; t < in.obs.length(); ++t) {
      auto row = in.obs.firing_at(t);
      if (opts.singletons)
        for (TestId k : row) conjs.insert(Conjunction{k});
      for (const auto& [da, db] : opts.patterns) {
        for (TestId a : row) {
          if (reg[a].offset != da || reg[a].kind == TestKind::kFirstMention) continue;
          for (TestId b : row) {
            if (a == b || reg[b].offset != db || reg[b].kind == TestKind::kFirstMention) continue;
            conjs.insert(Conjunction{a, b});
          }
        }
      }
    }
  }
  std::vector<Feature> out;
  out.reserve(conjs.size() * model.num_labels());
  for (const auto& c : conjs)
    for (LabelId d = 0; d < static_cast<LabelId>(model.num_labels()); ++d) out.push_back(Feature{c, kWildcard, d});
  return out;
}

}  // namespace crfind
