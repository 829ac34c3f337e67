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

// Exact-match segment scoring (precision / recall / F1) and token accuracy.

#pragma once

#include <cstddef>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "crfind/error.hpp"

namespace crfind {

enum class SegmentationMode {
  // B-X / I-X / O tags. An I-X that does not continue an open X segment
  // opens one (IOB1 input is read as IOB2).
  kIob2,
  // Maximal runs of one identical non-background label form a segment.
  kLabelRuns,
};

struct SegmentationScheme {
  SegmentationMode mode = SegmentationMode::kIob2;
  std::set<std::string> background = {"O", "OTHER"};
};

struct Segment {
  std::string type;
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive

  friend auto operator<=>(const Segment&, const Segment&) = default;
};

inline std::vector<Segment> segments(const std::vector<std::string>& labels, const SegmentationScheme& scheme) {
  std::vector<Segment> out;
  bool open = false;
  Segment cur;
  auto close = [&] {
    if (open) out.push_back(cur);
    open = false;
  };
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const std::string& l = labels[t];
    if (scheme.background.count(l)) {
      close();
      continue;
    }
    if (scheme.mode == SegmentationMode::kLabelRuns) {
      if (open && cur.type == l) {
        cur.end = t;
      } else {
        close();
        cur = Segment{l, t, t};
        open = true;
      }
      continue;
    }
    if (l.size() < 3 || l[1] != '-' || (l[0] != 'B' && l[0] != 'I'))
      throw ValidationError("label '" + l + "' is not a B-X / I-X / O tag");
    const std::string type = l.substr(2);
    if (l[0] == 'I' && open && cur.type == type) {
      cur.end = t;
    } else {
      close();
      cur = Segment{type, t, t};
      open = true;
    }
  }
  close();
  return out;
}

struct SegmentCounts {
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t correct = 0;

  double precision() const { return predicted ? 100.0 * static_cast<double>(correct) / static_cast<double>(predicted) : 0.0; }
  double recall() const { return gold ? 100.0 * static_cast<double>(correct) / static_cast<double>(gold) : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
};

struct ScoreReport {
  std::map<std::string, SegmentCounts> per_label;
  SegmentCounts overall;
  std::size_t tokens = 0;
  std::size_t tokens_correct = 0;

  double token_accuracy() const {
    return tokens ? 100.0 * static_cast<double>(tokens_correct) / static_cast<double>(tokens) : 0.0;
  }
};

inline ScoreReport score(const std::vector<std::vector<std::string>>& gold,
                         const std::vector<std::vector<std::string>>& predicted,
                         const SegmentationScheme& scheme = {}) {
  if (gold.size() != predicted.size())
    throw ValidationError("sentence count mismatch: " + std::to_string(gold.size()) + " gold vs " +
                          std::to_string(predicted.size()) + " predicted");
  ScoreReport rep;
  for (std::size_t j = 0; j < gold.size(); ++j) {
    if (gold[j].size() != predicted[j].size())
      throw ValidationError("sentence " + std::to_string(j + 1) + ": " + std::to_string(gold[j].size()) +
                            " gold labels vs " + std::to_string(predicted[j].size()) + " predicted");
    for (std::size_t t = 0; t < gold[j].size(); ++t) {
      ++rep.tokens;
      rep.tokens_correct += gold[j][t] == predicted[j][t];
    }
    const auto gs = segments(gold[j], scheme);
    const auto ps = segments(predicted[j], scheme);
    const std::set<Segment> gset(gs.begin(), gs.end());
    for (const auto& s : gs) ++rep.per_label[s.type].gold;
    for (const auto& s : ps) {
      ++rep.per_label[s.type].predicted;
      if (gset.count(s)) ++rep.per_label[s.type].correct;
    }
  }
  for (const auto& [_, c] : rep.per_label) {
    rep.overall.gold += c.gold;
    rep.overall.predicted += c.predicted;
    rep.overall.correct += c.correct;
  }
  return rep;
}

// Fixed-width table (one row per label, then Overall) followed by a
// key=value block.
inline void print_report(std::ostream& out, const ScoreReport& rep) {
  char line[160];
  std::snprintf(line, sizeof(line), "%-12s %8s %8s %8s\n", "", "Prec", "Recall", "F1");
  out << line;
  auto row = [&](const std::string& name, const SegmentCounts& c) {
    std::snprintf(line, sizeof(line), "%-12s %8.1f %8.1f %8.1f\n", name.c_str(), c.precision(), c.recall(), c.f1());
    out << line;
  };
  for (const auto& [name, c] : rep.per_label) row(name, c);
  row("Overall", rep.overall);
  out << '\n';
  auto kv = [&](const std::string& prefix, const SegmentCounts& c) {
    out << prefix << ".precision=" << c.precision() << '\n'
        << prefix << ".recall=" << c.recall() << '\n'
        << prefix << ".f1=" << c.f1() << '\n'
        << prefix << ".gold=" << c.gold << '\n'
        << prefix << ".predicted=" << c.predicted << '\n'
        << prefix << ".correct=" << c.correct << '\n';
  };
  out << "tokens=" << rep.tokens << '\n' << "token_accuracy=" << rep.token_accuracy() << '\n';
  kv("overall", rep.overall);
  for (const auto& [name, c] : rep.per_label) kv("label." + name, c);
}

}  // namespace crfind
