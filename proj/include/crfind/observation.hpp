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

// Atomic observational tests and their evaluation over sentences.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "crfind/corpus.hpp"
#include "crfind/error.hpp"

namespace crfind {

using TestId = int;

// ---------------------------------------------------------------------------
// Token shapes
//
// A = [A-Z], a = [a-z], D = [0-9]; every pattern must match the whole token.

struct ShapePattern {
  std::string_view name;
  std::string_view regex;
};

inline constexpr std::array<ShapePattern, 16> kShapePatterns = {{
    {"A", "[A-Z]"},
    {"A+", "[A-Z]+"},
    {"Aa+", "[A-Z][a-z]+"},
    {"Aa+Aa*", "[A-Z][a-z]+[A-Z][a-z]*"},
    {"A.", "[A-Z]."},
    {"D+", "[0-9]+"},
    {".*D.*", ".*[0-9].*"},
    {"a+", "[a-z]+"},
    {"A\\.", "[A-Z]\\."},
    {".*-.*", ".*-.*"},
    {".*\\..*", ".*\\..*"},
    {"P+", "[^A-Za-z0-9]+"},
    {"DD", "[0-9][0-9]"},
    {"DDDD", "[0-9][0-9][0-9][0-9]"},
    {"alnum-mix", "(?=.*[A-Za-z])(?=.*[0-9])[A-Za-z0-9]+"},
    {"roman", "[IVXLCDM]+"},
}};

namespace detail {

inline const std::vector<std::regex>& compiled_shapes() {
  static const std::vector<std::regex> compiled = [] {
    std::vector<std::regex> out;
    for (const auto& p : kShapePatterns)
      out.emplace_back(std::string(p.regex), std::regex::ECMAScript | std::regex::optimize);
    return out;
  }();
  return compiled;
}

}  // namespace detail

inline std::optional<std::size_t> find_shape(std::string_view name) {
  for (std::size_t i = 0; i < kShapePatterns.size(); ++i)
    if (kShapePatterns[i].name == name) return i;
  return std::nullopt;
}

inline bool shape_regex(std::size_t shape, std::string_view token) {
  const auto& re = detail::compiled_shapes().at(shape);
  return std::regex_match(token.begin(), token.end(), re);
}

inline bool shape_regex(std::string_view shape, std::string_view token) {
  auto idx = find_shape(shape);
  if (!idx) throw ConfigError("unknown shape pattern '" + std::string(shape) + "'");
  return shape_regex(*idx, token);
}

inline bool is_capitalized(std::string_view token) {
  return !token.empty() && token.front() >= 'A' && token.front() <= 'Z';
}

// ---------------------------------------------------------------------------
// Lexicons

class LexiconStore {
 public:
  explicit LexiconStore(bool case_sensitive = false) : case_sensitive_(case_sensitive) {}

  bool case_sensitive() const { return case_sensitive_; }

  void add(const std::string& name, std::span<const std::string> words) {
    auto& set = lexicons_[name];
    for (const auto& w : words) set.insert(normalize(w));
  }

  // One entry per line; blank lines and '#' comment lines are skipped.
  void load(const std::string& name, std::istream& in) {
    auto& set = lexicons_[name];
    std::string line;
    while (std::getline(in, line)) {
      auto b = line.find_first_not_of(" \t\r");
      if (b == std::string::npos || line[b] == '#') continue;
      auto e = line.find_last_not_of(" \t\r");
      set.insert(normalize(line.substr(b, e - b + 1)));
    }
  }

  void load_file(const std::string& name, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open lexicon file '" + path.string() + "'");
    load(name, in);
  }

  // Loads every regular file in `dir`; the lexicon name is the file stem.
  void load_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
      throw ConfigError("lexicon directory '" + dir.string() + "' does not exist");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) load_file(f.stem().string(), f);
  }

  bool has(const std::string& name) const { return lexicons_.count(name) != 0; }

  bool contains(const std::string& name, std::string_view word) const {
    auto it = lexicons_.find(name);
    if (it == lexicons_.end()) return false;
    return it->second.count(normalize(word)) != 0;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : lexicons_) out.push_back(name);
    return out;
  }

  // Sorted entries, for serialization.
  std::vector<std::string> entries(const std::string& name) const {
    auto it = lexicons_.find(name);
    if (it == lexicons_.end()) return {};
    std::vector<std::string> out(it->second.begin(), it->second.end());
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::string normalize(std::string_view w) const {
    std::string s(w);
    if (!case_sensitive_)
      std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
  }

  bool case_sensitive_;
  std::map<std::string, std::unordered_set<std::string>> lexicons_;
};

// ---------------------------------------------------------------------------
// Atomic tests

enum class TestKind { kWord, kAux, kShape, kLexicon, kFirstMention, kHeader };

inline std::string_view kind_name(TestKind kind) {
  switch (kind) {
    case TestKind::kWord: return "word";
    case TestKind::kAux: return "aux";
    case TestKind::kShape: return "shape";
    case TestKind::kLexicon: return "lexicon";
    case TestKind::kFirstMention: return "firstmention";
    case TestKind::kHeader: return "header";
  }
  return "?";
}

inline std::optional<TestKind> parse_kind(std::string_view name) {
  for (auto k : {TestKind::kWord, TestKind::kAux, TestKind::kShape, TestKind::kLexicon,
                 TestKind::kFirstMention, TestKind::kHeader})
    if (kind_name(k) == name) return k;
  return std::nullopt;
}

struct AtomicTest {
  TestKind kind = TestKind::kWord;
  // Word, aux value, shape name, lexicon name or header value.
  std::string value;
  int aux_column = 0;
  // First-mention tests: the test evaluated at the word's first mention.
  TestId wrapped = -1;
  // The test reads position t + offset.
  int offset = 0;

  friend bool operator==(const AtomicTest&, const AtomicTest&) = default;
};

class TestRegistry {
 public:
  std::size_t size() const { return tests_.size(); }
  const AtomicTest& operator[](TestId id) const { return tests_.at(static_cast<std::size_t>(id)); }
  const std::vector<AtomicTest>& tests() const { return tests_; }

  // Appends a test and returns its id; an identical test returns the
  // existing id.
  TestId add(const AtomicTest& test) {
    auto k = key(test);
    if (auto it = ids_.find(k); it != ids_.end()) return it->second;
    if (test.kind == TestKind::kShape && !find_shape(test.value))
      throw ConfigError("unknown shape pattern '" + test.value + "'");
    if (test.kind == TestKind::kFirstMention) {
      if (test.wrapped < 0 || static_cast<std::size_t>(test.wrapped) >= tests_.size())
        throw ConfigError("first-mention test wraps unknown test id " + std::to_string(test.wrapped));
      if (tests_[static_cast<std::size_t>(test.wrapped)].kind == TestKind::kFirstMention)
        throw ConfigError("first-mention tests cannot wrap other first-mention tests");
    }
    const TestId id = static_cast<TestId>(tests_.size());
    tests_.push_back(test);
    ids_.emplace(std::move(k), id);
    return id;
  }

  std::optional<TestId> find(const AtomicTest& test) const {
    auto it = ids_.find(key(test));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  // Display names for auxiliary columns ("POS", "chunk"); defaults to auxN.
  void set_aux_names(std::vector<std::string> names) { aux_names_ = std::move(names); }
  const std::vector<std::string>& aux_names() const { return aux_names_; }

  std::string aux_name(int column) const {
    if (column >= 0 && static_cast<std::size_t>(column) < aux_names_.size())
      return aux_names_[static_cast<std::size_t>(column)];
    return "aux" + std::to_string(column + 1);
  }

  // The test's predicate without its position, e.g. "word=the".
  std::string predicate(TestId id) const {
    const auto& t = (*this)[id];
    switch (t.kind) {
      case TestKind::kWord: return "word=" + t.value;
      case TestKind::kAux: return aux_name(t.aux_column) + "=" + t.value;
      case TestKind::kShape: return "shape=" + t.value;
      case TestKind::kLexicon: return "lexicon=" + t.value;
      case TestKind::kHeader: return "header=" + t.value;
      case TestKind::kFirstMention: return predicate(t.wrapped);
    }
    return {};
  }

  // Human-readable rendering with a time-shift subscript:
  // "word=the (o_t)", "word=in (o_{t+2})", "shape=Aa+ (firstmention_{t+1})".
  std::string describe(TestId id) const {
    const auto& t = (*this)[id];
    if (t.kind == TestKind::kFirstMention) {
      std::string s = predicate(id) + " (firstmention" + subscript((*this)[t.wrapped].offset) + ")";
      if (t.offset != 0) s += "@" + subscript(t.offset).substr(1);
      return s;
    }
    return predicate(id) + " (o" + subscript(t.offset) + ")";
  }

 private:
  static std::string subscript(int offset) {
    if (offset == 0) return "_t";
    return std::string("_{t") + (offset > 0 ? "+" : "-") + std::to_string(offset > 0 ? offset : -offset) + "}";
  }

  static std::string key(const AtomicTest& t) {
    return std::to_string(static_cast<int>(t.kind)) + '\x1f' + std::to_string(t.aux_column) + '\x1f' +
           std::to_string(t.wrapped) + '\x1f' + std::to_string(t.offset) + '\x1f' + t.value;
  }

  std::vector<AtomicTest> tests_;
  std::unordered_map<std::string, TestId> ids_;
  std::vector<std::string> aux_names_;
};

// ---------------------------------------------------------------------------
// Observation matrices

// Test results for one sentence, stored as the sorted list of firing test
// ids at each position.
class ObservationMatrix {
 public:
  ObservationMatrix() = default;
  ObservationMatrix(std::size_t test_count, std::vector<std::vector<TestId>> firing)
      : test_count_(test_count), firing_(std::move(firing)) {}

  std::size_t length() const { return firing_.size(); }
  std::size_t test_count() const { return test_count_; }

  std::span<const TestId> firing_at(std::size_t t) const { return firing_.at(t); }

  bool fires(std::size_t t, TestId k) const {
    const auto& row = firing_.at(t);
    return std::binary_search(row.begin(), row.end(), k);
  }

  // Dense T x n view, materialized on demand.
  std::vector<std::vector<bool>> dense() const {
    std::vector<std::vector<bool>> bits(length(), std::vector<bool>(test_count_, false));
    for (std::size_t t = 0; t < length(); ++t)
      for (TestId k : firing_[t]) bits[t][static_cast<std::size_t>(k)] = true;
    return bits;
  }

  friend bool operator==(const ObservationMatrix&, const ObservationMatrix&) = default;

 private:
  std::size_t test_count_ = 0;
  std::vector<std::vector<TestId>> firing_;
};

// First occurrence of each word in the current document, with the set of
// (non first-mention) tests that fired there.
class MentionHistory {
 public:
  void reset() { first_.clear(); }
  const std::vector<TestId>* lookup(const std::string& word) const {
    auto it = first_.find(word);
    return it == first_.end() ? nullptr : &it->second;
  }
  void record(const std::string& word, std::vector<TestId> fired) { first_.try_emplace(word, std::move(fired)); }

 private:
  std::unordered_map<std::string, std::vector<TestId>> first_;
};

// Evaluates every registered test at every position of a sentence. The
// history carries first mentions from earlier sentences of the same
// document and is updated with this sentence's words.
class TestEvaluator {
 public:
  TestEvaluator(const TestRegistry& registry, const LexiconStore& lexicons)
      : registry_(registry), lexicons_(lexicons) {
    for (TestId id = 0; id < static_cast<TestId>(registry.size()); ++id) {
      const auto& t = registry[id];
      switch (t.kind) {
        case TestKind::kWord: by_word_[t.value].push_back(id); break;
        case TestKind::kAux: by_aux_[{t.aux_column, t.value}].push_back(id); break;
        case TestKind::kShape: by_shape_[*find_shape(t.value)].push_back(id); break;
        case TestKind::kLexicon:
          if (!lexicons.has(t.value)) throw ConfigError("unknown lexicon '" + t.value + "'");
          by_lexicon_[t.value].push_back(id);
          break;
        case TestKind::kHeader: by_header_[t.value].push_back(id); break;
        case TestKind::kFirstMention: by_wrapped_[t.wrapped].push_back(id); break;
      }
    }
  }

  ObservationMatrix evaluate(const Sentence& s, MentionHistory& history) const {
    const std::size_t T = s.size();
    std::vector<std::vector<TestId>> fires(T);
    auto emit = [&](std::size_t u, std::span<const TestId> ids) {
      for (TestId k : ids) {
        const long t = static_cast<long>(u) - registry_[k].offset;
        if (t >= 0 && t < static_cast<long>(T)) fires[static_cast<std::size_t>(t)].push_back(k);
      }
    };

    for (std::size_t u = 0; u < T; ++u) {
      const std::string& tok = s.tokens[u];
      if (auto it = by_word_.find(tok); it != by_word_.end()) emit(u, it->second);
      for (std::size_t c = 0; c < s.aux[u].size(); ++c) {
        auto it = by_aux_.find({static_cast<int>(c), s.aux[u][c]});
        if (it != by_aux_.end()) emit(u, it->second);
      }
      for (const auto& [shape, ids] : by_shape_)
        if (shape_regex(shape, tok)) emit(u, ids);
      for (const auto& [name, ids] : by_lexicon_)
        if (lexicons_.contains(name, tok)) emit(u, ids);
      if (s.doc_header)
        if (auto it = by_header_.find(*s.doc_header); it != by_header_.end()) emit(u, it->second);
    }
    for (auto& row : fires) std::sort(row.begin(), row.end());

    if (!by_wrapped_.empty()) {
      std::vector<std::vector<TestId>> mention(T);
      auto emit_mention = [&](std::size_t u, std::span<const TestId> ids) {
        for (TestId k : ids) {
          const long t = static_cast<long>(u) - registry_[k].offset;
          if (t >= 0 && t < static_cast<long>(T)) mention[static_cast<std::size_t>(t)].push_back(k);
        }
      };
      for (std::size_t u = 0; u < T; ++u) {
        const std::string& tok = s.tokens[u];
        if (const auto* first = history.lookup(tok)) {
          if (is_capitalized(tok))
            for (TestId w : *first)
              if (auto it = by_wrapped_.find(w); it != by_wrapped_.end()) emit_mention(u, it->second);
        } else {
          history.record(tok, fires[u]);
        }
      }
      for (std::size_t t = 0; t < T; ++t) {
        if (mention[t].empty()) continue;
        fires[t].insert(fires[t].end(), mention[t].begin(), mention[t].end());
        std::sort(fires[t].begin(), fires[t].end());
      }
    }
    for (auto& row : fires) row.erase(std::unique(row.begin(), row.end()), row.end());
    return ObservationMatrix(registry_.size(), std::move(fires));
  }

 private:
  const TestRegistry& registry_;
  const LexiconStore& lexicons_;
  std::unordered_map<std::string, std::vector<TestId>> by_word_;
  std::map<std::pair<int, std::string>, std::vector<TestId>> by_aux_;
  std::map<std::size_t, std::vector<TestId>> by_shape_;
  std::map<std::string, std::vector<TestId>> by_lexicon_;
  std::unordered_map<std::string, std::vector<TestId>> by_header_;
  std::unordered_map<TestId, std::vector<TestId>> by_wrapped_;
};

// Evaluates the registry on a single sentence, treated as its own document.
inline ObservationMatrix apply_tests(const Sentence& sentence, const TestRegistry& registry,
                                     const LexiconStore& lexicons) {
  MentionHistory history;
  return TestEvaluator(registry, lexicons).evaluate(sentence, history);
}

// Evaluates the registry over a corpus in order; first-mention lookups are
// scoped to the document.
inline std::vector<ObservationMatrix> apply_tests(std::span<const Sentence> sentences, const TestRegistry& registry,
                                                  const LexiconStore& lexicons) {
  TestEvaluator evaluator(registry, lexicons);
  MentionHistory history;
  std::vector<ObservationMatrix> out;
  out.reserve(sentences.size());
  std::optional<std::size_t> doc;
  for (const auto& s : sentences) {
    if (doc != s.document) history.reset();
    doc = s.document;
    out.push_back(evaluator.evaluate(s, history));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Registry construction from training data

struct RegistryOptions {
  bool words = true;
  bool aux = true;
  bool shapes = true;
  bool lexicons = true;
  bool first_mention = false;
  bool headers = true;
  std::vector<int> offsets = {-2, -1, 0, 1, 2};
  std::size_t min_word_count = 1;
  std::vector<std::string> aux_names;
};

// Builds the atomic test set: base tests for every observed word, aux value
// and header, all shape patterns and all lexicons, each replicated at every
// offset in the window. First-mention tests wrap every other test.
inline TestRegistry build_registry(std::span<const Sentence> sentences, const RegistryOptions& opts,
                                   const LexiconStore& lexicons) {
  std::map<std::string, std::size_t> words;
  std::set<std::pair<int, std::string>> aux_values;
  std::set<std::string> headers;
  for (const auto& s : sentences) {
    for (std::size_t t = 0; t < s.size(); ++t) {
      ++words[s.tokens[t]];
      for (std::size_t c = 0; c < s.aux[t].size(); ++c) aux_values.emplace(static_cast<int>(c), s.aux[t][c]);
    }
    if (s.doc_header) headers.insert(*s.doc_header);
  }

  std::vector<AtomicTest> base;
  if (opts.words)
    for (const auto& [w, n] : words)
      if (n >= opts.min_word_count) base.push_back({TestKind::kWord, w});
  if (opts.aux)
    for (const auto& [c, v] : aux_values) base.push_back({TestKind::kAux, v, c});
  if (opts.shapes)
    for (const auto& p : kShapePatterns) base.push_back({TestKind::kShape, std::string(p.name)});
  if (opts.lexicons)
    for (const auto& name : lexicons.names()) base.push_back({TestKind::kLexicon, name});
  if (opts.headers)
    for (const auto& h : headers) base.push_back({TestKind::kHeader, h});

  TestRegistry registry;
  registry.set_aux_names(opts.aux_names);
  std::vector<TestId> plain;
  for (const auto& b : base) {
    for (int off : opts.offsets) {
      AtomicTest t = b;
      t.offset = off;
      plain.push_back(registry.add(t));
    }
  }
  if (opts.first_mention) {
    for (TestId w : plain) {
      // Headers are document-wide, copying them is a no-op.
      if (registry[w].kind == TestKind::kHeader) continue;
      AtomicTest t;
      t.kind = TestKind::kFirstMention;
      t.wrapped = w;
      registry.add(t);
    }
  }
  return registry;
}

}  // namespace crfind
