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

// Text model files.
//
//   crf-model v1
//   labels <n>              one label per line
//   variance <sigma^2>
//   lexicon_case <sensitive|insensitive>
//   header_mode <none|first_token|column> <column>
//   aux_names <n>           one name per line
//   tests <n>               id kind offset aux_column wrapped value (tabs)
//   lexicons <n>            "<name>\t<count>" then one entry per line
//   conjunctions <n>        id <tab> space-separated sorted test ids
//   features <n>            id conj|_ source|*|^ destination weight (tabs)
//   end
//
// Source "*" is WILDCARD, "^" is START. Weights are written as the shortest
// decimal that parses back to the same double.

#pragma once

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "crfind/corpus.hpp"
#include "crfind/error.hpp"
#include "crfind/feature_model.hpp"
#include "crfind/numeric.hpp"
#include "crfind/observation.hpp"

namespace crfind {

inline constexpr std::string_view kModelMagic = "crf-model v1";

// Everything needed to tag new text: the model, the lexicons its tests
// read, and how document headers are derived.
struct ModelBundle {
  CrfModel model;
  LexiconStore lexicons;
  HeaderMode header_mode = HeaderMode::kNone;
  int header_column = 1;
};

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line, std::size_t max_fields) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (out.size() + 1 < max_fields) {
    auto tab = line.find('\t', pos);
    if (tab == std::string::npos) break;
    out.push_back(line.substr(pos, tab - pos));
    pos = tab + 1;
  }
  out.push_back(line.substr(pos));
  return out;
}

inline std::string_view header_mode_name(HeaderMode m) {
  switch (m) {
    case HeaderMode::kNone: return "none";
    case HeaderMode::kFirstToken: return "first_token";
    case HeaderMode::kColumn: return "column";
  }
  return "none";
}

}  // namespace detail

inline std::optional<HeaderMode> parse_header_mode(std::string_view s) {
  if (s == "none") return HeaderMode::kNone;
  if (s == "first_token") return HeaderMode::kFirstToken;
  if (s == "column") return HeaderMode::kColumn;
  return std::nullopt;
}

inline void render_model(std::ostream& out, const ModelBundle& bundle) {
  const CrfModel& m = bundle.model;
  for (const auto& l : m.labels().names())
    if (l == "*" || l == "^" || l == "_" || l.empty() || l.find_first_of(" \t\n") != std::string::npos)
      throw ValidationError("label '" + l + "' cannot be written to a model file");

  out << kModelMagic << '\n';
  out << "labels " << m.num_labels() << '\n';
  for (const auto& l : m.labels().names()) out << l << '\n';
  out << "variance " << format_double(m.variance()) << '\n';
  out << "lexicon_case " << (bundle.lexicons.case_sensitive() ? "sensitive" : "insensitive") << '\n';
  out << "header_mode " << detail::header_mode_name(bundle.header_mode) << ' ' << bundle.header_column << '\n';
  const auto& aux = m.registry().aux_names();
  out << "aux_names " << aux.size() << '\n';
  for (const auto& a : aux) out << a << '\n';

  const auto& reg = m.registry();
  out << "tests " << reg.size() << '\n';
  std::vector<std::string> used_lexicons;
  for (TestId id = 0; id < static_cast<TestId>(reg.size()); ++id) {
    const auto& t = reg[id];
    out << id << '\t' << kind_name(t.kind) << '\t' << t.offset << '\t' << t.aux_column << '\t' << t.wrapped << '\t'
        << t.value << '\n';
    if (t.kind == TestKind::kLexicon &&
        std::find(used_lexicons.begin(), used_lexicons.end(), t.value) == used_lexicons.end())
      used_lexicons.push_back(t.value);
  }
  std::sort(used_lexicons.begin(), used_lexicons.end());
  out << "lexicons " << used_lexicons.size() << '\n';
  for (const auto& name : used_lexicons) {
    const auto entries = bundle.lexicons.entries(name);
    out << name << '\t' << entries.size() << '\n';
    for (const auto& e : entries) out << e << '\n';
  }

  const auto conjs = m.conjunctions();
  std::map<Conjunction, std::size_t> conj_id;
  out << "conjunctions " << conjs.size() << '\n';
  for (std::size_t c = 0; c < conjs.size(); ++c) {
    conj_id.emplace(conjs[c], c);
    out << c << '\t';
    for (std::size_t i = 0; i < conjs[c].size(); ++i) out << (i ? " " : "") << conjs[c].tests()[i];
    out << '\n';
  }

  out << "features " << m.size() << '\n';
  for (std::size_t k = 0; k < m.size(); ++k) {
    const Feature& f = m.feature(k);
    out << k << '\t';
    if (f.conjunction) out << conj_id.at(*f.conjunction);
    else out << '_';
    out << '\t';
    if (f.source == kWildcard) out << '*';
    else if (f.source == kStartState) out << '^';
    else out << m.labels().name(f.source);
    out << '\t' << m.labels().name(f.destination) << '\t' << format_double(m.weights()[k]) << '\n';
  }
  out << "end\n";
}

inline std::string render_model(const ModelBundle& bundle) {
  std::ostringstream out;
  render_model(out, bundle);
  return out.str();
}

inline ModelBundle parse_model(std::istream& in) {
  std::size_t lineno = 0;
  std::string line;
  auto next = [&]() -> std::string& {
    if (!std::getline(in, line)) throw FormatError("unexpected end of model file", lineno + 1);
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  auto section = [&](std::string_view name) -> std::string {
    const std::string& l = next();
    if (l.rfind(std::string(name) + " ", 0) != 0)
      throw FormatError("expected '" + std::string(name) + "' section", lineno);
    return l.substr(name.size() + 1);
  };
  auto count = [&](std::string_view name) -> std::size_t {
    long long n = 0;
    if (!parse_int(section(name), n) || n < 0) throw FormatError("bad count for '" + std::string(name) + "'", lineno);
    return static_cast<std::size_t>(n);
  };
  auto integer = [&](const std::string& s) -> long long {
    long long v = 0;
    if (!parse_int(s, v)) throw FormatError("expected an integer, found '" + s + "'", lineno);
    return v;
  };

  const std::string& magic = next();
  if (magic != kModelMagic) {
    if (magic.rfind("crf-model ", 0) == 0) throw FormatError("unsupported model version '" + magic.substr(10) + "'", 1);
    throw FormatError("not a model file", 1);
  }

  LabelSet labels;
  for (std::size_t n = count("labels"), i = 0; i < n; ++i) labels.add(next());
  double variance = 0.0;
  if (!parse_double(section("variance"), variance) || !(variance > 0.0)) throw FormatError("bad variance", lineno);

  const std::string lex_case = section("lexicon_case");
  if (lex_case != "sensitive" && lex_case != "insensitive") throw FormatError("bad lexicon_case", lineno);
  ModelBundle bundle;
  bundle.lexicons = LexiconStore(lex_case == "sensitive");

  {
    std::istringstream hm(section("header_mode"));
    std::string mode;
    int col = 1;
    hm >> mode >> col;
    auto parsed = parse_header_mode(mode);
    if (!parsed || hm.fail()) throw FormatError("bad header_mode", lineno);
    bundle.header_mode = *parsed;
    bundle.header_column = col;
  }

  std::vector<std::string> aux_names;
  for (std::size_t n = count("aux_names"), i = 0; i < n; ++i) aux_names.push_back(next());

  TestRegistry registry;
  registry.set_aux_names(aux_names);
  for (std::size_t n = count("tests"), i = 0; i < n; ++i) {
    auto f = detail::split_tabs(next(), 6);
    if (f.size() != 6) throw FormatError("test line needs 6 tab-separated fields", lineno);
    if (integer(f[0]) != static_cast<long long>(i)) throw FormatError("test ids must be dense and in order", lineno);
    auto kind = parse_kind(f[1]);
    if (!kind) throw FormatError("unknown test kind '" + f[1] + "'", lineno);
    AtomicTest t;
    t.kind = *kind;
    t.offset = static_cast<int>(integer(f[2]));
    t.aux_column = static_cast<int>(integer(f[3]));
    t.wrapped = static_cast<TestId>(integer(f[4]));
    t.value = f[5];
    try {
      if (registry.add(t) != static_cast<TestId>(i)) throw FormatError("duplicate test definition", lineno);
    } catch (const ConfigError& e) {
      throw FormatError(e.what(), lineno);
    }
  }

  for (std::size_t n = count("lexicons"), i = 0; i < n; ++i) {
    auto f = detail::split_tabs(next(), 2);
    if (f.size() != 2) throw FormatError("lexicon header needs name and count", lineno);
    const long long entries = integer(f[1]);
    std::vector<std::string> words;
    for (long long e = 0; e < entries; ++e) words.push_back(next());
    bundle.lexicons.add(f[0], words);
  }

  std::vector<Conjunction> conjs;
  for (std::size_t n = count("conjunctions"), i = 0; i < n; ++i) {
    auto f = detail::split_tabs(next(), 2);
    if (f.size() != 2 || integer(f[0]) != static_cast<long long>(i)) throw FormatError("bad conjunction line", lineno);
    std::vector<TestId> ids;
    std::istringstream ts(f[1]);
    std::string tok;
    while (ts >> tok) {
      const long long id = integer(tok);
      if (id < 0 || static_cast<std::size_t>(id) >= registry.size())
        throw FormatError("conjunction references unknown test " + tok, lineno);
      ids.push_back(static_cast<TestId>(id));
    }
    if (ids.empty()) throw FormatError("empty conjunction", lineno);
    conjs.emplace_back(std::move(ids));
  }

  CrfModel model(std::move(labels), std::move(registry), variance);
  std::vector<Feature> features;
  std::vector<double> weights;
  for (std::size_t n = count("features"), i = 0; i < n; ++i) {
    auto f = detail::split_tabs(next(), 5);
    if (f.size() != 5 || integer(f[0]) != static_cast<long long>(i)) throw FormatError("bad feature line", lineno);
    Feature feat;
    if (f[1] != "_") {
      const long long c = integer(f[1]);
      if (c < 0 || static_cast<std::size_t>(c) >= conjs.size()) throw FormatError("unknown conjunction id", lineno);
      feat.conjunction = conjs[static_cast<std::size_t>(c)];
    }
    if (f[2] == "*") {
      feat.source = kWildcard;
    } else if (f[2] == "^") {
      feat.source = kStartState;
    } else {
      auto s = model.labels().find(f[2]);
      if (!s) throw FormatError("unknown source label '" + f[2] + "'", lineno);
      feat.source = *s;
    }
    auto d = model.labels().find(f[3]);
    if (!d) throw FormatError("unknown destination label '" + f[3] + "'", lineno);
    feat.destination = *d;
    double w = 0.0;
    if (!parse_double(f[4], w) || !std::isfinite(w)) throw FormatError("bad weight '" + f[4] + "'", lineno);
    features.push_back(std::move(feat));
    weights.push_back(w);
  }
  if (model.add_features(features, weights) != features.size()) throw FormatError("duplicate feature", lineno);
  if (next() != "end") throw FormatError("expected 'end'", lineno);
  bundle.model = std::move(model);
  return bundle;
}

inline ModelBundle parse_model(const std::string& text) {
  std::istringstream in(text);
  return parse_model(in);
}

inline void save_model(const std::string& path, const ModelBundle& bundle) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write model file '" + path + "'");
  render_model(out, bundle);
}

inline ModelBundle load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file '" + path + "'");
  return parse_model(in);
}

}  // namespace crfind
