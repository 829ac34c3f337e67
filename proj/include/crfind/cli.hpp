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

// Command implementations behind the crfind executable: induce, train, tag,
// eval, inspect. Each returns the process exit status:
//   0 success, 1 configuration error, 2 data or model error.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "crfind/baseline.hpp"
#include "crfind/config.hpp"
#include "crfind/corpus.hpp"
#include "crfind/error.hpp"
#include "crfind/evaluation.hpp"
#include "crfind/feature_model.hpp"
#include "crfind/induction.hpp"
#include "crfind/inference.hpp"
#include "crfind/model_io.hpp"
#include "crfind/observation.hpp"
#include "crfind/training.hpp"

namespace crfind {

// ---------------------------------------------------------------------------
// Pipeline helpers

inline std::vector<Sentence> read_corpus_file(const std::filesystem::path& path, const ReadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open data file '" + path.string() + "'");
  try {
    return read_conll(in, opts);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Labels ordered by descending frequency, ties alphabetically. The most
// frequent label (usually the background) gets index 0.
inline LabelSet labels_by_frequency(std::span<const Sentence> sentences) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : sentences)
    for (const auto& l : s.labels) ++counts[l];
  std::vector<std::pair<std::string, std::size_t>> v(counts.begin(), counts.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  LabelSet labels;
  for (const auto& [l, _] : v) labels.add(l);
  return labels;
}

inline TrainingSet make_training_set(const CrfModel& model, const LexiconStore& lexicons,
                                     std::span<const Sentence> sentences) {
  auto obs = apply_tests(sentences, model.registry(), lexicons);
  std::vector<Instance> instances;
  instances.reserve(sentences.size());
  for (std::size_t j = 0; j < sentences.size(); ++j) {
    if (!sentences[j].labeled())
      throw ValidationError("sentence at line " + std::to_string(sentences[j].first_line) + " has no labels");
    instances.push_back(Instance{std::move(obs[j]), model.labels().encode(sentences[j].labels)});
  }
  return TrainingSet(std::move(instances));
}

// Viterbi labels for every sentence.
inline std::vector<std::vector<std::string>> tag_sentences(const ModelBundle& bundle,
                                                           std::span<const Sentence> sentences) {
  const auto obs = apply_tests(sentences, bundle.model.registry(), bundle.lexicons);
  const FeatureIndex index(bundle.model);
  std::vector<std::vector<std::string>> out;
  out.reserve(sentences.size());
  for (const auto& o : obs) {
    ActiveFeatures active;
    active.extend(index, o);
    const auto path = viterbi(compute_potentials(bundle.model, active, bundle.model.weights())).path;
    std::vector<std::string> labels;
    for (LabelId l : path) labels.push_back(bundle.model.labels().name(l));
    out.push_back(std::move(labels));
  }
  return out;
}

inline double token_accuracy(std::span<const Sentence> gold, const std::vector<std::vector<std::string>>& predicted) {
  std::size_t n = 0, ok = 0;
  for (std::size_t j = 0; j < gold.size(); ++j)
    for (std::size_t t = 0; t < gold[j].size(); ++t) {
      ++n;
      ok += gold[j].labels[t] == predicted[j][t];
    }
  return n ? static_cast<double>(ok) / static_cast<double>(n) : 0.0;
}

// Splits off a seeded random fraction of sentences; both parts keep their
// original order.
inline std::pair<std::vector<Sentence>, std::vector<Sentence>> holdout_split(std::vector<Sentence> all, double fraction,
                                                                             std::uint64_t seed) {
  if (fraction <= 0.0) return {std::move(all), {}};
  std::vector<std::size_t> idx(all.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(all.size())));
  std::vector<bool> is_held(all.size(), false);
  for (std::size_t i = 0; i < held; ++i) is_held[idx[i]] = true;
  std::vector<Sentence> train, dev;
  for (std::size_t i = 0; i < all.size(); ++i) (is_held[i] ? dev : train).push_back(std::move(all[i]));
  return {std::move(train), std::move(dev)};
}

struct PreparedRun {
  RunConfig config;
  std::vector<Sentence> train;
  std::vector<Sentence> heldout;
  LexiconStore lexicons;
};

inline PreparedRun prepare_run(const std::string& config_path, const std::vector<std::string>& overrides) {
  PreparedRun run;
  run.config = load_config(config_path);
  apply_overrides(run.config, overrides);
  const RunConfig& cfg = run.config;
  if (cfg.train.empty()) throw ConfigError("configuration has no 'train' path");
  if (cfg.model.empty()) throw ConfigError("configuration has no 'model' path");
  run.lexicons = LexiconStore(cfg.lexicon_case_sensitive);
  if (!cfg.lexicon_dir.empty()) run.lexicons.load_directory(cfg.resolve(cfg.lexicon_dir));
  auto all = read_corpus_file(cfg.resolve(cfg.train), cfg.reading);
  if (all.empty()) throw FormatError("training file '" + cfg.train + "' contains no sentences");
  std::tie(run.train, run.heldout) = holdout_split(std::move(all), cfg.holdout, cfg.seed);
  return run;
}

inline ModelBundle make_bundle(CrfModel model, const PreparedRun& run) {
  ModelBundle b;
  b.model = std::move(model);
  b.lexicons = run.lexicons;
  b.header_mode = run.config.reading.header_mode;
  b.header_column = run.config.reading.header_column;
  return b;
}

// Training/held-out/test accuracy lines after a run.
inline void report_accuracy(std::ostream& out, const ModelBundle& bundle, const PreparedRun& run,
                            SegmentationScheme scheme) {
  out << "train_token_accuracy=" << token_accuracy(run.train, tag_sentences(bundle, run.train)) << '\n';
  if (!run.heldout.empty())
    out << "heldout_token_accuracy=" << token_accuracy(run.heldout, tag_sentences(bundle, run.heldout)) << '\n';
  if (!run.config.test.empty()) {
    const auto test = read_corpus_file(run.config.resolve(run.config.test), run.config.reading);
    const auto pred = tag_sentences(bundle, test);
    out << "test_token_accuracy=" << token_accuracy(test, pred) << '\n';
    std::vector<std::vector<std::string>> gold;
    for (const auto& s : test) gold.push_back(s.labels);
    try {
      const auto rep = score(gold, pred, scheme);
      out << "test_precision=" << rep.overall.precision() << '\n'
          << "test_recall=" << rep.overall.recall() << '\n'
          << "test_f1=" << rep.overall.f1() << '\n';
    } catch (const ValidationError&) {
      // Labels not in B-/I-/O form: segment scores are not meaningful.
    }
  }
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

inline std::string describe_feature(const CrfModel& m, const Feature& f) {
  std::string src = f.source == kWildcard ? "*" : f.source == kStartState ? "^" : m.labels().name(f.source);
  std::string conj = f.conjunction ? f.conjunction->describe(m.registry()) : "(transition)";
  return src + "->" + m.labels().name(f.destination) + "\t" + conj;
}

inline void write_round_report(std::ostream& out, const RoundReport& r) {
  out << "round=" << r.round << " M=" << r.error_tokens << " candidates=" << r.candidates
      << " accepted=" << r.accepted << " features=" << r.features << " min_gain=" << format_double(r.min_gain)
      << " max_gain=" << format_double(r.max_gain) << " L_before=" << format_double(r.ll_before)
      << " L=" << format_double(r.ll_after) << " lbfgs_iterations=" << r.lbfgs_iterations
      << " wall=" << std::fixed << std::setprecision(3) << r.seconds << std::defaultfloat << '\n';
}

inline void write_feature_log(std::ostream& out, const CrfModel& m, const RoundReport& r) {
  for (const auto& a : r.accepted_features) {
    out << "round=" << r.round << " feature=" << a.id << " gain=" << format_double(a.gain)
        << " mu=" << format_double(a.mu) << " destination=" << m.labels().name(a.feature.destination) << " tests=";
    const auto& ids = a.feature.conjunction->tests();
    for (std::size_t i = 0; i < ids.size(); ++i) out << (i ? "," : "") << ids[i];
    out << " conjunction=\"" << a.feature.conjunction->describe(m.registry()) << "\"\n";
  }
}

// Runs fn, mapping exceptions to exit codes and messages on err.
inline int guarded(std::ostream& err, const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    err << "data error: " << e.what() << '\n';
    return 2;
  }
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_induce(const std::string& config_path, const std::vector<std::string>& overrides, std::ostream& out,
                      std::ostream& err) {
  return guarded(err, [&] {
    PreparedRun run = prepare_run(config_path, overrides);
    const RunConfig& cfg = run.config;
    TestRegistry registry = build_registry(run.train, cfg.tests, run.lexicons);
    CrfModel model(labels_by_frequency(run.train), std::move(registry), cfg.variance);
    if (cfg.edge_features) seed_edge_features(model);
    TrainingSet data = make_training_set(model, run.lexicons, run.train);
    const CrfModel names(model.labels(), model.registry(), cfg.variance);

    std::ofstream report_file, feature_file;
    std::ostream* report = &err;
    if (!cfg.report.empty() && cfg.report != "-") {
      report_file = open_output(cfg.resolve(cfg.report));
      report = &report_file;
    }
    if (!cfg.feature_log.empty()) feature_file = open_output(cfg.resolve(cfg.feature_log));

    InductionConfig ic = cfg.induction;
    ic.threads = cfg.threads;
    CrfModel trained = induce_train(std::move(model), data, ic, [&](const RoundReport& r) {
      write_round_report(*report, r);
      report->flush();
      if (feature_file.is_open()) write_feature_log(feature_file, names, r);
    });

    const ModelBundle bundle = make_bundle(std::move(trained), run);
    save_model(cfg.resolve(cfg.model).string(), bundle);
    out << "features=" << bundle.model.size() << '\n';
    SegmentationScheme scheme;
    scheme.mode = cfg.scheme;
    report_accuracy(out, bundle, run, scheme);
    return 0;
  });
}

// Trains the weights of a fixed feature set: the features of model_in when
// given, otherwise the configured baseline generator's.
inline int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
                     const std::optional<std::string>& model_in, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    PreparedRun run = prepare_run(config_path, overrides);
    const RunConfig& cfg = run.config;
    CrfModel model;
    if (model_in) {
      ModelBundle in = load_model(*model_in);
      model = std::move(in.model);
      model.set_variance(cfg.variance);
      run.lexicons = std::move(in.lexicons);
      run.config.reading.header_mode = in.header_mode;
      run.config.reading.header_column = in.header_column;
    } else {
      TestRegistry registry = build_registry(run.train, cfg.tests, run.lexicons);
      model = CrfModel(labels_by_frequency(run.train), std::move(registry), cfg.variance);
      if (cfg.edge_features) seed_edge_features(model);
    }
    TrainingSet data = make_training_set(model, run.lexicons, run.train);
    if (!model_in && cfg.baseline != "none") {
      BaselineOptions bo;
      if (cfg.baseline == "patterns") bo.patterns = cfg.patterns;
      auto feats = baseline_features(model, data.instances(), bo);
      std::vector<double> zeros(feats.size(), 0.0);
      model.add_features(feats, zeros);
    }

    LbfgsOptions lo;
    lo.max_iterations = cfg.train_iterations;
    lo.history = cfg.induction.lbfgs_history;
    lo.gradient_tolerance = cfg.gradient_tolerance;
    lo.on_iteration = [&](int it, double value) {
      out << "iteration=" << it << " L=" << format_double(value) << '\n';
    };
    const auto rep = lbfgs_optimize(model, data, lo, cfg.threads);
    out << "iterations=" << rep.iterations << " L=" << format_double(rep.final_value)
        << " gradient_norm=" << format_double(rep.gradient_norm) << " converged=" << (rep.converged ? 1 : 0)
        << " line_search_failed=" << (rep.line_search_failed ? 1 : 0) << '\n';

    const ModelBundle bundle = make_bundle(std::move(model), run);
    save_model(cfg.resolve(cfg.model).string(), bundle);
    out << "features=" << bundle.model.size() << '\n';
    SegmentationScheme scheme;
    scheme.mode = cfg.scheme;
    report_accuracy(out, bundle, run, scheme);
    return 0;
  });
}

// Appends a predicted-label column to every token line; all other lines are
// copied unchanged.
inline int cmd_tag(const std::string& model_path, std::istream& in, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ModelBundle bundle = load_model(model_path);
    ReadOptions ro;
    ro.has_labels = false;
    ro.header_mode = bundle.header_mode;
    ro.header_column = bundle.header_column;
    const auto blocks = read_conll_blocks(in, ro);
    std::vector<Sentence> sentences;
    for (const auto& b : blocks)
      if (b.is_sentence) sentences.push_back(b.sentence);
    const auto predicted = tag_sentences(bundle, sentences);
    std::size_t j = 0;
    for (const auto& b : blocks) {
      if (!b.is_sentence) {
        out << b.raw << '\n';
        continue;
      }
      const auto& pred = predicted[j++];
      for (std::size_t t = 0; t < b.columns.size(); ++t) {
        for (const auto& c : b.columns[t]) out << c << ' ';
        out << pred[t] << '\n';
      }
    }
    return 0;
  });
}

struct EvalOptions {
  SegmentationScheme scheme;
  int gold_column = -1;
  int predicted_column = -1;
};

inline int cmd_eval(const std::string& gold_path, const std::string& predicted_path, const EvalOptions& opts,
                    std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ReadOptions g;
    g.label_column = opts.gold_column;
    ReadOptions p;
    p.label_column = opts.predicted_column;
    const auto gold = read_corpus_file(gold_path, g);
    const auto pred = read_corpus_file(predicted_path, p);
    std::vector<std::vector<std::string>> gl, pl;
    for (const auto& s : gold) gl.push_back(s.labels);
    for (const auto& s : pred) pl.push_back(s.labels);
    print_report(out, score(gl, pl, opts.scheme));
    return 0;
  });
}

enum class InspectOrder { kWeight, kIndex };

// Lists the top features, by |weight| (ties by index) or by index.
inline int cmd_inspect(const std::string& model_path, std::size_t top, InspectOrder order, std::ostream& out,
                       std::ostream& err) {
  return guarded(err, [&] {
    const ModelBundle bundle = load_model(model_path);
    const CrfModel& m = bundle.model;
    std::vector<std::size_t> idx(m.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (order == InspectOrder::kWeight)
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(m.weights()[a]) > std::abs(m.weights()[b]);
      });
    out << "# " << m.size() << " features, " << m.num_labels() << " labels, " << m.registry().size()
        << " tests\n";
    out << "index\tweight\ttransition\tfeature\n";
    for (std::size_t i = 0; i < std::min(top, idx.size()); ++i) {
      const std::size_t k = idx[i];
      out << k << '\t' << format_double(m.weights()[k]) << '\t' << describe_feature(m, m.feature(k)) << '\n';
    }
    return 0;
  });
}

}  // namespace crfind
