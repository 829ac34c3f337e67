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

// Likelihood-gain feature induction.
//
// Each round finds the tokens the current model gets wrong, proposes
// candidate features (atomic tests, and pairwise conjunctions of the
// highest-gain tests and existing conjunctions), scores every candidate by
// its approximate gain on those tokens alone, adds the best ones and runs a
// few L-BFGS iterations.
//
// A candidate g = (conjunction c, destination d) ignores the previous state.
// Holding every other position at its current marginal, token i contributes
//
//   log( exp(mu * b_i) / (a_i * e^mu + 1 - a_i) )
//
// where a_i = gamma_i(d) if c fires at token i (else 0) and b_i = 1 iff c
// fires and d is the true label. The gain is the sum over error tokens minus
// mu^2 / (2 var), maximized over mu.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "crfind/error.hpp"
#include "crfind/feature_model.hpp"
#include "crfind/inference.hpp"
#include "crfind/numeric.hpp"
#include "crfind/parallel.hpp"
#include "crfind/training.hpp"

namespace crfind {

struct ErrorToken {
  std::size_t sentence = 0;
  std::size_t position = 0;
  LabelId truth = 0;
  std::vector<double> gamma;
};

// Lowest index wins ties.
inline LabelId argmax_label(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t s = 1; s < row.size(); ++s)
    if (row[s] > row[best]) best = s;
  return static_cast<LabelId>(best);
}

// Tokens mislabeled by the current marginals, or (with a margin) whose true
// label beats the runner-up by less than the margin.
inline std::vector<ErrorToken> select_error_tokens(const CrfModel& model, TrainingSet& data,
                                                   std::optional<double> margin = std::nullopt,
                                                   std::size_t threads = 1) {
  data.sync(model);
  const std::size_t L = model.num_labels();
  std::vector<std::vector<ErrorToken>> per_sentence(data.size());
  parallel_for(data.size(), threads, [&](std::size_t j) {
    const auto& in = data.instance(j);
    const Lattice lat = marginals(compute_potentials(model, data.active(j), model.weights()), false);
    for (std::size_t t = 0; t < in.gold.size(); ++t) {
      std::span<const double> row(lat.gamma.data() + t * L, L);
      const LabelId truth = in.gold[t];
      bool include = argmax_label(row) != truth;
      if (!include && margin) {
        double runner_up = 0.0;
        for (std::size_t s = 0; s < L; ++s)
          if (static_cast<LabelId>(s) != truth) runner_up = std::max(runner_up, row[s]);
        include = row[static_cast<std::size_t>(truth)] - runner_up < *margin;
      }
      if (include) per_sentence[j].push_back(ErrorToken{j, t, truth, std::vector<double>(row.begin(), row.end())});
    }
  });
  std::vector<ErrorToken> out;
  for (auto& v : per_sentence)
    for (auto& e : v) out.push_back(std::move(e));
  return out;
}

// ---------------------------------------------------------------------------
// Gain

// The (a_i, b_i) pairs of the tokens where a candidate fires; tokens where
// it does not fire contribute exactly zero.
struct GainTerms {
  std::vector<double> a;
  std::vector<double> b;
  // Number of error tokens M, firing or not.
  std::size_t total = 0;
};

// log(a e^mu + 1 - a), stable for large |mu|.
inline double log_normalizer(double a, double mu) {
  if (a <= 0.0) return 0.0;
  if (a >= 1.0) return mu;
  return logsumexp(std::log(a) + mu, std::log1p(-a));
}

// Gain written as M mu E[g] - sum_i log E_i[exp(mu g)] - mu^2 / (2 var),
// with E[g] the mean of g over error tokens under their true labels.
inline double gain_value(const GainTerms& terms, double mu, double variance) {
  double mean = 0.0;
  for (double b : terms.b) mean += b;
  const double m = static_cast<double>(terms.total);
  if (terms.total) mean /= m;
  double norm = 0.0;
  for (double a : terms.a) norm += log_normalizer(a, mu);
  return m * mu * mean - norm - mu * mu / (2.0 * variance);
}

// Gain written token by token: sum_i log(exp(mu g_i(true)) / Z_i) - mu^2 / (2 var).
inline double gain_value_per_token(const GainTerms& terms, double mu, double variance) {
  double sum = 0.0;
  for (std::size_t i = 0; i < terms.a.size(); ++i) sum += mu * terms.b[i] - log_normalizer(terms.a[i], mu);
  return sum - mu * mu / (2.0 * variance);
}

struct GainResult {
  double mu = 0.0;
  double gain = 0.0;
  int newton_iterations = 0;
  bool used_fallback = false;
};

namespace detail {

// First and second derivative of the gain in mu.
inline std::pair<double, double> gain_derivatives(const GainTerms& terms, double mu, double variance) {
  double d1 = -mu / variance;
  double d2 = -1.0 / variance;
  for (std::size_t i = 0; i < terms.a.size(); ++i) {
    const double a = terms.a[i];
    double p;
    if (a <= 0.0) p = 0.0;
    else if (a >= 1.0) p = 1.0;
    else p = std::exp(std::log(a) + mu - log_normalizer(a, mu));
    d1 += terms.b[i] - p;
    d2 -= p * (1.0 - p);
  }
  return {d1, d2};
}

inline double golden_section_max(const std::function<double(double)>& f, double lo, double hi) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < 200 && hi - lo > 1e-10; ++i) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + r * (hi - lo);
      f2 = f(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - r * (hi - lo);
      f1 = f(x1);
    }
  }
  return (lo + hi) / 2.0;
}

}  // namespace detail

struct NewtonOptions {
  int max_iterations = 20;
  double tolerance = 1e-6;
  int max_halvings = 60;
  double fallback_bound = 20.0;
};

// Newton's method from mu = 0, halving any step that lowers the gain. Falls
// back to golden-section search on [-20, 20] if Newton does not converge.
inline GainResult maximize_gain(const GainTerms& terms, double variance, const NewtonOptions& opts = {}) {
  GainResult r;
  double mu = 0.0;
  double value = gain_value(terms, mu, variance);
  bool converged = false;
  for (int it = 1; it <= opts.max_iterations; ++it) {
    r.newton_iterations = it;
    auto [d1, d2] = detail::gain_derivatives(terms, mu, variance);
    if (d1 == 0.0) {
      converged = true;
      break;
    }
    double step = -d1 / d2;
    double next = mu + step;
    double next_value = gain_value(terms, next, variance);
    for (int h = 0; h < opts.max_halvings && !(next_value >= value); ++h) {
      step *= 0.5;
      next = mu + step;
      next_value = gain_value(terms, next, variance);
    }
    if (!(next_value >= value)) {
      // No ascent possible at this precision: mu is the maximizer.
      converged = true;
      break;
    }
    mu = next;
    value = next_value;
    if (std::abs(step) < opts.tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    r.used_fallback = true;
    mu = detail::golden_section_max([&](double m) { return gain_value(terms, m, variance); }, -opts.fallback_bound,
                                    opts.fallback_bound);
    value = gain_value(terms, mu, variance);
  }
  if (!(value > 0.0)) {
    mu = 0.0;
    value = 0.0;
  }
  r.mu = mu;
  r.gain = value;
  return r;
}

struct Candidate {
  Conjunction conjunction;
  // Absent: the candidate fires for every label (label-independent).
  std::optional<LabelId> destination;
  // Sorted indices into the error-token list where the conjunction fires.
  std::vector<std::uint32_t> firing;
  std::size_t fires_true = 0;
  double mu = 0.0;
  double gain = 0.0;
  bool used_fallback = false;

  Feature feature() const { return Feature{conjunction, kWildcard, destination.value_or(0)}; }
};

inline GainTerms gain_terms(std::span<const ErrorToken> tokens, const Candidate& g) {
  GainTerms terms;
  terms.total = tokens.size();
  for (std::uint32_t i : g.firing) {
    const auto& tok = tokens[i];
    if (g.destination) {
      terms.a.push_back(tok.gamma[static_cast<std::size_t>(*g.destination)]);
      terms.b.push_back(tok.truth == *g.destination ? 1.0 : 0.0);
    } else {
      // Fires under every label, so the whole row of marginal mass.
      terms.a.push_back(1.0);
      terms.b.push_back(1.0);
    }
  }
  return terms;
}

// Optimal weight and approximate gain of a candidate. Reads only the error
// tokens' marginal rows; no lattice inference happens here.
inline GainResult candidate_gain(std::span<const ErrorToken> tokens, const Candidate& g, double variance) {
  if (tokens.empty()) throw ValidationError("candidate_gain: no error tokens");
  return maximize_gain(gain_terms(tokens, g), variance);
}

// ---------------------------------------------------------------------------
// Candidate generation

namespace detail {

inline std::vector<std::uint32_t> intersect(const std::vector<std::uint32_t>& x, const std::vector<std::uint32_t>& y) {
  std::vector<std::uint32_t> out;
  std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(out));
  return out;
}

inline bool conj_less(const Conjunction& a, const Conjunction& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a.tests() < b.tests();
}

// Gain of (c, d) given where c fires.
inline GainResult gain_for(std::span<const ErrorToken> tokens, const std::vector<std::uint32_t>& firing, LabelId d,
                           double variance, std::size_t* fires_true = nullptr) {
  GainTerms terms;
  terms.total = tokens.size();
  terms.a.reserve(firing.size());
  terms.b.reserve(firing.size());
  std::size_t hits = 0;
  for (std::uint32_t i : firing) {
    terms.a.push_back(tokens[i].gamma[static_cast<std::size_t>(d)]);
    const bool hit = tokens[i].truth == d;
    hits += hit;
    terms.b.push_back(hit ? 1.0 : 0.0);
  }
  if (fires_true) *fires_true = hits;
  return maximize_gain(terms, variance);
}

}  // namespace detail

struct GenerationOptions {
  // Number of highest-gain tests and existing conjunctions that are
  // conjoined pairwise.
  std::size_t pool_size = 1000;
  // Candidates below this gain are dropped from the result.
  double min_gain = 0.0;
  std::size_t threads = 1;
};

struct GenerationStats {
  std::size_t conjunctions = 0;
  std::size_t evaluated = 0;
};

// Proposes and scores candidates: every atomic test firing on an error
// token, plus pairwise conjunctions among the pool_size best-scoring atomic
// tests and existing model conjunctions, each paired with every destination
// label. (conjunction, destination) pairs already in the model are skipped.
// Results are sorted by gain, descending; ties by conjunction size, test
// ids, then destination.
inline std::vector<Candidate> generate_candidates(const CrfModel& model, std::span<const ErrorToken> tokens,
                                                  std::span<const Instance> data, const GenerationOptions& opts,
                                                  GenerationStats* stats = nullptr) {
  if (opts.pool_size < 1) throw ValidationError("candidate pool size must be at least 1");
  const double var = model.variance();
  const auto L = static_cast<LabelId>(model.num_labels());

  // Where each atomic test fires among the error tokens.
  std::map<TestId, std::vector<std::uint32_t>> test_firing;
  for (std::uint32_t i = 0; i < tokens.size(); ++i)
    for (TestId k : data[tokens[i].sentence].obs.firing_at(tokens[i].position)) test_firing[k].push_back(i);

  auto firing_of = [&](const Conjunction& c) {
    std::vector<std::uint32_t> f;
    bool first = true;
    for (TestId k : c.tests()) {
      auto it = test_firing.find(k);
      if (it == test_firing.end()) return std::vector<std::uint32_t>{};
      f = first ? it->second : detail::intersect(f, it->second);
      first = false;
      if (f.empty()) break;
    }
    return f;
  };

  struct Scored {
    Conjunction conj;
    std::vector<std::uint32_t> firing;
    double score = 0.0;
  };
  std::vector<Scored> scorers;
  std::set<Conjunction> seen;
  for (const auto& [k, f] : test_firing) {
    Conjunction c{k};
    seen.insert(c);
    scorers.push_back({c, f});
  }
  const std::size_t singleton_count = scorers.size();
  for (const auto& c : model.conjunctions()) {
    if (!seen.insert(c).second) continue;
    auto f = firing_of(c);
    if (!f.empty()) scorers.push_back({c, std::move(f)});
  }
  parallel_for(scorers.size(), opts.threads, [&](std::size_t i) {
    double best = 0.0;
    for (LabelId d = 0; d < L; ++d) best = std::max(best, detail::gain_for(tokens, scorers[i].firing, d, var).gain);
    scorers[i].score = best;
  });

  std::vector<std::size_t> order(scorers.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (scorers[x].score != scorers[y].score) return scorers[x].score > scorers[y].score;
    return detail::conj_less(scorers[x].conj, scorers[y].conj);
  });
  order.resize(std::min(order.size(), opts.pool_size));

  // Pool: singletons plus pairwise conjunctions of the top scorers.
  std::map<Conjunction, std::vector<std::uint32_t>> pool;
  for (std::size_t i = 0; i < singleton_count; ++i) pool.emplace(scorers[i].conj, scorers[i].firing);
  for (std::size_t x = 0; x < order.size(); ++x) {
    for (std::size_t y = x + 1; y < order.size(); ++y) {
      const auto& cx = scorers[order[x]];
      const auto& cy = scorers[order[y]];
      Conjunction c = cx.conj.conjoin(cy.conj);
      if (pool.count(c)) continue;
      auto f = detail::intersect(cx.firing, cy.firing);
      if (!f.empty()) pool.emplace(std::move(c), std::move(f));
    }
  }

  std::vector<std::pair<const Conjunction*, const std::vector<std::uint32_t>*>> entries;
  entries.reserve(pool.size());
  for (const auto& [c, f] : pool) entries.emplace_back(&c, &f);

  std::vector<std::vector<Candidate>> found(entries.size());
  std::vector<std::size_t> evaluated(entries.size(), 0);
  parallel_for(entries.size(), opts.threads, [&](std::size_t e) {
    const auto& [conj, firing] = entries[e];
    for (LabelId d = 0; d < L; ++d) {
      if (model.has_conjunction_for(*conj, d)) continue;
      ++evaluated[e];
      std::size_t hits = 0;
      GainResult g = detail::gain_for(tokens, *firing, d, var, &hits);
      if (g.gain < opts.min_gain) continue;
      Candidate cand;
      cand.conjunction = *conj;
      cand.destination = d;
      cand.firing = *firing;
      cand.fires_true = hits;
      cand.mu = g.mu;
      cand.gain = g.gain;
      cand.used_fallback = g.used_fallback;
      found[e].push_back(std::move(cand));
    }
  });

  std::vector<Candidate> out;
  for (auto& v : found)
    for (auto& c : v) out.push_back(std::move(c));
  std::sort(out.begin(), out.end(), [](const Candidate& x, const Candidate& y) {
    if (x.gain != y.gain) return x.gain > y.gain;
    if (x.conjunction != y.conjunction) return detail::conj_less(x.conjunction, y.conjunction);
    return x.destination < y.destination;
  });
  if (stats) {
    stats->conjunctions = pool.size();
    stats->evaluated = 0;
    for (auto n : evaluated) stats->evaluated += n;
  }
  return out;
}

// ---------------------------------------------------------------------------
// The induction loop

struct InductionConfig {
  std::size_t max_features_per_round = 1000;
  double gain_threshold = 5.0;
  std::size_t pool_size = 1000;
  int lbfgs_iterations = 10;
  int lbfgs_history = 7;
  int max_rounds = 10;
  std::optional<double> margin;
  ExpansionMode expansion = ExpansionMode::kNone;
  // Stop when a round accepts nothing and L-BFGS improves L by less.
  double min_improvement = 1e-4;
  std::size_t threads = 1;
};

struct AcceptedFeature {
  std::size_t id = 0;
  Feature feature;
  double gain = 0.0;
  double mu = 0.0;
};

struct RoundReport {
  int round = 0;
  std::size_t error_tokens = 0;
  std::size_t candidates = 0;
  std::size_t accepted = 0;
  std::size_t features = 0;
  double min_gain = 0.0;
  double max_gain = 0.0;
  double ll_before = 0.0;
  double ll_after = 0.0;
  int lbfgs_iterations = 0;
  double seconds = 0.0;
  std::vector<AcceptedFeature> accepted_features;
};

// Key for the equal-gain skip: gains equal after rounding to 1e-9.
inline long long gain_key(double gain) { return std::llround(gain * 1e9); }

inline RoundReport induction_round(CrfModel& model, TrainingSet& data, const InductionConfig& config,
                                   int round_index = 1) {
  const auto started = std::chrono::steady_clock::now();
  RoundReport rep;
  rep.round = round_index;
  data.sync(model);
  rep.ll_before = log_likelihood(model, data, config.threads);

  const auto tokens = select_error_tokens(model, data, config.margin, config.threads);
  rep.error_tokens = tokens.size();

  if (!tokens.empty()) {
    GenerationOptions gen;
    gen.pool_size = config.pool_size;
    gen.min_gain = config.gain_threshold;
    gen.threads = config.threads;
    GenerationStats stats;
    const auto candidates = generate_candidates(model, tokens, data.instances(), gen, &stats);
    rep.candidates = stats.evaluated;

    std::set<long long> accepted_gains;
    std::vector<Feature> added;
    std::vector<double> initial;
    const std::size_t first_new = model.size();
    for (const auto& c : candidates) {
      if (rep.accepted >= config.max_features_per_round) break;
      if (c.gain < config.gain_threshold) break;
      if (!accepted_gains.insert(gain_key(c.gain)).second) continue;
      bool first = true;
      for (const auto& f : expand_candidate(c.feature(), config.expansion, model.num_labels())) {
        added.push_back(f);
        initial.push_back(first ? c.mu : 0.0);
        first = false;
      }
      rep.accepted += 1;
      rep.max_gain = rep.accepted == 1 ? c.gain : std::max(rep.max_gain, c.gain);
      rep.min_gain = rep.accepted == 1 ? c.gain : std::min(rep.min_gain, c.gain);
      rep.accepted_features.push_back(AcceptedFeature{0, c.feature(), c.gain, c.mu});
    }
    model.add_features(added, initial);
    for (auto& a : rep.accepted_features) a.id = *model.find(a.feature);

    // The gains are approximate; if the joint effect of the new weights
    // lowers the likelihood, start the new features from zero instead.
    if (model.size() > first_new && log_likelihood(model, data, config.threads) < rep.ll_before) {
      auto w = model.weights();
      std::fill(w.begin() + static_cast<std::ptrdiff_t>(first_new), w.end(), 0.0);
      model.set_weights(std::move(w));
    }
  }

  LbfgsOptions lo;
  lo.max_iterations = config.lbfgs_iterations;
  lo.history = config.lbfgs_history;
  const auto opt = lbfgs_optimize(model, data, lo, config.threads);
  rep.ll_after = opt.final_value;
  rep.lbfgs_iterations = opt.iterations;
  rep.features = model.size();
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return rep;
}

// Repeats induction rounds from the given seed model until max_rounds, no
// error tokens remain, or a round adds nothing and barely moves L.
inline CrfModel induce_train(CrfModel seed, TrainingSet& data, const InductionConfig& config,
                             const std::function<void(const RoundReport&)>& on_round = {}) {
  if (data.size() == 0) throw ValidationError("induce_train: no training data");
  CrfModel model = std::move(seed);
  for (int r = 1; r <= config.max_rounds; ++r) {
    RoundReport rep = induction_round(model, data, config, r);
    if (on_round) on_round(rep);
    if (rep.error_tokens == 0) break;
    if (rep.accepted == 0 && rep.ll_after - rep.ll_before < config.min_improvement) break;
  }
  return model;
}

}  // namespace crfind
