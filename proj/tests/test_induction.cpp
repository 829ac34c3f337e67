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


#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "crfind/induction.hpp"
#include "oracle.hpp"

namespace crfind {
namespace {

using testing::letter_labels;
using testing::word_registry;

// One-token sentences whose marginal row is softmax(log_weights).
CrfModel row_model(const std::vector<double>& log_weights) {
  CrfModel m(letter_labels(log_weights.size()), word_registry(1));
  for (std::size_t s = 0; s < log_weights.size(); ++s) {
    const Feature f{std::nullopt, kWildcard, static_cast<LabelId>(s)};
    const double w[] = {log_weights[s]};
    m.add_features(std::span(&f, 1), w);
  }
  return m;
}

TEST(SelectErrorTokens, ConfidentModelHasNone) {
  auto m = row_model({std::log(0.99), std::log(0.01)});
  TrainingSet data({Instance{ObservationMatrix(1, {{}, {}}), {0, 0}}});
  EXPECT_TRUE(select_error_tokens(m, data).empty());
}

TEST(SelectErrorTokens, UniformTieGoesToLabelZero) {
  CrfModel m(letter_labels(3), word_registry(1));
  TrainingSet data({Instance{ObservationMatrix(1, {{}, {}, {}, {}}), {0, 1, 2, 0}}});
  auto tokens = select_error_tokens(m, data);
  ASSERT_EQ(tokens.size(), 2u);
  EXPECT_EQ(tokens[0].position, 1u);
  EXPECT_EQ(tokens[1].position, 2u);
  double sum = 0.0;
  for (double g : tokens[0].gamma) sum += g;
  EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST(SelectErrorTokens, Margin) {
  TrainingSet close({Instance{ObservationMatrix(1, {{}}), {0}}});
  auto m = row_model({std::log(0.55), std::log(0.45), -60.0});
  EXPECT_TRUE(select_error_tokens(m, close).empty());
  EXPECT_EQ(select_error_tokens(m, close, 0.2).size(), 1u);
  TrainingSet clear({Instance{ObservationMatrix(1, {{}}), {0}}});
  auto m2 = row_model({std::log(0.80), std::log(0.15), std::log(0.05)});
  EXPECT_TRUE(select_error_tokens(m2, clear, 0.2).empty());
}

ErrorToken token(LabelId truth, std::vector<double> gamma) { return ErrorToken{0, 0, truth, std::move(gamma)}; }

Candidate firing_on(std::vector<std::uint32_t> idx, std::optional<LabelId> dest) {
  Candidate c;
  c.conjunction = Conjunction{0};
  c.destination = dest;
  c.firing = std::move(idx);
  return c;
}

TEST(CandidateGain, NeverFires) {
  std::vector<ErrorToken> toks = {token(1, {0.5, 0.5}), token(0, {0.7, 0.3})};
  auto r = candidate_gain(toks, firing_on({}, 1), 10.0);
  EXPECT_EQ(r.mu, 0.0);
  EXPECT_EQ(r.gain, 0.0);
  GainTerms none;
  none.total = 2;
  EXPECT_NEAR(gain_value(none, 1.5, 10.0), -1.5 * 1.5 / 20.0, 1e-15);
}

TEST(CandidateGain, FiresForEveryLabel) {
  std::vector<ErrorToken> toks = {token(1, {0.5, 0.5}), token(0, {0.7, 0.3}), token(2, {0.1, 0.2, 0.7})};
  auto r = candidate_gain(toks, firing_on({0, 1, 2}, std::nullopt), 10.0);
  EXPECT_EQ(r.mu, 0.0);
  EXPECT_EQ(r.gain, 0.0);
}

// The gain straight from the per-token definition, using each token's full
// marginal row.
double direct_gain(const std::vector<ErrorToken>& toks, const Candidate& c, double mu, double var) {
  double total = 0.0;
  for (std::uint32_t i : c.firing) {
    const auto& tok = toks[i];
    double z = 0.0;
    for (std::size_t s = 0; s < tok.gamma.size(); ++s)
      z += tok.gamma[s] * std::exp(static_cast<LabelId>(s) == *c.destination ? mu : 0.0);
    total += (tok.truth == *c.destination ? mu : 0.0) - std::log(z);
  }
  return total - mu * mu / (2.0 * var);
}

TEST(CandidateGain, MatchesGridSearch) {
  std::vector<ErrorToken> toks = {token(2, {0.25, 0.25, 0.25, 0.25})};
  const auto c = firing_on({0}, 2);
  const auto r = candidate_gain(toks, c, 10.0);
  double best_mu = 0.0, best = -INFINITY;
  for (int i = -100000; i <= 100000; ++i) {
    const double mu = i * 1e-4;
    const double g = direct_gain(toks, c, mu, 10.0);
    if (g > best) {
      best = g;
      best_mu = mu;
    }
  }
  EXPECT_NEAR(r.gain, best, 1e-3);
  EXPECT_NEAR(r.mu, best_mu, 1e-2);
  EXPECT_NEAR(r.gain, direct_gain(toks, c, r.mu, 10.0), 1e-12);
  EXPECT_FALSE(r.used_fallback);
}

TEST(CandidateGain, FormsAgreeAndNonNegative) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    GainTerms t;
    t.total = 1 + rng() % 20;
    const std::size_t fires = rng() % (t.total + 1);
    for (std::size_t i = 0; i < fires; ++i) {
      t.a.push_back(u(rng));
      t.b.push_back(u(rng) < 0.5 ? 1.0 : 0.0);
    }
    for (double mu : {-7.0, -0.3, 0.0, 0.8, 4.0})
      EXPECT_NEAR(gain_value(t, mu, 10.0), gain_value_per_token(t, mu, 10.0), 1e-9);
    const auto r = maximize_gain(t, 10.0);
    EXPECT_GE(r.gain, 0.0);
    EXPECT_TRUE(std::isfinite(r.mu));
  }
}

// Two-label corpus where tests 0 (a), 1 (b) and 2 (c) fire on every error
// token.
struct Toy {
  CrfModel model{letter_labels(2), word_registry(3)};
  TrainingSet data{{Instance{ObservationMatrix(3, {{0, 1, 2}, {0, 1}}), {1, 1}}}};
};

std::set<Conjunction> pool_of(const std::vector<Candidate>& cands) {
  std::set<Conjunction> out;
  for (const auto& c : cands) out.insert(c.conjunction);
  return out;
}

TEST(GenerateCandidates, DepthTwoClosure) {
  Toy toy;
  auto tokens = select_error_tokens(toy.model, toy.data);
  ASSERT_EQ(tokens.size(), 2u);
  auto cands = generate_candidates(toy.model, tokens, toy.data.instances(), GenerationOptions{});
  auto pool = pool_of(cands);
  EXPECT_TRUE(pool.count(Conjunction{0}));
  EXPECT_TRUE(pool.count(Conjunction{1}));
  EXPECT_TRUE(pool.count(Conjunction({0, 1})));
  EXPECT_FALSE(pool.count(Conjunction({0, 1, 2})));
  for (std::size_t i = 1; i < cands.size(); ++i) EXPECT_GE(cands[i - 1].gain, cands[i].gain);
}

TEST(GenerateCandidates, ExtendsExistingConjunctions) {
  Toy toy;
  const Feature f{Conjunction({0, 1}), kWildcard, 0};
  const double w[] = {0.0};
  toy.model.add_features(std::span(&f, 1), w);
  auto tokens = select_error_tokens(toy.model, toy.data);
  auto cands = generate_candidates(toy.model, tokens, toy.data.instances(), GenerationOptions{});
  EXPECT_TRUE(pool_of(cands).count(Conjunction({0, 1, 2})));
  for (const auto& c : cands)
    EXPECT_FALSE(c.conjunction == Conjunction({0, 1}) && c.destination == 0);
}

TEST(GenerateCandidates, PoolSizeLimitsConjunctions) {
  Toy toy;
  auto tokens = select_error_tokens(toy.model, toy.data);
  GenerationOptions opts;
  opts.pool_size = 1;
  auto pool = pool_of(generate_candidates(toy.model, tokens, toy.data.instances(), opts));
  for (const auto& c : pool) EXPECT_EQ(c.size(), 1u);
}

// Label B exactly where test 0 fires; test 1 fires everywhere.
TrainingSet separable(std::mt19937_64& rng, std::size_t sentences) {
  std::bernoulli_distribution coin(0.5);
  std::vector<Instance> out;
  for (std::size_t j = 0; j < sentences; ++j) {
    Instance in;
    std::vector<std::vector<TestId>> f;
    for (int t = 0; t < 5; ++t) {
      const bool on = coin(rng);
      f.push_back(on ? std::vector<TestId>{0, 1} : std::vector<TestId>{1});
      in.gold.push_back(on ? 1 : 0);
    }
    in.obs = ObservationMatrix(2, f);
    out.push_back(std::move(in));
  }
  return TrainingSet(out);
}

double train_accuracy(const CrfModel& m, const TrainingSet& data) {
  std::size_t right = 0, total = 0;
  for (const auto& in : data.instances()) {
    const auto v = viterbi(m, in.obs);
    for (std::size_t t = 0; t < in.gold.size(); ++t, ++total) right += v.path[t] == in.gold[t];
  }
  return static_cast<double>(right) / static_cast<double>(total);
}

TEST(InductionRound, NoErrorTokens) {
  auto m = row_model({std::log(0.99), std::log(0.01)});
  TrainingSet data({Instance{ObservationMatrix(1, {{}, {}}), {0, 0}}});
  const auto rep = induction_round(m, data, InductionConfig{});
  EXPECT_EQ(rep.error_tokens, 0u);
  EXPECT_EQ(rep.candidates, 0u);
  EXPECT_EQ(rep.accepted, 0u);
  EXPECT_GT(rep.lbfgs_iterations, 0);
  EXPECT_GT(rep.ll_after, rep.ll_before);
}

TEST(InductionRound, ThresholdBlocksEverything) {
  std::mt19937_64 rng(43);
  auto data = separable(rng, 10);
  CrfModel m(letter_labels(2), word_registry(2));
  InductionConfig cfg;
  cfg.gain_threshold = 1e9;
  const auto rep = induction_round(m, data, cfg);
  EXPECT_GT(rep.error_tokens, 0u);
  EXPECT_EQ(rep.accepted, 0u);
  EXPECT_EQ(m.size(), 0u);
}

TEST(InductionRound, EqualGainsAreSkipped) {
  // Tests 0 and 1 fire at exactly the same places: one of them is enough.
  std::vector<Instance> inst;
  for (int j = 0; j < 10; ++j) inst.push_back({ObservationMatrix(2, {{0, 1}, {}}), {1, 0}});
  TrainingSet data(inst);
  CrfModel m(letter_labels(2), word_registry(2));
  InductionConfig cfg;
  cfg.gain_threshold = 0.5;
  const auto rep = induction_round(m, data, cfg);
  std::set<long long> keys;
  for (const auto& a : rep.accepted_features) EXPECT_TRUE(keys.insert(gain_key(a.gain)).second);
  EXPECT_EQ(rep.accepted, 1u);
  EXPECT_EQ(*m.feature(0).conjunction, Conjunction{0});
}

TEST(InduceTrain, ZeroRoundsReturnsSeed) {
  std::mt19937_64 rng(47);
  auto data = separable(rng, 5);
  CrfModel seed(letter_labels(2), word_registry(2));
  seed_edge_features(seed);
  InductionConfig cfg;
  cfg.max_rounds = 0;
  auto out = induce_train(seed, data, cfg);
  EXPECT_EQ(out.features(), seed.features());
  EXPECT_EQ(out.weights(), seed.weights());
}

TEST(InduceTrain, SeparableCorpus) {
  std::mt19937_64 rng(53);
  auto data = separable(rng, 40);
  CrfModel seed(letter_labels(2), word_registry(2));
  seed_edge_features(seed);
  const std::size_t edges = seed.size();
  InductionConfig cfg;
  std::vector<double> lls;
  auto m = induce_train(seed, data, cfg, [&](const RoundReport& r) { lls.push_back(r.ll_after); });
  EXPECT_EQ(train_accuracy(m, data), 1.0);
  EXPECT_LE(m.size(), 2 * (2 + edges));
  for (std::size_t i = 1; i < lls.size(); ++i) EXPECT_GE(lls[i], lls[i - 1]);
}

TEST(InduceTrain, Deterministic) {
  std::mt19937_64 r1(59), r2(59);
  auto d1 = separable(r1, 30), d2 = separable(r2, 30);
  CrfModel seed(letter_labels(2), word_registry(2));
  InductionConfig cfg;
  cfg.threads = 3;
  auto a = induce_train(seed, d1, cfg);
  cfg.threads = 1;
  auto b = induce_train(seed, d2, cfg);
  EXPECT_EQ(a.features(), b.features());
  EXPECT_EQ(a.weights(), b.weights());
}

}  // namespace
}  // namespace crfind
