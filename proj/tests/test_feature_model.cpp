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

#include <random>

#include "crfind/feature_model.hpp"
#include "oracle.hpp"

namespace crfind {
namespace {

using testing::letter_labels;
using testing::word_registry;

ObservationMatrix all_fire(std::size_t T, std::size_t n) {
  std::vector<std::vector<TestId>> f(T);
  for (auto& row : f)
    for (std::size_t k = 0; k < n; ++k) row.push_back(static_cast<TestId>(k));
  return ObservationMatrix(n, f);
}

TEST(ScoreTransition, EmptyModelScoresZero) {
  CrfModel m(letter_labels(3), word_registry(2));
  auto obs = all_fire(3, 2);
  for (std::size_t t = 0; t < 3; ++t)
    for (LabelId d = 0; d < 3; ++d) EXPECT_EQ(score_transition(m, obs, t, t == 0 ? kStartState : 1, d), 0.0);
}

TEST(ScoreTransition, SingleWildcardFeature) {
  CrfModel m(letter_labels(3), word_registry(2));
  const Feature f{Conjunction{0}, kWildcard, 1};
  const double w[] = {2.5};
  m.add_features(std::span(&f, 1), w);
  auto obs = all_fire(2, 2);
  for (int src : {0, 1, 2}) {
    EXPECT_EQ(score_transition(m, obs, 1, src, 1), 2.5);
    EXPECT_EQ(score_transition(m, obs, 1, src, 2), 0.0);
  }
  EXPECT_EQ(score_transition(m, obs, 0, kStartState, 1), 2.5);
}

TEST(ScoreTransition, Additive) {
  CrfModel m(letter_labels(2), word_registry(2));
  const Feature f[] = {{Conjunction{0}, kWildcard, 0}, {Conjunction{1}, kWildcard, 0}};
  const double w[] = {1.0, -0.25};
  m.add_features(f, w);
  EXPECT_EQ(score_transition(m, all_fire(1, 2), 0, kStartState, 0), 0.75);
}

TEST(ScoreTransition, StartOnlyAtZero) {
  CrfModel m(letter_labels(2), word_registry(1));
  EXPECT_THROW(score_transition(m, all_fire(2, 1), 1, kStartState, 0), ValidationError);
}

TEST(ScoreTransition, MatchesFeatureByFeatureSum) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto c = testing::random_case(rng);
    const std::size_t L = c.model.num_labels();
    for (std::size_t t = 0; t < c.obs.length(); ++t) {
      for (int src = t == 0 ? kStartState : 0; src < (t == 0 ? 0 : static_cast<int>(L)); ++src) {
        for (LabelId d = 0; d < static_cast<LabelId>(L); ++d) {
          double expect = 0.0;
          for (std::size_t k = 0; k < c.model.size(); ++k)
            expect += c.model.weights()[k] * c.model.feature(k).value(src, d, c.obs, t);
          EXPECT_EQ(score_transition(c.model, c.obs, t, src, d), expect);
        }
      }
    }
  }
}

TEST(Conjunction, Canonical) {
  EXPECT_EQ(Conjunction({3, 1, 2}), Conjunction({1, 2, 3}));
  EXPECT_EQ(Conjunction({4, 4}), Conjunction({4}));
  EXPECT_EQ(Conjunction{1}.conjoin(Conjunction{1}), Conjunction{1});
  EXPECT_EQ(Conjunction({2, 5}).conjoin(Conjunction({1, 5})), Conjunction({1, 2, 5}));
}

TEST(ExpandCandidate, Modes) {
  const Feature g{Conjunction{0}, kWildcard, 2};
  auto none = expand_candidate(g, ExpansionMode::kNone, 4);
  ASSERT_EQ(none.size(), 1u);
  EXPECT_EQ(none[0], g);
  auto all = expand_candidate(g, ExpansionMode::kAllSources, 4);
  ASSERT_EQ(all.size(), 6u);
  EXPECT_EQ(all[0], g);
  std::set<int> sources;
  for (std::size_t i = 1; i < all.size(); ++i) {
    sources.insert(all[i].source);
    EXPECT_EQ(all[i].destination, 2);
    EXPECT_EQ(all[i].conjunction, g.conjunction);
  }
  EXPECT_EQ(sources, (std::set<int>{kStartState, 0, 1, 2, 3}));
  EXPECT_THROW(expand_candidate(Feature{Conjunction{0}, 1, 2}, ExpansionMode::kNone, 4), ValidationError);
}

TEST(ExpandCandidate, DuplicatesDroppedOnAdd) {
  CrfModel m(letter_labels(4), word_registry(1));
  const Feature existing{Conjunction{0}, 1, 2};
  const double w0[] = {0.5};
  m.add_features(std::span(&existing, 1), w0);
  auto all = expand_candidate(Feature{Conjunction{0}, kWildcard, 2}, ExpansionMode::kAllSources, 4);
  std::vector<double> w(all.size(), 0.0);
  EXPECT_EQ(m.add_features(all, w), 5u);
  EXPECT_EQ(m.size(), 6u);
  EXPECT_EQ(m.weights()[0], 0.5);
}

CrfModel ten_feature_model() {
  CrfModel m(letter_labels(2), word_registry(10));
  std::vector<Feature> f;
  for (TestId k = 0; k < 10; ++k) f.push_back({Conjunction{k}, kWildcard, 0});
  std::vector<double> w(10, 1.0);
  m.add_features(f, w);
  return m;
}

TEST(AddFeatures, Semantics) {
  auto m = ten_feature_model();
  EXPECT_EQ(m.add_features({}, {}), 0u);
  EXPECT_EQ(m.size(), 10u);
  const Feature dup{Conjunction{3}, kWildcard, 0};
  const double one[] = {9.0};
  EXPECT_EQ(m.add_features(std::span(&dup, 1), one), 0u);
  EXPECT_EQ(m.size(), 10u);
  const Feature fresh[] = {{Conjunction{0}, kWildcard, 1}, {Conjunction{1, 2}, kWildcard, 1}, {std::nullopt, 0, 1}};
  const double w[] = {0.1, -0.2, 0.3};
  EXPECT_EQ(m.add_features(fresh, w), 3u);
  ASSERT_EQ(m.size(), 13u);
  EXPECT_EQ(m.weights()[10], 0.1);
  EXPECT_EQ(m.weights()[11], -0.2);
  EXPECT_EQ(m.weights()[12], 0.3);
  EXPECT_EQ(m.find(fresh[1]), 11u);
}

TEST(AddFeatures, RejectsNonFinite) {
  auto m = ten_feature_model();
  const Feature f{Conjunction{0}, kWildcard, 1};
  const double w[] = {std::numeric_limits<double>::infinity()};
  EXPECT_THROW(m.add_features(std::span(&f, 1), w), ValidationError);
  const double nan[] = {std::nan("")};
  EXPECT_THROW(m.add_features(std::span(&f, 1), nan), ValidationError);
  EXPECT_EQ(m.size(), 10u);
}

TEST(Model, EdgeSeeding) {
  CrfModel m(letter_labels(3), word_registry(1));
  seed_edge_features(m);
  EXPECT_EQ(m.size(), 12u);
  EXPECT_TRUE(m.has_conjunction_for(Conjunction{0}, 0) == false);
}

}  // namespace
}  // namespace crfind
