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

// Exact inference on the linear-chain lattice, in natural-log space.
//
//   log_alpha[0][s]   = score(0, START, s)
//   log_alpha[t+1][s] = logsumexp_s' (log_alpha[t][s'] + score(t+1, s', s))
//   log_beta[T-1][s]  = 0
//   log_beta[t][s]    = logsumexp_s' (score(t+1, s, s') + log_beta[t+1][s'])
//   log_z             = logsumexp_s log_alpha[T-1][s]

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "crfind/error.hpp"
#include "crfind/feature_model.hpp"
#include "crfind/numeric.hpp"

namespace crfind {

struct Lattice {
  std::size_t length = 0;
  std::size_t num_labels = 0;
  std::vector<double> log_alpha;  // T x L
  std::vector<double> log_beta;   // T x L
  double log_z = 0.0;
  std::vector<double> gamma;      // T x L
  std::vector<double> xi;         // (T-1) x L x L, transitions into t = 1..T-1

  double alpha(std::size_t t, std::size_t s) const { return log_alpha[t * num_labels + s]; }
  double beta(std::size_t t, std::size_t s) const { return log_beta[t * num_labels + s]; }
  double unary(std::size_t t, std::size_t s) const { return gamma[t * num_labels + s]; }
  // P(s_{t-1} = prev, s_t = cur | o) for t >= 1.
  double pairwise(std::size_t t, std::size_t prev, std::size_t cur) const {
    return xi[((t - 1) * num_labels + prev) * num_labels + cur];
  }
  // P(s_{-1} = START, s_0 = cur | o); the START row of the pairwise table.
  double start_pairwise(std::size_t cur) const { return gamma[cur]; }
};

inline Lattice forward(const Potentials& pot) {
  const std::size_t T = pot.length();
  const std::size_t L = pot.num_labels();
  if (T == 0) throw ValidationError("forward: empty sequence");
  Lattice lat;
  lat.length = T;
  lat.num_labels = L;
  lat.log_alpha.assign(T * L, 0.0);
  for (std::size_t s = 0; s < L; ++s) lat.log_alpha[s] = pot.at(0, pot.start_slot(), s);
  std::vector<double> buf(L);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < L; ++s) {
      for (std::size_t p = 0; p < L; ++p) buf[p] = lat.log_alpha[(t - 1) * L + p] + pot.at(t, p, s);
      lat.log_alpha[t * L + s] = logsumexp(buf);
    }
  }
  lat.log_z = logsumexp(std::span<const double>(lat.log_alpha).subspan((T - 1) * L, L));
  return lat;
}

inline std::vector<double> backward(const Potentials& pot) {
  const std::size_t T = pot.length();
  const std::size_t L = pot.num_labels();
  if (T == 0) throw ValidationError("backward: empty sequence");
  std::vector<double> log_beta(T * L, 0.0);
  std::vector<double> buf(L);
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t s = 0; s < L; ++s) {
      for (std::size_t n = 0; n < L; ++n) buf[n] = pot.at(t + 1, s, n) + log_beta[(t + 1) * L + n];
      log_beta[t * L + s] = logsumexp(buf);
    }
  }
  return log_beta;
}

// log Z recovered from the backward table.
inline double backward_log_z(const Potentials& pot, const std::vector<double>& log_beta) {
  const std::size_t L = pot.num_labels();
  std::vector<double> buf(L);
  for (std::size_t s = 0; s < L; ++s) buf[s] = pot.at(0, pot.start_slot(), s) + log_beta[s];
  return logsumexp(buf);
}

// Forward, backward and the unary (and optionally pairwise) marginals.
inline Lattice marginals(const Potentials& pot, bool pairwise = true) {
  Lattice lat = forward(pot);
  lat.log_beta = backward(pot);
  const std::size_t T = lat.length;
  const std::size_t L = lat.num_labels;
  lat.gamma.resize(T * L);
  for (std::size_t i = 0; i < T * L; ++i) lat.gamma[i] = std::exp(lat.log_alpha[i] + lat.log_beta[i] - lat.log_z);
  if (pairwise && T > 1) {
    lat.xi.resize((T - 1) * L * L);
    for (std::size_t t = 1; t < T; ++t)
      for (std::size_t p = 0; p < L; ++p)
        for (std::size_t s = 0; s < L; ++s)
          lat.xi[((t - 1) * L + p) * L + s] =
              std::exp(lat.alpha(t - 1, p) + pot.at(t, p, s) + lat.beta(t, s) - lat.log_z);
  }
  return lat;
}

inline Lattice marginals(const CrfModel& model, const ObservationMatrix& obs, bool pairwise = true) {
  return marginals(compute_potentials(model, obs), pairwise);
}

struct ViterbiResult {
  std::vector<LabelId> path;
  double score = 0.0;
};

// Highest-scoring state sequence. Ties go to the lowest label index at
// every backpointer decision and at the final state.
inline ViterbiResult viterbi(const Potentials& pot) {
  const std::size_t T = pot.length();
  const std::size_t L = pot.num_labels();
  if (T == 0) throw ValidationError("viterbi: empty sequence");
  std::vector<double> delta(T * L);
  std::vector<std::size_t> back(T * L, 0);
  for (std::size_t s = 0; s < L; ++s) delta[s] = pot.at(0, pot.start_slot(), s);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < L; ++s) {
      std::size_t best = 0;
      double best_score = delta[(t - 1) * L] + pot.at(t, 0, s);
      for (std::size_t p = 1; p < L; ++p) {
        const double v = delta[(t - 1) * L + p] + pot.at(t, p, s);
        if (v > best_score) {
          best_score = v;
          best = p;
        }
      }
      delta[t * L + s] = best_score;
      back[t * L + s] = best;
    }
  }
  std::size_t last = 0;
  for (std::size_t s = 1; s < L; ++s)
    if (delta[(T - 1) * L + s] > delta[(T - 1) * L + last]) last = s;
  ViterbiResult r;
  r.score = delta[(T - 1) * L + last];
  r.path.resize(T);
  r.path[T - 1] = static_cast<LabelId>(last);
  for (std::size_t t = T - 1; t > 0; --t) {
    last = back[t * L + last];
    r.path[t - 1] = static_cast<LabelId>(last);
  }
  return r;
}

inline ViterbiResult viterbi(const CrfModel& model, const ObservationMatrix& obs) {
  return viterbi(compute_potentials(model, obs));
}

inline Lattice forward(const CrfModel& model, const ObservationMatrix& obs) {
  return forward(compute_potentials(model, obs));
}

inline std::vector<double> backward(const CrfModel& model, const ObservationMatrix& obs) {
  return backward(compute_potentials(model, obs));
}

// Unnormalized log score of a given state path.
inline double path_score(const Potentials& pot, std::span<const LabelId> path) {
  double total = pot.at(0, pot.start_slot(), static_cast<std::size_t>(path[0]));
  for (std::size_t t = 1; t < path.size(); ++t)
    total += pot.at(t, static_cast<std::size_t>(path[t - 1]), static_cast<std::size_t>(path[t]));
  return total;
}

}  // namespace crfind
