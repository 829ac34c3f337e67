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

// Penalized conditional log-likelihood, its gradient, and L-BFGS.

#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "crfind/error.hpp"
#include "crfind/feature_model.hpp"
#include "crfind/inference.hpp"
#include "crfind/parallel.hpp"

namespace crfind {

struct Instance {
  ObservationMatrix obs;
  std::vector<LabelId> gold;
};

// Training instances plus a cache of which features are on where. The cache
// follows the model's feature list; call sync() after features are added.
class TrainingSet {
 public:
  TrainingSet() = default;
  explicit TrainingSet(std::vector<Instance> instances) : instances_(std::move(instances)) {
    for (const auto& in : instances_)
      if (in.obs.length() != in.gold.size() || in.gold.empty())
        throw ValidationError("training instance with mismatched or empty label sequence");
    reset_active();
  }

  std::size_t size() const { return instances_.size(); }
  const Instance& instance(std::size_t j) const { return instances_[j]; }
  const std::vector<Instance>& instances() const { return instances_; }
  const ActiveFeatures& active(std::size_t j) const { return active_[j]; }
  std::size_t synced_features() const { return synced_; }

  void sync(const CrfModel& model) {
    if (model.size() < synced_) {
      synced_ = 0;
      reset_active();
    }
    if (model.size() == synced_) return;
    FeatureIndex index(model, synced_);
    for (std::size_t j = 0; j < instances_.size(); ++j) active_[j].extend(index, instances_[j].obs);
    synced_ = model.size();
  }

 private:
  void reset_active() {
    active_.assign(instances_.size(), ActiveFeatures{});
    for (std::size_t j = 0; j < instances_.size(); ++j) active_[j].by_position.resize(instances_[j].obs.length());
  }

  std::vector<Instance> instances_;
  std::vector<ActiveFeatures> active_;
  std::size_t synced_ = 0;
};

struct Objective {
  double value = 0.0;
  std::vector<double> gradient;
};

namespace detail {

// Adds instance j's log-likelihood (and gradient, if non-null) excluding the
// prior.
inline double accumulate_instance(const CrfModel& model, const ActiveFeatures& active, const Instance& in,
                                  std::span<const double> weights, double* grad) {
  const Potentials pot = compute_potentials(model, active, weights);
  const std::size_t T = in.gold.size();
  if (!grad) {
    const Lattice lat = forward(pot);
    return path_score(pot, in.gold) - lat.log_z;
  }
  const Lattice lat = marginals(pot, true);
  auto visit = [&](std::size_t t, std::size_t k) {
    const Feature& f = model.feature(k);
    const int prev = t == 0 ? kStartState : in.gold[t - 1];
    if (f.matches_states(prev, in.gold[t])) grad[k] += 1.0;
    const auto dst = static_cast<std::size_t>(f.destination);
    double expected = 0.0;
    if (t == 0) {
      if (f.source == kWildcard || f.source == kStartState) expected = lat.unary(0, dst);
    } else if (f.source == kWildcard) {
      expected = lat.unary(t, dst);
    } else if (f.source >= 0) {
      expected = lat.pairwise(t, static_cast<std::size_t>(f.source), dst);
    }
    grad[k] -= expected;
  };
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k : active.transitions) visit(t, k);
    for (std::size_t k : active.by_position[t]) visit(t, k);
  }
  return path_score(pot, in.gold) - lat.log_z;
}

}  // namespace detail

// Sentences are summed in a fixed number of lanes (sentence j goes to lane
// j % kLanes), lanes combined in order, so results do not depend on the
// thread count.
inline constexpr std::size_t kLanes = 8;

// L(weights) = sum_j log P(gold_j | o_j) - sum_k w_k^2 / (2 var), with its
// gradient when requested.
inline Objective evaluate_objective(const CrfModel& model, TrainingSet& data, std::span<const double> weights,
                                    bool with_gradient = true, std::size_t threads = 1) {
  if (weights.size() != model.size()) throw ValidationError("weight vector size does not match feature count");
  data.sync(model);
  const std::size_t K = model.size();
  std::vector<double> lane_value(kLanes, 0.0);
  std::vector<std::vector<double>> lane_grad(with_gradient ? kLanes : 0, std::vector<double>(K, 0.0));
  parallel_for(kLanes, threads, [&](std::size_t lane) {
    double* g = with_gradient ? lane_grad[lane].data() : nullptr;
    for (std::size_t j = lane; j < data.size(); j += kLanes)
      lane_value[lane] += detail::accumulate_instance(model, data.active(j), data.instance(j), weights, g);
  });
  Objective obj;
  for (double v : lane_value) obj.value += v;
  const double var = model.variance();
  for (std::size_t k = 0; k < K; ++k) obj.value -= weights[k] * weights[k] / (2.0 * var);
  if (with_gradient) {
    obj.gradient.assign(K, 0.0);
    for (const auto& lg : lane_grad)
      for (std::size_t k = 0; k < K; ++k) obj.gradient[k] += lg[k];
    for (std::size_t k = 0; k < K; ++k) obj.gradient[k] -= weights[k] / var;
  }
  return obj;
}

inline double log_likelihood(const CrfModel& model, TrainingSet& data, std::size_t threads = 1) {
  return evaluate_objective(model, data, model.weights(), false, threads).value;
}

inline std::vector<double> gradient(const CrfModel& model, TrainingSet& data, std::size_t threads = 1) {
  return evaluate_objective(model, data, model.weights(), true, threads).gradient;
}

// ---------------------------------------------------------------------------
// L-BFGS

struct LbfgsOptions {
  int max_iterations = 10;
  int history = 7;
  double gradient_tolerance = 1e-4;
  // Armijo sufficient-decrease constant and step halving budget.
  double armijo = 1e-4;
  int max_halvings = 40;
  // Called after every accepted iteration with (iteration, value).
  std::function<void(int, double)> on_iteration;
};

struct LbfgsReport {
  int iterations = 0;
  double initial_value = 0.0;
  double final_value = 0.0;
  double gradient_norm = 0.0;
  bool converged = false;
  bool line_search_failed = false;
};

// Minimizes fn over x, where fn(x, grad) returns the value and fills grad.
// Two-loop recursion with backtracking Armijo line search.
template <typename Fn>
LbfgsReport lbfgs_minimize(Fn&& fn, std::vector<double>& x, const LbfgsOptions& opts) {
  const std::size_t n = x.size();
  auto dot = [n](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
  };
  std::vector<double> g(n);
  double f = fn(x, g);
  LbfgsReport rep;
  rep.initial_value = f;
  rep.final_value = f;
  rep.gradient_norm = std::sqrt(dot(g, g));
  if (rep.gradient_norm < opts.gradient_tolerance) {
    rep.converged = true;
    return rep;
  }

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> hist;
  std::vector<double> d(n), x_new(n), g_new(n), alpha(static_cast<std::size_t>(std::max(opts.history, 1)));

  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      // d = -H g
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
      for (std::size_t h = hist.size(); h-- > 0;) {
        alpha[h] = hist[h].rho * dot(hist[h].s, d);
        for (std::size_t i = 0; i < n; ++i) d[i] -= alpha[h] * hist[h].y[i];
      }
      if (!hist.empty()) {
        const auto& last = hist.back();
        const double scale = dot(last.s, last.y) / dot(last.y, last.y);
        for (double& v : d) v *= scale;
      }
      for (std::size_t h = 0; h < hist.size(); ++h) {
        const double beta = hist[h].rho * dot(hist[h].y, d);
        for (std::size_t i = 0; i < n; ++i) d[i] += (alpha[h] - beta) * hist[h].s[i];
      }
      double slope = dot(g, d);
      if (!(slope < 0.0)) {
        hist.clear();
        for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
        slope = dot(g, d);
      }

      double step = 1.0;
      double f_new = f;
      for (int halving = 0; halving <= opts.max_halvings; ++halving, step *= 0.5) {
        for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + step * d[i];
        f_new = fn(x_new, g_new);
        if (std::isfinite(f_new) && f_new <= f + opts.armijo * step * slope) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        // Retry once along the steepest descent direction.
        if (hist.empty()) break;
        hist.clear();
        continue;
      }
      Pair p{std::vector<double>(n), std::vector<double>(n), 0.0};
      for (std::size_t i = 0; i < n; ++i) {
        p.s[i] = x_new[i] - x[i];
        p.y[i] = g_new[i] - g[i];
      }
      const double sy = dot(p.s, p.y);
      if (sy > 1e-12 * std::sqrt(dot(p.s, p.s) * dot(p.y, p.y)) && sy > 0.0) {
        p.rho = 1.0 / sy;
        hist.push_back(std::move(p));
        if (hist.size() > static_cast<std::size_t>(std::max(opts.history, 1))) hist.pop_front();
      } else {
        // No positive curvature along this step: the stored pairs no longer
        // describe the local shape.
        hist.clear();
      }
      x.swap(x_new);
      g.swap(g_new);
      f = f_new;
    }
    if (!accepted) {
      rep.line_search_failed = true;
      break;
    }
    rep.iterations = iter;
    rep.final_value = f;
    rep.gradient_norm = std::sqrt(dot(g, g));
    if (opts.on_iteration) opts.on_iteration(iter, f);
    if (rep.gradient_norm < opts.gradient_tolerance) {
      rep.converged = true;
      break;
    }
  }
  rep.final_value = f;
  rep.gradient_norm = std::sqrt(dot(g, g));
  return rep;
}

// Maximizes the penalized log-likelihood over the model's weights, starting
// from the current ones. Reported values are log-likelihoods (not negated).
inline LbfgsReport lbfgs_optimize(CrfModel& model, TrainingSet& data, LbfgsOptions opts = {},
                                  std::size_t threads = 1) {
  if (opts.max_iterations < 0) throw ValidationError("max_iterations must be non-negative");
  data.sync(model);
  std::vector<double> x = model.weights();
  auto user_cb = opts.on_iteration;
  if (user_cb) opts.on_iteration = [&](int it, double v) { user_cb(it, -v); };
  auto fn = [&](const std::vector<double>& w, std::vector<double>& g) {
    Objective obj = evaluate_objective(model, data, w, true, threads);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = -obj.gradient[i];
    return -obj.value;
  };
  LbfgsReport rep;
  if (opts.max_iterations == 0 || x.empty()) {
    std::vector<double> g(x.size());
    rep.initial_value = rep.final_value = -fn(x, g);
    double norm = 0.0;
    for (double v : g) norm += v * v;
    rep.gradient_norm = std::sqrt(norm);
    rep.converged = rep.gradient_norm < opts.gradient_tolerance;
    return rep;
  }
  rep = lbfgs_minimize(fn, x, opts);
  rep.initial_value = -rep.initial_value;
  rep.final_value = -rep.final_value;
  model.set_weights(std::move(x));
  return rep;
}

}  // namespace crfind
