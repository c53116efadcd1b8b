/*
 * Copyright 2026 The hafr Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hafr/dataset.hpp"
#include "hafr/rng.hpp"
#include "hafr/stats.hpp"
#include "json.hpp"

namespace hafr {

struct EvalConfig {
  std::size_t num_negatives = 500;
  double pop_exponent = 0.7;
  std::vector<int> k_values{10};
  int repeats = 10;
  std::uint64_t seed = 0;
  int threads = 1;
  // Test hook: every repeat reuses the repeat-0 stream.
  bool fixed_repeat_seed = false;

  void validate() const {
    if (num_negatives < 1) throw Error("eval: num_negatives must be >= 1");
    if (!(pop_exponent >= 0.0)) throw Error("eval: pop_exponent must be >= 0");
    if (repeats < 1) throw Error("eval: repeats must be >= 1");
    if (threads < 1) throw Error("eval: threads must be >= 1");
    for (int k : k_values) {
      if (k < 1) throw Error("eval: k values must be >= 1");
    }
  }
};

// weight_i = f_i^r with f_i the train interaction count; unseen recipes get
// weight 0 and never serve as negatives.
inline std::vector<double> popularity_weights(const Dataset& data, double r) {
  if (data.train.empty()) {
    throw Error("popularity_weights: empty train split");
  }
  std::vector<double> w(data.num_recipes, 0.0);
  const auto counts = data.train_counts();
  bool any = false;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (counts[i] > 0) {
      w[i] = std::pow(static_cast<double>(counts[i]), r);
      any = any || w[i] > 0.0;
    }
  }
  if (!any) {
    throw Error("popularity_weights: all weights are zero");
  }
  return w;
}

struct NegativeSample {
  std::vector<RecipeIndex> recipes;
  std::size_t shortfall = 0;  // requested minus drawn
};

// Popularity-biased sampling without replacement. Draws are successive
// weighted picks among eligible recipes (weight > 0, never interacted by
// the user, not the positive). Two equivalent routes: alias-table rejection
// when the eligible pool is large relative to the request, exponential keys
// otherwise.
class PopularitySampler {
 public:
  PopularitySampler(const Dataset& data, std::vector<double> weights)
      : data_(&data), weights_(std::move(weights)) {
    if (weights_.size() != data.num_recipes) {
      throw Error("PopularitySampler: weight vector size mismatch");
    }
    total_ = std::accumulate(weights_.begin(), weights_.end(), 0.0);
    positive_count_ = static_cast<std::size_t>(std::count_if(
        weights_.begin(), weights_.end(), [](double w) { return w > 0.0; }));
    build_alias();
  }

  PopularitySampler(const Dataset& data, double pop_exponent)
      : PopularitySampler(data, popularity_weights(data, pop_exponent)) {}

  const std::vector<double>& weights() const { return weights_; }

  NegativeSample sample(UserIndex u, RecipeIndex positive, std::size_t n,
                        RngStream& rng) const {
    const auto seen = data_->all_items(u);
    double excluded_mass = 0.0;
    std::size_t excluded = 0;
    auto excluded_item = [&](RecipeIndex i) {
      return i == positive || std::binary_search(seen.begin(), seen.end(), i);
    };
    for (auto i : seen) {
      if (weights_[i] > 0.0) {
        excluded_mass += weights_[i];
        ++excluded;
      }
    }
    if (weights_[positive] > 0.0 &&
        !std::binary_search(seen.begin(), seen.end(), positive)) {
      excluded_mass += weights_[positive];
      ++excluded;
    }
    const std::size_t eligible = positive_count_ - excluded;
    NegativeSample out;
    if (eligible <= n) {
      // Forced: every eligible recipe, in index order.
      for (RecipeIndex i = 0; i < weights_.size(); ++i) {
        if (weights_[i] > 0.0 && !excluded_item(i)) {
          out.recipes.push_back(i);
        }
      }
      out.shortfall = n - out.recipes.size();
      return out;
    }
    if (4 * n <= eligible && excluded_mass <= 0.5 * total_) {
      out.recipes = sample_rejection(n, rng, excluded_item);
    } else {
      out.recipes = sample_keys(n, rng, excluded_item);
    }
    return out;
  }

  // Exposed for tests: the two routes must agree in distribution.
  template <typename Excluded>
  std::vector<RecipeIndex> sample_rejection(std::size_t n, RngStream& rng,
                                            Excluded&& excluded) const {
    std::vector<RecipeIndex> out;
    out.reserve(n);
    while (out.size() < n) {
      const auto i = draw_alias(rng);
      if (excluded(i) || std::find(out.begin(), out.end(), i) != out.end()) {
        continue;
      }
      out.push_back(i);
    }
    return out;
  }

  template <typename Excluded>
  std::vector<RecipeIndex> sample_keys(std::size_t n, RngStream& rng,
                                       Excluded&& excluded) const {
    std::vector<std::pair<double, RecipeIndex>> keys;
    keys.reserve(weights_.size());
    for (RecipeIndex i = 0; i < weights_.size(); ++i) {
      if (weights_[i] > 0.0 && !excluded(i)) {
        keys.emplace_back(-std::log(rng.uniform_open_zero()) / weights_[i], i);
      }
    }
    n = std::min(n, keys.size());
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(n),
                      keys.end());
    std::vector<RecipeIndex> out(n);
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = keys[j].second;
    }
    return out;
  }

  RecipeIndex draw_alias(RngStream& rng) const {
    const auto slot = static_cast<std::size_t>(rng.below(alias_prob_.size()));
    return rng.uniform() < alias_prob_[slot] ? static_cast<RecipeIndex>(slot)
                                             : alias_[slot];
  }

 private:
  // Vose's alias method.
  void build_alias() {
    const std::size_t n = weights_.size();
    alias_prob_.assign(n, 0.0);
    alias_.assign(n, 0);
    std::vector<double> scaled(n);
    std::vector<std::size_t> small;
    std::vector<std::size_t> large;
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = weights_[i] * static_cast<double>(n) / total_;
      (scaled[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
      const auto s = small.back();
      small.pop_back();
      const auto l = large.back();
      large.pop_back();
      alias_prob_[s] = scaled[s];
      alias_[s] = static_cast<RecipeIndex>(l);
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      (scaled[l] < 1.0 ? small : large).push_back(l);
    }
    for (auto l : large) {
      alias_prob_[l] = 1.0;
    }
    for (auto s : small) {
      // Only reachable through rounding; such slots keep their own index
      // when they carry weight.
      alias_prob_[s] = weights_[s] > 0.0 ? 1.0 : 0.0;
      alias_[s] = static_cast<RecipeIndex>(
          std::max_element(weights_.begin(), weights_.end()) - weights_.begin());
    }
  }

  const Dataset* data_;
  std::vector<double> weights_;
  double total_ = 0.0;
  std::size_t positive_count_ = 0;
  std::vector<double> alias_prob_;
  std::vector<RecipeIndex> alias_;
};

// One positive and its sampled negatives, scored.
struct RankingInstance {
  UserIndex user = 0;
  RecipeIndex positive = 0;
  std::vector<RecipeIndex> negatives;
  double positive_score = 0.0;
  std::vector<double> negative_scores;
};

// (#negatives below the positive + ½ #ties) / #negatives
inline double auc(const RankingInstance& inst) {
  if (inst.negative_scores.empty()) {
    return 0.0;
  }
  double wins = 0.0;
  for (double s : inst.negative_scores) {
    if (s < inst.positive_score) {
      wins += 1.0;
    } else if (s == inst.positive_score) {
      wins += 0.5;
    }
  }
  return wins / static_cast<double>(inst.negative_scores.size());
}

// 1-based rank under descending score, ties broken by ascending recipe index.
inline std::size_t rank_of_positive(const RankingInstance& inst) {
  std::size_t ahead = 0;
  for (std::size_t j = 0; j < inst.negatives.size(); ++j) {
    const double s = inst.negative_scores[j];
    if (s > inst.positive_score ||
        (s == inst.positive_score && inst.negatives[j] < inst.positive)) {
      ++ahead;
    }
  }
  return ahead + 1;
}

inline double ndcg_at_k(const RankingInstance& inst, int k) {
  const auto rank = rank_of_positive(inst);
  if (rank > static_cast<std::size_t>(k)) {
    return 0.0;
  }
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

inline double recall_at_k(const RankingInstance& inst, int k) {
  return rank_of_positive(inst) <= static_cast<std::size_t>(k) ? 1.0 : 0.0;
}

struct MetricSeries {
  std::string metric;  // "auc", "ndcg", "recall"
  int k = 0;           // 0 for auc
  std::vector<double> per_repeat;
  double mean = 0.0;

  std::string label() const {
    if (metric == "auc") return "AUC";
    return (metric == "ndcg" ? "NDCG@" : "Recall@") + std::to_string(k);
  }
};

struct EvalReport {
  std::string model;
  std::string variant;
  std::vector<MetricSeries> metrics;
  std::size_t instances = 0;
  std::size_t skipped = 0;
  std::size_t shortfall = 0;
  std::vector<EvalReport> groups;

  const MetricSeries& get(const std::string& metric, int k = 0) const {
    for (const auto& m : metrics) {
      if (m.metric == metric && (metric == "auc" || m.k == k)) {
        return m;
      }
    }
    throw Error("report has no metric " + metric + "@" + std::to_string(k));
  }
  double mean(const std::string& metric, int k = 0) const {
    return get(metric, k).mean;
  }
};

struct MetricComparison {
  std::string label;
  double mean_a = 0.0;
  double mean_b = 0.0;
  stats::TestResult welch;
};

inline std::vector<MetricComparison> compare_reports(const EvalReport& a,
                                                     const EvalReport& b) {
  std::vector<MetricComparison> out;
  for (const auto& ma : a.metrics) {
    const auto& mb = b.get(ma.metric, ma.k);
    MetricComparison c{ma.label(), ma.mean, mb.mean, {}};
    if (ma.per_repeat.size() >= 2 && mb.per_repeat.size() >= 2) {
      c.welch = stats::welch_t_test(ma.per_repeat, mb.per_repeat);
    }
    out.push_back(c);
  }
  return out;
}

// Models that can hoist recipe-side work out of per-pair scoring expose
// scorer().user(u).score(i).
template <typename Model>
concept HasScorer = requires(const Model& m) { m.scorer().user(0).score(0); };

namespace detail {

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t j = 0; j < n; ++j) {
      fn(j);
    }
    return;
  }
  const auto workers =
      std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t j = w; j < n; j += workers) {
          fn(j);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) {
    t.join();
  }
  for (auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
}

}  // namespace detail

// Scores every (user, positive) against freshly sampled negatives. Each
// instance draws from its own stream (seed, repeat, instance), so results do
// not depend on the thread count.
template <typename Model>
std::vector<RankingInstance> build_instances(
    const Model& model, const Dataset& data, std::span<const Interaction> pairs,
    const PopularitySampler& sampler, const EvalConfig& cfg, int repeat,
    std::size_t* skipped = nullptr, std::size_t* shortfall = nullptr) {
  std::vector<RankingInstance> out(pairs.size());
  std::vector<std::uint8_t> ok(pairs.size(), 0);
  std::vector<std::size_t> shortfalls(pairs.size(), 0);
  const int stream_repeat = cfg.fixed_repeat_seed ? 0 : repeat;
  auto scorer = [&] {
    if constexpr (HasScorer<Model>) {
      return model.scorer();
    } else {
      return 0;
    }
  }();
  detail::parallel_for(pairs.size(), cfg.threads, [&](std::size_t j) {
    const auto& x = pairs[j];
    auto rng = derive_stream(cfg.seed, "eval/repeat/" + std::to_string(stream_repeat), j);
    auto neg = sampler.sample(x.user, x.recipe, cfg.num_negatives, rng);
    shortfalls[j] = neg.shortfall;
    if (neg.recipes.empty()) {
      return;
    }
    auto& inst = out[j];
    inst.user = x.user;
    inst.positive = x.recipe;
    inst.negatives = std::move(neg.recipes);
    inst.negative_scores.resize(inst.negatives.size());
    if constexpr (HasScorer<Model>) {
      auto view = scorer.user(x.user);
      inst.positive_score = static_cast<double>(view.score(x.recipe));
      for (std::size_t n = 0; n < inst.negatives.size(); ++n) {
        inst.negative_scores[n] =
            static_cast<double>(view.score(inst.negatives[n]));
      }
    } else {
      (void)scorer;
      inst.positive_score = static_cast<double>(model.score(x.user, x.recipe));
      for (std::size_t n = 0; n < inst.negatives.size(); ++n) {
        inst.negative_scores[n] =
            static_cast<double>(model.score(x.user, inst.negatives[n]));
      }
    }
    ok[j] = 1;
  });
  std::vector<RankingInstance> kept;
  kept.reserve(out.size());
  std::size_t skip = 0;
  std::size_t short_total = 0;
  for (std::size_t j = 0; j < out.size(); ++j) {
    short_total += shortfalls[j];
    if (ok[j]) {
      kept.push_back(std::move(out[j]));
    } else {
      ++skip;
    }
  }
  (void)data;
  if (skipped) *skipped = skip;
  if (shortfall) *shortfall = short_total;
  return kept;
}

// Metrics averaged over instances within a repeat, then over repeats.
template <typename Model>
EvalReport evaluate_pairs(const Model& model, const Dataset& data,
                          std::span<const Interaction> pairs,
                          const EvalConfig& cfg,
                          const PopularitySampler* sampler_in = nullptr) {
  cfg.validate();
  std::optional<PopularitySampler> own;
  if (!sampler_in) {
    own.emplace(data, cfg.pop_exponent);
  }
  const PopularitySampler& sampler = sampler_in ? *sampler_in : *own;
  EvalReport report;
  report.model = std::string(model.descriptor().at("kind").template get<std::string>());
  report.variant = model.variant_name();
  report.metrics.push_back({"auc", 0, {}, 0.0});
  for (int k : cfg.k_values) {
    report.metrics.push_back({"ndcg", k, {}, 0.0});
  }
  for (int k : cfg.k_values) {
    report.metrics.push_back({"recall", k, {}, 0.0});
  }
  for (int r = 0; r < cfg.repeats; ++r) {
    std::size_t skipped = 0;
    std::size_t shortfall = 0;
    const auto instances =
        build_instances(model, data, pairs, sampler, cfg, r, &skipped, &shortfall);
    if (r == 0) {
      report.instances = instances.size();
      report.skipped = skipped;
      report.shortfall = shortfall;
    }
    const double n = static_cast<double>(std::max<std::size_t>(instances.size(), 1));
    for (auto& m : report.metrics) {
      double total = 0.0;
      for (const auto& inst : instances) {
        if (m.metric == "auc") {
          total += auc(inst);
        } else if (m.metric == "ndcg") {
          total += ndcg_at_k(inst, m.k);
        } else {
          total += recall_at_k(inst, m.k);
        }
      }
      m.per_repeat.push_back(total / n);
    }
  }
  for (auto& m : report.metrics) {
    m.mean = stats::mean(m.per_repeat);
  }
  return report;
}

template <typename Model>
EvalReport evaluate(const Model& model, const Dataset& data,
                    const EvalConfig& cfg) {
  if (data.test.empty()) {
    throw Error("evaluate: empty test split");
  }
  return evaluate_pairs(model, data, data.test, cfg);
}

// Test pairs ordered by their recipe's train popularity (ties by recipe,
// then user), cut into `groups` equal slices with the remainder going to the
// last (most popular) slice.
inline std::vector<std::vector<Interaction>> popularity_groups(
    const Dataset& data, std::size_t groups) {
  if (groups < 1 || data.test.size() < groups) {
    throw Error("popularity_groups: test split smaller than group count");
  }
  auto pairs = data.test;
  const auto counts = data.train_counts();
  std::stable_sort(pairs.begin(), pairs.end(),
                   [&](const Interaction& a, const Interaction& b) {
                     return std::tuple(counts[a.recipe], a.recipe, a.user) <
                            std::tuple(counts[b.recipe], b.recipe, b.user);
                   });
  const std::size_t base = pairs.size() / groups;
  std::vector<std::vector<Interaction>> out(groups);
  std::size_t pos = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t len = g + 1 == groups ? pairs.size() - pos : base;
    out[g].assign(pairs.begin() + static_cast<std::ptrdiff_t>(pos),
                  pairs.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return out;
}

template <typename Model>
EvalReport popularity_group_report(const Model& model, const Dataset& data,
                                   const EvalConfig& cfg,
                                   std::size_t groups = 4) {
  EvalReport report = evaluate(model, data, cfg);
  const PopularitySampler sampler(data, cfg.pop_exponent);
  for (const auto& slice : popularity_groups(data, groups)) {
    report.groups.push_back(evaluate_pairs(model, data, slice, cfg, &sampler));
  }
  return report;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["model"] = r.model;
  j["variant"] = r.variant;
  j["instances"] = r.instances;
  j["skipped"] = r.skipped;
  j["shortfall"] = r.shortfall;
  auto& metrics = j["metrics"];
  metrics = nlohmann::ordered_json::array();
  for (const auto& m : r.metrics) {
    metrics.push_back({{"metric", m.metric},
                       {"k", m.k},
                       {"mean", m.mean},
                       {"per_repeat", m.per_repeat}});
  }
  if (!r.groups.empty()) {
    auto& groups = j["popularity_groups"];
    groups = nlohmann::ordered_json::array();
    for (const auto& g : r.groups) {
      groups.push_back(report_to_json(g));
    }
  }
  return j;
}

// Flat rows: model, variant, metric, k, repeat, value. Group rows carry the
// metric name suffixed with "/g<index>".
inline std::string report_to_tsv(const EvalReport& r, bool header = true) {
  std::ostringstream out;
  out.precision(17);
  if (header) {
    out << "model\tvariant\tmetric\tk\trepeat\tvalue\n";
  }
  auto emit = [&](const EvalReport& rep, const std::string& suffix) {
    for (const auto& m : rep.metrics) {
      for (std::size_t j = 0; j < m.per_repeat.size(); ++j) {
        out << r.model << '\t' << r.variant << '\t' << m.metric << suffix
            << '\t' << m.k << '\t' << j << '\t' << m.per_repeat[j] << '\n';
      }
    }
  };
  emit(r, "");
  for (std::size_t g = 0; g < r.groups.size(); ++g) {
    emit(r.groups[g], "/g" + std::to_string(g + 1));
  }
  return out.str();
}

// AUC, NDCG@10, Recall@10 first; remaining cutoffs follow.
// One row per report and one per popularity group (g1 = least popular).
inline std::string summary_table(const std::vector<EvalReport>& reports,
                                 int k = 10) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << "model\tvariant\tsubset\tinstances\tAUC\tNDCG@" << k << "\tRecall@"
      << k << '\n';
  auto row = [&](const EvalReport& r, const std::string& subset) {
    out << r.model << '\t' << r.variant << '\t' << subset << '\t'
        << r.instances << '\t' << r.mean("auc") << '\t';
    try {
      out << r.mean("ndcg", k) << '\t' << r.mean("recall", k) << '\n';
    } catch (const Error&) {
      out << "-\t-\n";
    }
  };
  for (const auto& r : reports) {
    row(r, "all");
    for (std::size_t g = 0; g < r.groups.size(); ++g) {
      row(r.groups[g], "g" + std::to_string(g + 1));
    }
  }
  return out.str();
}

}  // namespace hafr
