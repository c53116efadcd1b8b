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

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hafr/dataset.hpp"
#include "hafr/evaluation.hpp"
#include "hafr/numeric.hpp"
#include "hafr/rng.hpp"
#include "json.hpp"

namespace hafr {

struct TrainConfig {
  int embedding_dim = 64;
  int attention_dim = 128;
  int output_hidden = 0;
  double learning_rate = 0.05;
  double lambda_embed = 0.1;
  double lambda_image = 0.01;
  double lambda_mlp = 1.0;
  std::size_t batch_size = 512;
  int max_epochs = 50;
  int patience = 10;
  std::uint64_t seed = 0;
  // A HAFR variant name or a baseline kind (mf-bpr, fm, vbpr, fm-vbpr).
  std::string variant = "hafr";
  std::size_t valid_negatives = 100;
  double pop_exponent = 0.7;

  void validate() const {
    if (embedding_dim < 1 || attention_dim < 1 || output_hidden < 0) {
      throw Error("train: dimensions must be positive");
    }
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw Error("train: learning_rate must be finite and >= 0");
    }
    if (!(lambda_embed >= 0.0) || !(lambda_image >= 0.0) ||
        !(lambda_mlp >= 0.0)) {
      throw Error("train: regularization coefficients must be >= 0");
    }
    if (batch_size < 1) throw Error("train: batch_size must be >= 1");
    if (max_epochs < 1) throw Error("train: max_epochs must be >= 1");
    if (patience < 0 || patience > max_epochs) {
      throw Error("train: patience must lie in [0, max_epochs]");
    }
    if (valid_negatives < 1) throw Error("train: valid_negatives must be >= 1");
  }
};

struct Triple {
  UserIndex u = 0;
  RecipeIndex i = 0;
  RecipeIndex k = 0;
};

// Uniform over recipes outside the user's train positives, by rejection.
inline RecipeIndex sample_negative(const Dataset& data, UserIndex u,
                                   RngStream& rng) {
  const auto positives = data.train_items(u);
  if (positives.size() >= data.num_recipes) {
    throw Error("sample_negative: user " + std::to_string(u) +
                " has interacted with every recipe");
  }
  for (;;) {
    const auto k = static_cast<RecipeIndex>(rng.below(data.num_recipes));
    if (!std::binary_search(positives.begin(), positives.end(), k)) {
      return k;
    }
  }
}

struct BprLoss {
  double loss = 0.0;
  double grad = 0.0;  // d loss / d(ŷ_ui − ŷ_uk)
};

// −ln σ(Δ) = softplus(−Δ)
inline BprLoss bpr_loss(double pos_score, double neg_score) {
  const double d = pos_score - neg_score;
  const double x = -d;
  const double softplus =
      x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  const double sig_neg = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                  : std::exp(x) / (1.0 + std::exp(x));
  return {softplus, -sig_neg};
}

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  std::size_t batches = 0;
  std::size_t triples = 0;
};

// Draws the triples of one epoch in visiting order.
inline std::vector<Triple> epoch_triples(const Dataset& data,
                                         std::uint64_t seed, int epoch) {
  std::vector<Triple> out(data.train.size());
  std::vector<std::uint32_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0u);
  auto shuffle_rng = derive_stream(seed, "train/shuffle",
                                   static_cast<std::uint64_t>(epoch));
  shuffle_rng.shuffle(std::span<std::uint32_t>(order));
  auto neg_rng = derive_stream(seed, "train/negatives",
                               static_cast<std::uint64_t>(epoch));
  for (std::size_t j = 0; j < order.size(); ++j) {
    const auto& x = data.train[order[j]];
    out[j] = {x.user, x.recipe, sample_negative(data, x.user, neg_rng)};
  }
  return out;
}

// One batch: Σ BPR over the triples plus λ‖θ‖² over touched columns, then
// one Adagrad step. Returns the batch objective.
template <typename Model>
double train_batch(Model& model, std::span<const Triple> batch,
                   double learning_rate) {
  using Real = typename Model::real_type;
  auto& params = model.params();
  double total = 0.0;
  for (const auto& t : batch) {
    const auto pos = model.forward(t.u, t.i);
    const auto neg = model.forward(t.u, t.k);
    const auto l = bpr_loss(static_cast<double>(pos.score),
                            static_cast<double>(neg.score));
    total += l.loss;
    model.backward(pos, neg, static_cast<Real>(l.grad));
  }
  total += static_cast<double>(params.l2_penalty());
  params.apply_l2();
  if (!std::isfinite(total)) {
    params.zero_grad();
    throw NumericError("non-finite batch loss");
  }
  params.adagrad_step(static_cast<Real>(learning_rate));
  return total;
}

template <typename Model>
EpochStats train_epoch(Model& model, const Dataset& data,
                       const TrainConfig& cfg, int epoch) {
  if (data.train.empty()) {
    throw Error("train_epoch: empty train split");
  }
  const auto triples = epoch_triples(data, cfg.seed, epoch);
  EpochStats stats;
  stats.epoch = epoch;
  double total = 0.0;
  for (std::size_t start = 0; start < triples.size(); start += cfg.batch_size) {
    const auto len = std::min(cfg.batch_size, triples.size() - start);
    try {
      total += train_batch(
          model, std::span<const Triple>(triples).subspan(start, len),
          cfg.learning_rate);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                         std::to_string(stats.batches) + ": " + e.what());
    }
    ++stats.batches;
  }
  stats.triples = triples.size();
  stats.mean_loss = total / static_cast<double>(triples.size());
  return stats;
}

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> valid_auc;
  double wall_ms = 0.0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["mean_loss"] = mean_loss;
    j["valid_auc"] = valid_auc ? nlohmann::ordered_json(*valid_auc)
                               : nlohmann::ordered_json(nullptr);
    j["wall_ms"] = wall_ms;
    return j;
  }
};

struct FitResult {
  std::vector<EpochLog> log;
  int best_epoch = 0;
  std::optional<double> best_valid_auc;
  std::size_t valid_negatives = 0;
};

template <typename Model>
double validation_auc(const Model& model, const Dataset& data,
                      const PopularitySampler& sampler, const TrainConfig& cfg) {
  EvalConfig ec;
  ec.num_negatives = cfg.valid_negatives;
  ec.pop_exponent = cfg.pop_exponent;
  ec.repeats = 1;
  ec.k_values = {10};
  ec.seed = derive_stream(cfg.seed, "train/valid").key();
  return evaluate_pairs(model, data, data.valid, ec, &sampler).mean("auc");
}

// Trains until max_epochs or until `patience` epochs pass without a new
// best validation AUC, then restores the best parameters. Without a
// validation split the last epoch wins.
template <typename Model>
FitResult fit(Model& model, const Dataset& data, const TrainConfig& cfg,
              const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  FitResult result;
  result.valid_negatives = cfg.valid_negatives;
  std::optional<PopularitySampler> sampler;
  if (!data.valid.empty()) {
    sampler.emplace(data, cfg.pop_exponent);
  }
  auto best = model.params();
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto stats = train_epoch(model, data, cfg, epoch);
    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss = stats.mean_loss;
    if (sampler) {
      entry.valid_auc = validation_auc(model, data, *sampler, cfg);
    }
    entry.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();
    result.log.push_back(entry);
    if (on_epoch) {
      on_epoch(entry);
    }
    const bool improved =
        !entry.valid_auc || !result.best_valid_auc ||
        *entry.valid_auc > *result.best_valid_auc;
    if (improved) {
      result.best_epoch = epoch;
      result.best_valid_auc = entry.valid_auc;
      best = model.params();
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      break;
    }
  }
  const auto steps = model.params().steps();
  model.params() = best;
  model.params().set_steps(steps);
  return result;
}

}  // namespace hafr
