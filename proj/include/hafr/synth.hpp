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
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "hafr/dataset.hpp"
#include "hafr/rng.hpp"

namespace hafr {

// Planted-preference generator. Every user has a few favorite ingredients;
// the chance that a user picks a recipe grows with the number of favorites
// it contains (times `preference_sharpness`) plus a per-recipe appeal term
// that produces a long-tailed popularity profile.
struct SynthConfig {
  std::uint32_t num_users = 200;
  std::uint32_t num_recipes = 150;
  std::uint32_t num_ingredients = 40;
  // Recipes draw a uniform ingredient count in
  // [min_ingredients_per_recipe, ingredients_per_recipe]; 0 means "same as
  // the maximum".
  std::uint32_t ingredients_per_recipe = 5;
  std::uint32_t min_ingredients_per_recipe = 0;
  std::uint32_t interactions_per_user = 10;
  std::uint32_t favorites_per_user = 1;
  double preference_sharpness = 3.0;
  // Standard deviation of the per-recipe log-appeal.
  double popularity_skew = 0.0;
  std::uint32_t feature_dim = 16;
  double image_noise = 0.1;
  std::uint64_t seed = 1;

  void validate() const {
    if (num_users < 1 || num_recipes < 1 || num_ingredients < 1 ||
        ingredients_per_recipe < 1 || interactions_per_user < 1 ||
        favorites_per_user < 1 || feature_dim < 1) {
      throw Error("synth: all counts must be >= 1");
    }
    if (ingredients_per_recipe > num_ingredients) {
      throw Error("synth: ingredients_per_recipe exceeds num_ingredients");
    }
    if (min_ingredients_per_recipe > ingredients_per_recipe) {
      throw Error("synth: min_ingredients_per_recipe exceeds maximum");
    }
    if (favorites_per_user > num_ingredients) {
      throw Error("synth: favorites_per_user exceeds num_ingredients");
    }
    if (interactions_per_user > num_recipes) {
      throw Error("synth: more interactions per user than recipes");
    }
    if (!(preference_sharpness >= 0.0) || !(popularity_skew >= 0.0) ||
        !(image_noise >= 0.0)) {
      throw Error("synth: sharpness, skew and noise must be non-negative");
    }
  }
};

struct SynthCorpus {
  InteractionLog log;
  IngredientTable ingredients;
  FeatureTable features;
  // Ground truth, indexed like the generated external ids (u<j>, r<j>, g<j>).
  std::vector<std::vector<std::uint32_t>> favorites;
  std::vector<std::vector<std::uint32_t>> recipe_ingredients;
};

namespace detail {

// Weighted sampling of `n` distinct indices without replacement
// (exponential keys; equivalent to successive weighted draws).
inline std::vector<std::uint32_t> weighted_without_replacement(
    const std::vector<double>& weights, std::size_t n, RngStream& rng) {
  std::vector<std::pair<double, std::uint32_t>> keys;
  keys.reserve(weights.size());
  for (std::uint32_t j = 0; j < weights.size(); ++j) {
    const double e = -std::log(rng.uniform_open_zero());
    if (weights[j] > 0.0) {
      keys.emplace_back(e / weights[j], j);
    }
  }
  n = std::min(n, keys.size());
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(n),
                    keys.end());
  std::vector<std::uint32_t> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = keys[j].second;
  }
  return out;
}

}  // namespace detail

inline SynthCorpus synth_generate_corpus(const SynthConfig& cfg) {
  cfg.validate();
  SynthCorpus corpus;
  const std::uint32_t F = cfg.feature_dim;
  const std::uint32_t min_j = cfg.min_ingredients_per_recipe == 0
                                  ? cfg.ingredients_per_recipe
                                  : cfg.min_ingredients_per_recipe;

  auto proto_rng = derive_stream(cfg.seed, "synth/prototypes");
  std::vector<double> prototypes(std::size_t{cfg.num_ingredients} * F);
  for (auto& x : prototypes) {
    x = proto_rng.normal();
  }

  auto recipe_rng = derive_stream(cfg.seed, "synth/recipes");
  std::vector<std::uint32_t> all_ingredients(cfg.num_ingredients);
  std::iota(all_ingredients.begin(), all_ingredients.end(), 0u);
  std::vector<double> appeal(cfg.num_recipes);
  corpus.recipe_ingredients.resize(cfg.num_recipes);
  corpus.features.dim = F;
  corpus.features.values.resize(std::size_t{cfg.num_recipes} * F);
  for (std::uint32_t i = 0; i < cfg.num_recipes; ++i) {
    const auto count = static_cast<std::uint32_t>(
        min_j + recipe_rng.below(cfg.ingredients_per_recipe - min_j + 1));
    // Partial Fisher-Yates for `count` distinct ingredients.
    for (std::uint32_t j = 0; j < count; ++j) {
      const auto pick = j + recipe_rng.below(cfg.num_ingredients - j);
      std::swap(all_ingredients[j], all_ingredients[pick]);
    }
    auto& list = corpus.recipe_ingredients[i];
    list.assign(all_ingredients.begin(), all_ingredients.begin() + count);
    appeal[i] = cfg.popularity_skew * recipe_rng.normal();

    const std::string rid = "r" + std::to_string(i);
    std::vector<std::string> names;
    for (auto k : list) {
      names.push_back("g" + std::to_string(k));
    }
    corpus.ingredients.emplace(rid, std::move(names));
    corpus.features.ids.push_back(rid);
    for (std::uint32_t f = 0; f < F; ++f) {
      double mean = 0.0;
      for (auto k : list) {
        mean += prototypes[std::size_t{k} * F + f];
      }
      mean /= static_cast<double>(list.size());
      corpus.features.values[std::size_t{i} * F + f] =
          static_cast<float>(mean + cfg.image_noise * recipe_rng.normal());
    }
  }

  auto user_rng = derive_stream(cfg.seed, "synth/users");
  corpus.favorites.resize(cfg.num_users);
  std::vector<double> weights(cfg.num_recipes);
  std::vector<std::uint8_t> is_favorite(cfg.num_ingredients);
  for (std::uint32_t u = 0; u < cfg.num_users; ++u) {
    auto& fav = corpus.favorites[u];
    for (std::uint32_t j = 0; j < cfg.favorites_per_user; ++j) {
      const auto pick = j + user_rng.below(cfg.num_ingredients - j);
      std::swap(all_ingredients[j], all_ingredients[pick]);
    }
    fav.assign(all_ingredients.begin(),
               all_ingredients.begin() + cfg.favorites_per_user);
    std::fill(is_favorite.begin(), is_favorite.end(), 0);
    for (auto k : fav) {
      is_favorite[k] = 1;
    }
    for (std::uint32_t i = 0; i < cfg.num_recipes; ++i) {
      int overlap = 0;
      for (auto k : corpus.recipe_ingredients[i]) {
        overlap += is_favorite[k];
      }
      weights[i] = std::exp(cfg.preference_sharpness * overlap + appeal[i]);
    }
    const auto picks = detail::weighted_without_replacement(
        weights, cfg.interactions_per_user, user_rng);
    const std::string uid = "u" + std::to_string(u);
    for (auto i : picks) {
      const auto ts = static_cast<std::int64_t>(user_rng.below(1'000'000'000));
      corpus.log.records.push_back(
          {uid, "r" + std::to_string(i), 1.0, ts});
    }
  }
  return corpus;
}

inline Dataset synth_generate(const SynthConfig& cfg,
                              SplitFractions fractions = {}) {
  const auto corpus = synth_generate_corpus(cfg);
  BuildOptions options;
  options.fractions = fractions;
  options.feature_dim = cfg.feature_dim;
  return build_dataset(corpus.log, corpus.ingredients, corpus.features,
                       options);
}

// Writes interactions.tsv, ingredients.tsv, features.bin and
// features.ids.txt into `dir`.
inline void write_corpus(const SynthCorpus& corpus,
                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::write_file(dir / "interactions.tsv", format_interactions(corpus.log));
  io::write_file(dir / "ingredients.tsv",
                 format_ingredients(corpus.ingredients));
  save_features(corpus.features, dir / "features.bin");
}

}  // namespace hafr
