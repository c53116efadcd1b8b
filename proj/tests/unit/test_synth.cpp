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

#include <gtest/gtest.h>

#include <vector>

#include "hafr/stats.hpp"
#include "hafr/synth.hpp"

TEST(Synth, SameConfigSameDataset) {
  hafr::SynthConfig cfg;
  cfg.seed = 17;
  const auto a = hafr::synth_generate(cfg);
  const auto b = hafr::synth_generate(cfg);
  EXPECT_EQ(hafr::dataset_checksum(a), hafr::dataset_checksum(b));
  cfg.seed = 18;
  EXPECT_NE(hafr::dataset_checksum(a),
            hafr::dataset_checksum(hafr::synth_generate(cfg)));
}

TEST(Synth, InfeasibleConfigThrows) {
  hafr::SynthConfig cfg;
  cfg.num_recipes = 5;
  cfg.interactions_per_user = 6;
  EXPECT_THROW(hafr::synth_generate(cfg), hafr::Error);
}

TEST(Synth, ZeroSharpnessIsUniform) {
  hafr::SynthConfig cfg;
  cfg.num_users = 10'000;
  cfg.num_recipes = 100;
  cfg.interactions_per_user = 10;
  cfg.preference_sharpness = 0.0;
  cfg.popularity_skew = 0.0;
  cfg.seed = 5;
  const auto corpus = hafr::synth_generate_corpus(cfg);
  ASSERT_EQ(corpus.log.records.size(), 100'000u);
  std::vector<std::uint64_t> counts(cfg.num_recipes, 0);
  for (const auto& r : corpus.log.records) {
    ++counts[std::stoul(r.recipe.substr(1))];
  }
  const std::vector<double> probs(cfg.num_recipes, 1.0 / cfg.num_recipes);
  EXPECT_GT(hafr::stats::chi_square_gof(counts, probs).p_value, 0.01);
}

TEST(Synth, SharpPreferencesFollowFavorite) {
  hafr::SynthConfig cfg;
  cfg.num_users = 300;
  cfg.num_recipes = 400;
  cfg.num_ingredients = 25;
  cfg.ingredients_per_recipe = 5;  // base rate 5 / 25
  cfg.interactions_per_user = 10;
  cfg.favorites_per_user = 1;
  cfg.preference_sharpness = 10.0;
  cfg.seed = 9;
  const auto corpus = hafr::synth_generate_corpus(cfg);
  std::size_t base = 0;
  for (const auto& list : corpus.recipe_ingredients) {
    base += list.size();
  }
  EXPECT_NEAR(static_cast<double>(base) / (400.0 * 25.0), 0.2, 1e-12);

  std::size_t hits = 0;
  for (const auto& r : corpus.log.records) {
    const auto u = std::stoul(r.user.substr(1));
    const auto i = std::stoul(r.recipe.substr(1));
    const auto& list = corpus.recipe_ingredients[i];
    hits += std::find(list.begin(), list.end(), corpus.favorites[u][0]) !=
            list.end();
  }
  EXPECT_GE(static_cast<double>(hits) / corpus.log.records.size(), 0.8);
}

TEST(Synth, VariableIngredientCounts) {
  hafr::SynthConfig cfg;
  cfg.ingredients_per_recipe = 6;
  cfg.min_ingredients_per_recipe = 2;
  const auto corpus = hafr::synth_generate_corpus(cfg);
  std::set<std::size_t> sizes;
  for (const auto& list : corpus.recipe_ingredients) {
    ASSERT_GE(list.size(), 2u);
    ASSERT_LE(list.size(), 6u);
    std::set<std::uint32_t> distinct(list.begin(), list.end());
    ASSERT_EQ(distinct.size(), list.size());
    sizes.insert(list.size());
  }
  EXPECT_EQ(sizes.size(), 5u);
}

TEST(Synth, DatasetInvariants) {
  hafr::SynthConfig cfg;
  const auto ds = hafr::synth_generate(cfg);
  EXPECT_EQ(ds.feature_dim, cfg.feature_dim);
  for (std::size_t u = 0; u < ds.num_users; ++u) {
    EXPECT_FALSE(ds.train_items(static_cast<hafr::UserIndex>(u)).empty());
  }
  EXPECT_GT(ds.test.size(), 0u);
}
