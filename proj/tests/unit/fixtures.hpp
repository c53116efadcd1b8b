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

#include <string>
#include <vector>

#include "hafr/dataset.hpp"
#include "hafr/rng.hpp"

namespace hafr_test {

// Builds an indexed dataset directly. Recipe i has ingredients listed in
// `ingredients[i]`; features are N(0, 1) from `seed`.
inline hafr::Dataset make_dataset(
    std::size_t users, std::size_t recipes, std::size_t num_ingredients,
    std::uint32_t feature_dim,
    std::vector<std::vector<hafr::IngredientIndex>> ingredients,
    std::vector<hafr::Interaction> train,
    std::vector<hafr::Interaction> valid = {},
    std::vector<hafr::Interaction> test = {}, std::uint64_t seed = 1) {
  hafr::Dataset ds;
  ds.num_users = users;
  ds.num_recipes = recipes;
  ds.num_ingredients = num_ingredients;
  ds.feature_dim = feature_dim;
  ds.ingredients = std::move(ingredients);
  ds.train = std::move(train);
  ds.valid = std::move(valid);
  ds.test = std::move(test);
  auto rng = hafr::derive_stream(seed, "fixture/features");
  ds.features.resize(recipes * feature_dim);
  for (auto& x : ds.features) {
    x = static_cast<float>(rng.normal());
  }
  for (std::size_t u = 0; u < users; ++u) ds.user_ids.push_back("u" + std::to_string(u));
  for (std::size_t i = 0; i < recipes; ++i) ds.recipe_ids.push_back("r" + std::to_string(i));
  for (std::size_t k = 0; k < num_ingredients; ++k) ds.ingredient_names.push_back("g" + std::to_string(k));
  ds.finalize();
  return ds;
}

// Every user has one train positive per recipe index u % recipes, one test
// positive at (u + 1) % recipes; recipes cycle through ingredient pairs.
inline hafr::Dataset small_dataset(std::size_t users = 6,
                                   std::size_t recipes = 8,
                                   std::size_t num_ingredients = 5,
                                   std::uint32_t feature_dim = 4) {
  std::vector<std::vector<hafr::IngredientIndex>> ing(recipes);
  for (std::size_t i = 0; i < recipes; ++i) {
    const auto a = static_cast<hafr::IngredientIndex>(i % num_ingredients);
    const auto b = static_cast<hafr::IngredientIndex>((i + 2) % num_ingredients);
    ing[i] = a == b ? std::vector<hafr::IngredientIndex>{a}
                    : std::vector<hafr::IngredientIndex>{a, b};
    if (i % 3 == 0 && num_ingredients > 4) {
      ing[i].push_back(static_cast<hafr::IngredientIndex>((i + 4) % num_ingredients));
    }
  }
  std::vector<hafr::Interaction> train, test;
  for (std::size_t u = 0; u < users; ++u) {
    const auto uu = static_cast<hafr::UserIndex>(u);
    train.push_back({uu, static_cast<hafr::RecipeIndex>(u % recipes)});
    test.push_back({uu, static_cast<hafr::RecipeIndex>((u + 1) % recipes)});
  }
  return make_dataset(users, recipes, num_ingredients, feature_dim,
                      std::move(ing), std::move(train), {}, std::move(test));
}

}  // namespace hafr_test
