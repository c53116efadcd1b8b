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

#include <filesystem>
#include <set>
#include <string>

#include "hafr/evaluation.hpp"
#include "hafr/io.hpp"
#include "hafr/synth.hpp"
#include "hafr/training.hpp"
#include "json.hpp"

namespace hafr {

struct DataPaths {
  std::string interactions;
  std::string ingredients;
  std::string features;
  std::uint32_t feature_dim = kDefaultFeatureDim;
};

// Everything a run needs. Unknown keys anywhere are an error.
struct RunConfig {
  DataPaths data;
  TrainConfig train;
  EvalConfig eval;
  SynthConfig synth;
  std::uint64_t seed = 0;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::string& where,
                           std::initializer_list<const char*> known) {
  if (!j.is_object()) {
    throw Error("config: '" + where + "' must be an object");
  }
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) {
      std::string list;
      for (const auto& k : allowed) {
        list += (list.empty() ? "" : ", ") + k;
      }
      throw Error("config: unknown key '" + where + "." + key +
                  "' (allowed: " + list + ")");
    }
  }
}

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out,
              const std::string& where) {
  if (!j.contains(key)) {
    return;
  }
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error("config: '" + where + "." + key + "' has the wrong type");
  }
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  using detail::read_key;
  RunConfig c;
  detail::reject_unknown(j, "<root>",
                         {"data", "model", "train", "eval", "synth", "seed"});
  read_key(j, "seed", c.seed, "<root>");
  if (j.contains("data")) {
    const auto& d = j["data"];
    detail::reject_unknown(
        d, "data", {"interactions", "ingredients", "features", "feature_dim"});
    read_key(d, "interactions", c.data.interactions, "data");
    read_key(d, "ingredients", c.data.ingredients, "data");
    read_key(d, "features", c.data.features, "data");
    read_key(d, "feature_dim", c.data.feature_dim, "data");
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    detail::reject_unknown(m, "model", {"variant", "embedding_dim",
                                        "attention_dim", "output_hidden"});
    read_key(m, "variant", c.train.variant, "model");
    read_key(m, "embedding_dim", c.train.embedding_dim, "model");
    read_key(m, "attention_dim", c.train.attention_dim, "model");
    read_key(m, "output_hidden", c.train.output_hidden, "model");
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    detail::reject_unknown(
        t, "train",
        {"learning_rate", "lambda_embed", "lambda_image", "lambda_mlp",
         "batch_size", "max_epochs", "patience", "valid_negatives"});
    read_key(t, "learning_rate", c.train.learning_rate, "train");
    read_key(t, "lambda_embed", c.train.lambda_embed, "train");
    read_key(t, "lambda_image", c.train.lambda_image, "train");
    read_key(t, "lambda_mlp", c.train.lambda_mlp, "train");
    read_key(t, "batch_size", c.train.batch_size, "train");
    read_key(t, "max_epochs", c.train.max_epochs, "train");
    read_key(t, "patience", c.train.patience, "train");
    read_key(t, "valid_negatives", c.train.valid_negatives, "train");
    if (!t.contains("patience")) {
      c.train.patience = std::min(c.train.patience, c.train.max_epochs);
    }
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    detail::reject_unknown(
        e, "eval", {"num_negatives", "pop_exponent", "k_values", "repeats"});
    read_key(e, "num_negatives", c.eval.num_negatives, "eval");
    read_key(e, "pop_exponent", c.eval.pop_exponent, "eval");
    read_key(e, "k_values", c.eval.k_values, "eval");
    read_key(e, "repeats", c.eval.repeats, "eval");
  }
  if (j.contains("synth")) {
    const auto& s = j["synth"];
    detail::reject_unknown(
        s, "synth",
        {"num_users", "num_recipes", "num_ingredients",
         "ingredients_per_recipe", "min_ingredients_per_recipe",
         "interactions_per_user", "favorites_per_user",
         "preference_sharpness", "popularity_skew", "feature_dim",
         "image_noise"});
    read_key(s, "num_users", c.synth.num_users, "synth");
    read_key(s, "num_recipes", c.synth.num_recipes, "synth");
    read_key(s, "num_ingredients", c.synth.num_ingredients, "synth");
    read_key(s, "ingredients_per_recipe", c.synth.ingredients_per_recipe,
             "synth");
    read_key(s, "min_ingredients_per_recipe",
             c.synth.min_ingredients_per_recipe, "synth");
    read_key(s, "interactions_per_user", c.synth.interactions_per_user,
             "synth");
    read_key(s, "favorites_per_user", c.synth.favorites_per_user, "synth");
    read_key(s, "preference_sharpness", c.synth.preference_sharpness, "synth");
    read_key(s, "popularity_skew", c.synth.popularity_skew, "synth");
    read_key(s, "feature_dim", c.synth.feature_dim, "synth");
    read_key(s, "image_noise", c.synth.image_noise, "synth");
  }
  c.train.pop_exponent = c.eval.pop_exponent;
  c.train.seed = c.seed;
  c.eval.seed = c.seed;
  c.synth.seed = c.seed;
  c.train.validate();
  c.eval.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(path.string() + ": invalid JSON (" + e.what() + ")");
  }
  return parse_run_config(j);
}

inline nlohmann::ordered_json run_config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["data"] = {{"interactions", c.data.interactions},
               {"ingredients", c.data.ingredients},
               {"features", c.data.features},
               {"feature_dim", c.data.feature_dim}};
  j["model"] = {{"variant", c.train.variant},
                {"embedding_dim", c.train.embedding_dim},
                {"attention_dim", c.train.attention_dim},
                {"output_hidden", c.train.output_hidden}};
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"lambda_embed", c.train.lambda_embed},
                {"lambda_image", c.train.lambda_image},
                {"lambda_mlp", c.train.lambda_mlp},
                {"batch_size", c.train.batch_size},
                {"max_epochs", c.train.max_epochs},
                {"patience", c.train.patience},
                {"valid_negatives", c.train.valid_negatives}};
  j["eval"] = {{"num_negatives", c.eval.num_negatives},
               {"pop_exponent", c.eval.pop_exponent},
               {"k_values", c.eval.k_values},
               {"repeats", c.eval.repeats}};
  j["synth"] = {{"num_users", c.synth.num_users},
                {"num_recipes", c.synth.num_recipes},
                {"num_ingredients", c.synth.num_ingredients},
                {"ingredients_per_recipe", c.synth.ingredients_per_recipe},
                {"min_ingredients_per_recipe",
                 c.synth.min_ingredients_per_recipe},
                {"interactions_per_user", c.synth.interactions_per_user},
                {"favorites_per_user", c.synth.favorites_per_user},
                {"preference_sharpness", c.synth.preference_sharpness},
                {"popularity_skew", c.synth.popularity_skew},
                {"feature_dim", c.synth.feature_dim},
                {"image_noise", c.synth.image_noise}};
  return j;
}

// Applies a new master seed everywhere it is consumed.
inline void set_seed(RunConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.train.seed = seed;
  c.eval.seed = seed;
  c.synth.seed = seed;
}

}  // namespace hafr
