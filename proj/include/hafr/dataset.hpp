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
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hafr/io.hpp"
#include "json.hpp"

namespace hafr {

using UserIndex = std::uint32_t;
using RecipeIndex = std::uint32_t;
using IngredientIndex = std::uint32_t;

inline constexpr std::uint32_t kDefaultFeatureDim = 2048;

struct InteractionRecord {
  std::string user;
  std::string recipe;
  double rating = 1.0;
  std::int64_t timestamp = 0;

  friend bool operator==(const InteractionRecord&,
                         const InteractionRecord&) = default;
};

struct InteractionLog {
  std::vector<InteractionRecord> records;
  // Exact (user, recipe, timestamp) repeats removed at ingestion.
  std::size_t duplicates_dropped = 0;
};

namespace detail {

inline bool parse_int64(std::string_view s, std::int64_t& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

inline bool parse_double(std::string_view s, double& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace detail

// user_id<TAB>recipe_id<TAB>rating<TAB>timestamp, one record per line.
inline InteractionLog parse_interactions(std::string_view text,
                                         const std::string& source) {
  InteractionLog log;
  std::set<std::tuple<std::string_view, std::string_view, std::int64_t>> seen;
  const auto rows = io::lines(text);
  for (std::size_t n = 0; n < rows.size(); ++n) {
    const auto line = rows[n];
    const std::size_t lineno = n + 1;
    if (line.empty()) {
      continue;
    }
    const auto cols = io::split(line, '\t');
    if (cols.size() != 4) {
      throw ParseError(source, lineno,
                       "expected 4 tab-separated columns, got " +
                           std::to_string(cols.size()));
    }
    if (cols[0].empty() || cols[1].empty()) {
      throw ParseError(source, lineno, "empty user or recipe id");
    }
    double rating = 0.0;
    if (!detail::parse_double(cols[2], rating)) {
      throw ParseError(source, lineno,
                       "bad rating '" + std::string(cols[2]) + "'");
    }
    if (rating <= 0.0) {
      throw ParseError(source, lineno, "rating must be positive");
    }
    std::int64_t ts = 0;
    if (!detail::parse_int64(cols[3], ts) || ts < 0) {
      throw ParseError(source, lineno,
                       "bad timestamp '" + std::string(cols[3]) + "'");
    }
    if (!seen.emplace(cols[0], cols[1], ts).second) {
      ++log.duplicates_dropped;
      continue;
    }
    log.records.push_back(
        {std::string(cols[0]), std::string(cols[1]), rating, ts});
  }
  if (log.records.empty()) {
    throw Error(source + ": no interaction records");
  }
  return log;
}

inline InteractionLog load_interactions(const std::filesystem::path& path) {
  return parse_interactions(io::read_file(path), path.string());
}

inline std::string format_interactions(const InteractionLog& log) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& r : log.records) {
    out << r.user << '\t' << r.recipe << '\t' << r.rating << '\t'
        << r.timestamp << '\n';
  }
  return out.str();
}

// recipe_id -> ingredient names, in file order.
using IngredientTable = std::map<std::string, std::vector<std::string>>;

// recipe_id<TAB>name1;name2;...;nameJ
inline IngredientTable parse_ingredients(std::string_view text,
                                         const std::string& source) {
  IngredientTable table;
  const auto rows = io::lines(text);
  for (std::size_t n = 0; n < rows.size(); ++n) {
    const auto line = rows[n];
    if (line.empty()) {
      continue;
    }
    const auto cols = io::split(line, '\t');
    if (cols.size() != 2 || cols[0].empty()) {
      throw ParseError(source, n + 1, "expected recipe_id<TAB>ingredients");
    }
    std::vector<std::string> names;
    if (!cols[1].empty()) {
      for (auto name : io::split(cols[1], ';')) {
        if (!name.empty()) {
          names.emplace_back(name);
        }
      }
    }
    if (!table.emplace(std::string(cols[0]), std::move(names)).second) {
      throw ParseError(source, n + 1,
                       "duplicate recipe '" + std::string(cols[0]) + "'");
    }
  }
  return table;
}

inline IngredientTable load_ingredients(const std::filesystem::path& path) {
  return parse_ingredients(io::read_file(path), path.string());
}

inline std::string format_ingredients(const IngredientTable& table) {
  std::string out;
  for (const auto& [recipe, names] : table) {
    out += recipe;
    out += '\t';
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (j > 0) {
        out += ';';
      }
      out += names[j];
    }
    out += '\n';
  }
  return out;
}

// Dense per-recipe image features, row-major, with the external recipe id of
// each row.
struct FeatureTable {
  std::vector<std::string> ids;
  std::uint32_t dim = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t r) const {
    return {values.data() + r * dim, dim};
  }
};

inline constexpr std::string_view kFeatureMagic = "HAFRIMG1";

inline std::string encode_features(std::uint32_t count, std::uint32_t dim,
                                   std::span<const float> values) {
  io::ByteWriter w;
  w.bytes(kFeatureMagic);
  w.u32(count);
  w.u32(dim);
  for (float v : values) {
    w.f32(v);
  }
  return w.take();
}

inline std::pair<std::uint32_t, std::vector<float>> decode_features(
    std::string_view bytes, const std::string& source,
    std::uint32_t& dim_out) {
  io::ByteReader r(bytes, source);
  if (r.bytes(kFeatureMagic.size()) != kFeatureMagic) {
    throw Error(source + ": bad magic, expected HAFRIMG1");
  }
  const std::uint32_t count = r.u32();
  const std::uint32_t dim = r.u32();
  const std::uint64_t n = static_cast<std::uint64_t>(count) * dim;
  if (r.remaining() != n * 4) {
    throw Error(source + ": payload size " + std::to_string(r.remaining()) +
                " does not match " + std::to_string(count) + "x" +
                std::to_string(dim) + " floats");
  }
  std::vector<float> values(n);
  for (auto& v : values) {
    v = r.f32();
  }
  dim_out = dim;
  return {count, std::move(values)};
}

inline std::filesystem::path feature_ids_path(
    const std::filesystem::path& features_bin) {
  auto p = features_bin;
  p.replace_extension(".ids.txt");
  return p;
}

inline FeatureTable load_features(const std::filesystem::path& bin_path,
                                  std::optional<std::filesystem::path>
                                      ids_path = std::nullopt) {
  const auto ids_file = ids_path.value_or(feature_ids_path(bin_path));
  FeatureTable table;
  auto [count, values] =
      decode_features(io::read_file(bin_path), bin_path.string(), table.dim);
  table.values = std::move(values);
  const std::string ids_text = io::read_file(ids_file);
  for (auto line : io::lines(ids_text)) {
    if (!line.empty()) {
      table.ids.emplace_back(line);
    }
  }
  if (table.ids.size() != count) {
    throw Error(ids_file.string() + ": " + std::to_string(table.ids.size()) +
                " ids for " + std::to_string(count) + " feature rows");
  }
  for (float v : table.values) {
    if (!std::isfinite(v)) {
      throw Error(bin_path.string() + ": non-finite feature value");
    }
  }
  return table;
}

inline void save_features(const FeatureTable& table,
                          const std::filesystem::path& bin_path,
                          std::optional<std::filesystem::path> ids_path =
                              std::nullopt) {
  io::write_file(bin_path,
                 encode_features(static_cast<std::uint32_t>(table.ids.size()),
                                 table.dim, table.values));
  std::string ids;
  for (const auto& id : table.ids) {
    ids += id;
    ids += '\n';
  }
  io::write_file(ids_path.value_or(feature_ids_path(bin_path)), ids);
}

// ---------------------------------------------------------------------------
// Temporal split

struct SplitFractions {
  double train = 0.6;
  double valid = 0.1;
  double test = 0.3;
};

enum class Split : std::uint8_t { train, valid, test };

struct SplitAssignment {
  // Retained records in canonical order: (timestamp, user, recipe).
  std::vector<InteractionRecord> records;
  std::vector<Split> split;
  std::size_t train_count = 0;
  std::size_t valid_count = 0;
  std::size_t test_count = 0;
  std::size_t users_dropped = 0;
  std::size_t records_dropped = 0;
  // Later interactions with an already-seen (user, recipe) pair.
  std::size_t repeat_pairs_dropped = 0;
};

// Global split by time: the earliest `train` fraction of records, then
// `valid`, then the latest `test`. Users missing from train or test are
// removed entirely afterward.
inline SplitAssignment temporal_split(const InteractionLog& log,
                                      SplitFractions fractions = {}) {
  if (log.records.empty()) {
    throw Error("temporal_split: empty log");
  }
  const double total = fractions.train + fractions.valid + fractions.test;
  if (std::abs(total - 1.0) > 1e-9 || fractions.train < 0 ||
      fractions.valid < 0 || fractions.test < 0) {
    throw Error("temporal_split: fractions must be non-negative and sum to 1");
  }
  std::vector<const InteractionRecord*> order;
  order.reserve(log.records.size());
  for (const auto& r : log.records) {
    order.push_back(&r);
  }
  std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    return std::tie(a->timestamp, a->user, a->recipe, a->rating) <
           std::tie(b->timestamp, b->user, b->recipe, b->rating);
  });

  SplitAssignment out;
  // Interactions are binary: keep only the first occurrence of each pair.
  std::set<std::pair<std::string_view, std::string_view>> pairs;
  std::vector<const InteractionRecord*> unique;
  unique.reserve(order.size());
  for (const auto* r : order) {
    if (pairs.emplace(r->user, r->recipe).second) {
      unique.push_back(r);
    } else {
      ++out.repeat_pairs_dropped;
    }
  }

  const std::size_t n = unique.size();
  const auto n_train = static_cast<std::size_t>(
      std::floor(fractions.train * static_cast<double>(n) + 1e-9));
  const auto n_train_valid = static_cast<std::size_t>(std::floor(
      (fractions.train + fractions.valid) * static_cast<double>(n) + 1e-9));

  std::vector<Split> raw(n);
  for (std::size_t j = 0; j < n; ++j) {
    raw[j] = j < n_train ? Split::train
             : j < n_train_valid ? Split::valid
                                 : Split::test;
  }
  std::unordered_set<std::string_view> in_train;
  std::unordered_set<std::string_view> in_test;
  std::unordered_set<std::string_view> all_users;
  for (std::size_t j = 0; j < n; ++j) {
    all_users.insert(unique[j]->user);
    if (raw[j] == Split::train) {
      in_train.insert(unique[j]->user);
    } else if (raw[j] == Split::test) {
      in_test.insert(unique[j]->user);
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    const auto& user = unique[j]->user;
    if (!in_train.contains(user) || !in_test.contains(user)) {
      ++out.records_dropped;
      continue;
    }
    out.records.push_back(*unique[j]);
    out.split.push_back(raw[j]);
    switch (raw[j]) {
      case Split::train: ++out.train_count; break;
      case Split::valid: ++out.valid_count; break;
      case Split::test: ++out.test_count; break;
    }
  }
  for (auto user : all_users) {
    if (!in_train.contains(user) || !in_test.contains(user)) {
      ++out.users_dropped;
    }
  }
  if (out.train_count == 0 || out.test_count == 0) {
    throw Error("temporal_split: split leaves train or test empty");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Indexed dataset

struct Interaction {
  UserIndex user = 0;
  RecipeIndex recipe = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
  friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

// Contiguously indexed, immutable once finalize() has run; safe for
// concurrent readers.
struct Dataset {
  std::size_t num_users = 0;
  std::size_t num_recipes = 0;
  std::size_t num_ingredients = 0;
  std::uint32_t feature_dim = 0;

  std::vector<Interaction> train;
  std::vector<Interaction> valid;
  std::vector<Interaction> test;

  std::vector<std::vector<IngredientIndex>> ingredients;
  std::vector<float> features;  // num_recipes x feature_dim, row-major

  std::vector<std::string> user_ids;
  std::vector<std::string> recipe_ids;
  std::vector<std::string> ingredient_names;

  std::span<const float> feature_row(RecipeIndex i) const {
    return {features.data() + static_cast<std::size_t>(i) * feature_dim,
            feature_dim};
  }

  // Sorted train positives of user u.
  std::span<const RecipeIndex> train_items(UserIndex u) const {
    return train_items_[u];
  }
  // Sorted train ∪ valid ∪ test positives of user u.
  std::span<const RecipeIndex> all_items(UserIndex u) const {
    return all_items_[u];
  }
  bool is_train_positive(UserIndex u, RecipeIndex i) const {
    const auto& v = train_items_[u];
    return std::binary_search(v.begin(), v.end(), i);
  }
  bool has_interacted(UserIndex u, RecipeIndex i) const {
    const auto& v = all_items_[u];
    return std::binary_search(v.begin(), v.end(), i);
  }
  std::span<const std::uint32_t> train_counts() const { return train_counts_; }

  // Validates invariants and builds the per-user lookup tables.
  void finalize() {
    if (user_ids.size() != num_users || recipe_ids.size() != num_recipes ||
        ingredient_names.size() != num_ingredients) {
      throw Error("dataset: id tables do not match counts");
    }
    if (ingredients.size() != num_recipes ||
        features.size() != num_recipes * static_cast<std::size_t>(feature_dim)) {
      throw Error("dataset: per-recipe content does not match recipe count");
    }
    for (std::size_t i = 0; i < num_recipes; ++i) {
      if (ingredients[i].empty()) {
        throw Error("dataset: recipe '" + recipe_ids[i] +
                    "' has no ingredients");
      }
      for (auto k : ingredients[i]) {
        if (k >= num_ingredients) {
          throw Error("dataset: ingredient index out of range");
        }
      }
    }
    train_items_.assign(num_users, {});
    all_items_.assign(num_users, {});
    train_counts_.assign(num_recipes, 0);
    auto check = [&](const Interaction& x) {
      if (x.user >= num_users || x.recipe >= num_recipes) {
        throw Error("dataset: interaction index out of range");
      }
    };
    for (const auto& x : train) {
      check(x);
      train_items_[x.user].push_back(x.recipe);
      all_items_[x.user].push_back(x.recipe);
      ++train_counts_[x.recipe];
    }
    for (const auto* part : {&valid, &test}) {
      for (const auto& x : *part) {
        check(x);
        if (train_items_[x.user].empty()) {
          throw Error("dataset: user '" + user_ids[x.user] +
                      "' appears in valid/test but not in train");
        }
        all_items_[x.user].push_back(x.recipe);
      }
    }
    for (std::size_t u = 0; u < num_users; ++u) {
      std::sort(train_items_[u].begin(), train_items_[u].end());
      auto& all = all_items_[u];
      std::sort(all.begin(), all.end());
      if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
        throw Error("dataset: duplicate (user, recipe) pair across splits "
                    "for user '" + user_ids[u] + "'");
      }
    }
  }

 private:
  std::vector<std::vector<RecipeIndex>> train_items_;
  std::vector<std::vector<RecipeIndex>> all_items_;
  std::vector<std::uint32_t> train_counts_;
};

struct BuildOptions {
  SplitFractions fractions;
  // Expected feature width; files of another width are rejected.
  std::uint32_t feature_dim = kDefaultFeatureDim;
};

struct BuildReport {
  std::size_t duplicates_dropped = 0;
  std::size_t repeat_pairs_dropped = 0;
  std::size_t users_dropped = 0;
  std::size_t records_dropped = 0;
};

namespace detail {

inline std::string list_ids(const std::vector<std::string>& ids) {
  std::string out;
  const std::size_t shown = std::min<std::size_t>(ids.size(), 10);
  for (std::size_t j = 0; j < shown; ++j) {
    out += (j ? ", " : "") + ids[j];
  }
  if (ids.size() > shown) {
    out += ", ... (" + std::to_string(ids.size()) + " total)";
  }
  return out;
}

}  // namespace detail

// Splits the log by time, then assigns contiguous indices in order of first
// appearance in the time-sorted retained records. Any positive rating is an
// interaction.
inline Dataset build_dataset(const InteractionLog& log,
                             const IngredientTable& ingredient_table,
                             const FeatureTable& feature_table,
                             const BuildOptions& options = {},
                             BuildReport* report = nullptr) {
  if (feature_table.dim != options.feature_dim) {
    throw Error("feature dimension " + std::to_string(feature_table.dim) +
                " does not match expected " +
                std::to_string(options.feature_dim) +
                " (override with --feature-dim)");
  }
  const SplitAssignment assignment = temporal_split(log, options.fractions);

  Dataset ds;
  ds.feature_dim = feature_table.dim;
  std::unordered_map<std::string, UserIndex> user_index;
  std::unordered_map<std::string, RecipeIndex> recipe_index;
  auto index_of = [](auto& map, auto& names, const std::string& id) {
    auto [it, inserted] = map.try_emplace(
        id, static_cast<typename std::decay_t<decltype(map)>::mapped_type>(
                names.size()));
    if (inserted) {
      names.push_back(id);
    }
    return it->second;
  };
  for (std::size_t j = 0; j < assignment.records.size(); ++j) {
    const auto& r = assignment.records[j];
    const Interaction x{index_of(user_index, ds.user_ids, r.user),
                        index_of(recipe_index, ds.recipe_ids, r.recipe)};
    switch (assignment.split[j]) {
      case Split::train: ds.train.push_back(x); break;
      case Split::valid: ds.valid.push_back(x); break;
      case Split::test: ds.test.push_back(x); break;
    }
  }
  ds.num_users = ds.user_ids.size();
  ds.num_recipes = ds.recipe_ids.size();

  std::unordered_map<std::string_view, std::size_t> feature_row;
  for (std::size_t r = 0; r < feature_table.ids.size(); ++r) {
    feature_row.emplace(feature_table.ids[r], r);
  }
  std::vector<std::string> missing_features;
  std::vector<std::string> missing_ingredients;
  std::unordered_map<std::string, IngredientIndex> ingredient_index;
  ds.ingredients.resize(ds.num_recipes);
  ds.features.resize(ds.num_recipes * static_cast<std::size_t>(ds.feature_dim));
  for (std::size_t i = 0; i < ds.num_recipes; ++i) {
    const auto& rid = ds.recipe_ids[i];
    auto fit = feature_row.find(rid);
    if (fit == feature_row.end()) {
      missing_features.push_back(rid);
    } else {
      const auto row = feature_table.row(fit->second);
      std::copy(row.begin(), row.end(),
                ds.features.begin() +
                    static_cast<std::ptrdiff_t>(i * ds.feature_dim));
    }
    auto git = ingredient_table.find(rid);
    if (git == ingredient_table.end() || git->second.empty()) {
      missing_ingredients.push_back(rid);
      continue;
    }
    auto& list = ds.ingredients[i];
    for (const auto& name : git->second) {
      const auto k = index_of(ingredient_index, ds.ingredient_names, name);
      if (std::find(list.begin(), list.end(), k) == list.end()) {
        list.push_back(k);
      }
    }
  }
  if (!missing_features.empty()) {
    throw Error("recipes without image features: " +
                detail::list_ids(missing_features));
  }
  if (!missing_ingredients.empty()) {
    throw Error("recipes without ingredients: " +
                detail::list_ids(missing_ingredients));
  }
  ds.num_ingredients = ds.ingredient_names.size();
  ds.finalize();
  if (report) {
    report->duplicates_dropped = log.duplicates_dropped;
    report->repeat_pairs_dropped = assignment.repeat_pairs_dropped;
    report->users_dropped = assignment.users_dropped;
    report->records_dropped = assignment.records_dropped;
  }
  return ds;
}

inline Dataset build_dataset(const InteractionLog& log,
                             const std::filesystem::path& ingredients_path,
                             const std::filesystem::path& features_path,
                             const BuildOptions& options = {},
                             BuildReport* report = nullptr) {
  return build_dataset(log, load_ingredients(ingredients_path),
                       load_features(features_path), options, report);
}

// ---------------------------------------------------------------------------
// Prepared-dataset directory: indexed binary splits and ingredient lists,
// features in HAFRIMG1 form, id tables as text, and manifest.json.

namespace detail {

inline constexpr std::string_view kSplitsMagic = "HAFRSPL1";
inline constexpr std::string_view kIngredientsMagic = "HAFRING1";

inline std::string encode_splits(const Dataset& ds) {
  io::ByteWriter w;
  w.bytes(kSplitsMagic);
  for (const auto* part : {&ds.train, &ds.valid, &ds.test}) {
    w.u32(static_cast<std::uint32_t>(part->size()));
  }
  for (const auto* part : {&ds.train, &ds.valid, &ds.test}) {
    for (const auto& x : *part) {
      w.u32(x.user);
      w.u32(x.recipe);
    }
  }
  return w.take();
}

inline std::string encode_ingredient_lists(const Dataset& ds) {
  io::ByteWriter w;
  w.bytes(kIngredientsMagic);
  w.u32(static_cast<std::uint32_t>(ds.ingredients.size()));
  for (const auto& list : ds.ingredients) {
    w.u32(static_cast<std::uint32_t>(list.size()));
    for (auto k : list) {
      w.u32(k);
    }
  }
  return w.take();
}

inline std::string encode_lines(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    out += s;
    out += '\n';
  }
  return out;
}

inline std::vector<std::string> decode_lines(std::string_view text) {
  std::vector<std::string> out;
  for (auto line : io::lines(text)) {
    out.emplace_back(line);
  }
  return out;
}

}  // namespace detail

// SHA-256 over every persisted artifact in a fixed order; identifies the
// dataset in checkpoints and manifests.
inline std::string dataset_checksum(const Dataset& ds) {
  std::string all = detail::encode_splits(ds);
  all += detail::encode_ingredient_lists(ds);
  all += encode_features(static_cast<std::uint32_t>(ds.num_recipes),
                         ds.feature_dim, ds.features);
  all += detail::encode_lines(ds.user_ids);
  all += detail::encode_lines(ds.recipe_ids);
  all += detail::encode_lines(ds.ingredient_names);
  return io::sha256_hex(all);
}

inline nlohmann::ordered_json save_prepared(const Dataset& ds,
                                            const std::filesystem::path& dir,
                                            const BuildReport& report = {}) {
  std::filesystem::create_directories(dir);
  io::write_file(dir / "splits.bin", detail::encode_splits(ds));
  io::write_file(dir / "ingredients.bin", detail::encode_ingredient_lists(ds));
  io::write_file(dir / "features.bin",
                 encode_features(static_cast<std::uint32_t>(ds.num_recipes),
                                 ds.feature_dim, ds.features));
  io::write_file(dir / "users.txt", detail::encode_lines(ds.user_ids));
  io::write_file(dir / "recipes.txt", detail::encode_lines(ds.recipe_ids));
  io::write_file(dir / "ingredients.txt",
                 detail::encode_lines(ds.ingredient_names));
  nlohmann::ordered_json manifest;
  manifest["format"] = "hafr-dataset-v1";
  manifest["num_users"] = ds.num_users;
  manifest["num_recipes"] = ds.num_recipes;
  manifest["num_ingredients"] = ds.num_ingredients;
  manifest["feature_dim"] = ds.feature_dim;
  manifest["splits"] = {{"train", ds.train.size()},
                        {"valid", ds.valid.size()},
                        {"test", ds.test.size()}};
  manifest["dropped"] = {{"duplicates", report.duplicates_dropped},
                         {"repeat_pairs", report.repeat_pairs_dropped},
                         {"users", report.users_dropped},
                         {"records", report.records_dropped}};
  manifest["checksum"] = dataset_checksum(ds);
  io::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

inline Dataset load_prepared(const std::filesystem::path& dir) {
  const auto manifest =
      nlohmann::json::parse(io::read_file(dir / "manifest.json"));
  if (manifest.value("format", "") != "hafr-dataset-v1") {
    throw Error((dir / "manifest.json").string() + ": unknown format");
  }
  Dataset ds;
  ds.num_users = manifest.at("num_users").get<std::size_t>();
  ds.num_recipes = manifest.at("num_recipes").get<std::size_t>();
  ds.num_ingredients = manifest.at("num_ingredients").get<std::size_t>();

  const auto splits_bytes = io::read_file(dir / "splits.bin");
  io::ByteReader sr(splits_bytes, (dir / "splits.bin").string());
  if (sr.bytes(detail::kSplitsMagic.size()) != detail::kSplitsMagic) {
    throw Error("splits.bin: bad magic");
  }
  std::array<std::uint32_t, 3> counts{sr.u32(), sr.u32(), sr.u32()};
  std::array<std::vector<Interaction>*, 3> parts{&ds.train, &ds.valid,
                                                 &ds.test};
  for (int p = 0; p < 3; ++p) {
    parts[p]->resize(counts[p]);
    for (auto& x : *parts[p]) {
      x.user = sr.u32();
      x.recipe = sr.u32();
    }
  }

  const auto ing_bytes = io::read_file(dir / "ingredients.bin");
  io::ByteReader ir(ing_bytes, (dir / "ingredients.bin").string());
  if (ir.bytes(detail::kIngredientsMagic.size()) != detail::kIngredientsMagic) {
    throw Error("ingredients.bin: bad magic");
  }
  ds.ingredients.resize(ir.u32());
  for (auto& list : ds.ingredients) {
    list.resize(ir.u32());
    for (auto& k : list) {
      k = ir.u32();
    }
  }

  auto [count, values] = decode_features(
      io::read_file(dir / "features.bin"), (dir / "features.bin").string(),
      ds.feature_dim);
  if (count != ds.num_recipes) {
    throw Error("features.bin: row count does not match manifest");
  }
  ds.features = std::move(values);
  ds.user_ids = detail::decode_lines(io::read_file(dir / "users.txt"));
  ds.recipe_ids = detail::decode_lines(io::read_file(dir / "recipes.txt"));
  ds.ingredient_names =
      detail::decode_lines(io::read_file(dir / "ingredients.txt"));
  ds.finalize();
  if (dataset_checksum(ds) != manifest.at("checksum").get<std::string>()) {
    throw Error((dir / "manifest.json").string() + ": checksum mismatch");
  }
  return ds;
}

}  // namespace hafr
