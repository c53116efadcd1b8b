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
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "hafr/checkpoint.hpp"
#include "hafr/config.hpp"
#include "hafr/dataset.hpp"
#include "hafr/evaluation.hpp"
#include "hafr/model/baselines.hpp"
#include "hafr/model/hafr.hpp"
#include "hafr/synth.hpp"
#include "hafr/training.hpp"

// Command implementations shared by the CLI and the test suites.

namespace hafr {

using AnyModel = std::variant<HafrModel<double>, MfBpr<double>,
                              FactorizationMachine<double>, Vbpr<double>>;

inline const std::vector<std::string>& baseline_kinds() {
  static const std::vector<std::string> kinds{"mf-bpr", "fm", "vbpr",
                                              "fm-vbpr"};
  return kinds;
}

inline const std::vector<std::string>& hafr_variant_names() {
  static const std::vector<std::string> names{
      "hafr", "hafr-non-v", "hafr-non-i", "avg-avg", "avg-att"};
  return names;
}

inline HafrHyper hafr_hyper(const TrainConfig& c) {
  return {c.embedding_dim, c.attention_dim, c.output_hidden,
          c.lambda_embed,  c.lambda_image,  c.lambda_mlp};
}

inline BaselineHyper baseline_hyper(const TrainConfig& c) {
  return {c.embedding_dim, c.lambda_embed, c.lambda_image};
}

inline AnyModel make_model(const Dataset& data, const TrainConfig& c,
                           std::uint64_t seed) {
  const auto seed_for = [&](const std::string& name) {
    return derive_stream(seed, "model/" + name).key();
  };
  if (c.variant == "mf-bpr") {
    return MfBpr<double>(data, baseline_hyper(c), seed_for(c.variant));
  }
  if (c.variant == "fm" || c.variant == "fm-vbpr") {
    return FactorizationMachine<double>(data, baseline_hyper(c),
                                        seed_for(c.variant),
                                        c.variant == "fm-vbpr");
  }
  if (c.variant == "vbpr") {
    return Vbpr<double>(data, baseline_hyper(c), seed_for(c.variant));
  }
  const auto variant = Variant::parse(c.variant);
  if (!variant) {
    std::string valid;
    for (const auto& n : hafr_variant_names()) valid += n + ", ";
    for (const auto& n : baseline_kinds()) valid += n + ", ";
    valid.resize(valid.size() - 2);
    throw Error("unknown variant '" + c.variant + "' (valid: " + valid + ")");
  }
  return HafrModel<double>(data, hafr_hyper(c), *variant, seed_for("hafr"));
}

inline AnyModel make_model(const Dataset& data, const TrainConfig& c) {
  return make_model(data, c, c.seed);
}

// Rebuilds the group layout recorded in a checkpoint manifest.
inline AnyModel model_from_manifest(const Dataset& data,
                                    const nlohmann::json& manifest) {
  const auto& d = manifest.at("descriptor");
  const auto kind = manifest.at("kind").get<std::string>();
  const auto seed = manifest.at("seed").get<std::uint64_t>();
  if (kind == "hafr") {
    HafrHyper h;
    h.embedding_dim = d.at("embedding_dim").get<int>();
    h.attention_dim = d.at("attention_dim").get<int>();
    h.output_hidden = d.at("output_hidden").get<int>();
    h.lambda_embed = d.at("lambda_embed").get<double>();
    h.lambda_image = d.at("lambda_image").get<double>();
    h.lambda_mlp = d.at("lambda_mlp").get<double>();
    return HafrModel<double>(data, h, Variant::from_json(d.at("variant")),
                             seed);
  }
  BaselineHyper h;
  h.embedding_dim = d.at("embedding_dim").get<int>();
  h.lambda_embed = d.at("lambda_embed").get<double>();
  h.lambda_image = d.at("lambda_image").get<double>();
  if (kind == "mf-bpr") return MfBpr<double>(data, h, seed);
  if (kind == "vbpr") return Vbpr<double>(data, h, seed);
  if (kind == "fm" || kind == "fm-vbpr") {
    return FactorizationMachine<double>(data, h, seed, kind == "fm-vbpr");
  }
  throw Error("checkpoint has unknown model kind '" + kind + "'");
}

inline ParamStore<double>& model_params(AnyModel& m) {
  return std::visit([](auto& x) -> ParamStore<double>& { return x.params(); },
                    m);
}

inline std::string model_kind(const AnyModel& m) {
  return std::visit(
      [](const auto& x) {
        return x.descriptor().at("kind").template get<std::string>();
      },
      m);
}

// Mirrors every message to stderr and, once a run directory is open, to
// run.log inside it.
class RunLog {
 public:
  RunLog() = default;
  explicit RunLog(const std::filesystem::path& dir) { open(dir); }

  void open(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    file_.open(dir / "run.log", std::ios::app);
    if (!file_) {
      throw Error("cannot open " + (dir / "run.log").string());
    }
  }
  void quiet(bool q) { quiet_ = q; }

  void info(const std::string& msg) { emit("info", msg); }
  void warn(const std::string& msg) { emit("warning", msg); }

 private:
  void emit(const char* level, const std::string& msg) {
    if (!quiet_) {
      std::cerr << level << ": " << msg << '\n';
    }
    if (file_) {
      file_ << level << ": " << msg << '\n';
      file_.flush();
    }
  }

  std::ofstream file_;
  bool quiet_ = false;
};

// ---------------------------------------------------------------------------
// prepare

inline nlohmann::ordered_json cmd_prepare(
    const std::filesystem::path& interactions,
    const std::filesystem::path& ingredients,
    const std::filesystem::path& features, const std::filesystem::path& out,
    std::uint32_t feature_dim, RunLog& log) {
  for (const auto& p : {interactions, ingredients, features}) {
    if (!std::filesystem::exists(p)) {
      throw Error("input file not found: " + p.string());
    }
  }
  const auto records = load_interactions(interactions);
  BuildOptions options;
  options.feature_dim = feature_dim;
  BuildReport report;
  const auto ds =
      build_dataset(records, ingredients, features, options, &report);
  if (report.duplicates_dropped) {
    log.warn("dropped " + std::to_string(report.duplicates_dropped) +
             " duplicate interaction rows");
  }
  if (report.repeat_pairs_dropped) {
    log.warn("kept the earliest of repeated (user, recipe) pairs; dropped " +
             std::to_string(report.repeat_pairs_dropped));
  }
  if (report.users_dropped) {
    log.warn("removed " + std::to_string(report.users_dropped) +
             " users absent from train or test (" +
             std::to_string(report.records_dropped) + " records)");
  }
  auto manifest = save_prepared(ds, out, report);
  log.info("prepared " + out.string() + ": " +
           std::to_string(ds.num_users) + " users, " +
           std::to_string(ds.num_recipes) + " recipes, " +
           std::to_string(ds.num_ingredients) + " ingredients");
  return manifest;
}

// ---------------------------------------------------------------------------
// synth

// Writes raw corpus files under out/raw and, when `prepare` is set, a
// prepared dataset under out/data.
inline nlohmann::ordered_json cmd_synth(const SynthConfig& cfg,
                                        const std::filesystem::path& out,
                                        RunLog& log, bool prepare = true) {
  const auto corpus = synth_generate_corpus(cfg);
  write_corpus(corpus, out / "raw");
  log.info("wrote synthetic corpus to " + (out / "raw").string());
  if (!prepare) {
    return {};
  }
  return cmd_prepare(out / "raw" / "interactions.tsv",
                     out / "raw" / "ingredients.tsv",
                     out / "raw" / "features.bin", out / "data",
                     cfg.feature_dim, log);
}

// ---------------------------------------------------------------------------
// train

struct TrainOutcome {
  AnyModel model;
  FitResult fit;
};

inline TrainOutcome train_model(const Dataset& data, const TrainConfig& cfg,
                                const std::function<void(const EpochLog&)>&
                                    on_epoch = {}) {
  cfg.validate();
  auto model = make_model(data, cfg);
  auto result = std::visit(
      [&](auto& m) { return fit(m, data, cfg, on_epoch); }, model);
  return {std::move(model), std::move(result)};
}

inline TrainOutcome cmd_train(const std::filesystem::path& data_dir,
                              const RunConfig& cfg,
                              const std::filesystem::path& model_out,
                              const std::filesystem::path& run_dir,
                              RunLog& log) {
  const auto data = load_prepared(data_dir);
  std::filesystem::create_directories(run_dir);
  std::ofstream train_log(run_dir / "train_log.jsonl", std::ios::trunc);
  log.info("training " + cfg.train.variant + " on " + data_dir.string() +
           " (validation uses " + std::to_string(cfg.train.valid_negatives) +
           " negatives)");
  auto outcome = train_model(data, cfg.train, [&](const EpochLog& e) {
    train_log << e.to_json().dump() << '\n';
    train_log.flush();
  });
  const auto descriptor = std::visit(
      [](const auto& m) { return m.descriptor(); }, outcome.model);
  save_checkpoint(model_out, model_params(outcome.model), descriptor,
                  dataset_checksum(data));
  log.info("best epoch " + std::to_string(outcome.fit.best_epoch) +
           ", checkpoint " + model_out.string());
  return outcome;
}

// ---------------------------------------------------------------------------
// eval

struct LoadedModel {
  AnyModel model;
  nlohmann::json manifest;
};

inline LoadedModel load_model(const std::filesystem::path& path,
                              const Dataset& data, RunLog& log) {
  auto manifest = read_checkpoint_manifest(path);
  if (manifest.value("dataset_checksum", "") != dataset_checksum(data)) {
    log.warn(path.string() + " was trained on a different dataset");
  }
  auto model = model_from_manifest(data, manifest);
  load_checkpoint_values(path, manifest, model_params(model));
  return {std::move(model), std::move(manifest)};
}

inline EvalReport evaluate_model(const AnyModel& model, const Dataset& data,
                                 const EvalConfig& cfg, std::size_t groups) {
  return std::visit(
      [&](const auto& m) {
        return groups > 0 ? popularity_group_report(m, data, cfg, groups)
                          : evaluate(m, data, cfg);
      },
      model);
}

inline void warn_about_report(const EvalReport& r, RunLog& log) {
  if (r.skipped) {
    log.warn(std::to_string(r.skipped) +
             " test instances had no eligible negatives and were skipped");
  }
  if (r.shortfall) {
    log.warn("negative pool shortfall: " + std::to_string(r.shortfall) +
             " negatives missing across instances");
  }
}

inline std::string comparison_tsv(const std::vector<MetricComparison>& rows,
                                  const std::string& a, const std::string& b) {
  std::ostringstream out;
  out.precision(17);
  out << "metric\tmean_" << a << "\tmean_" << b << "\tt\tp\n";
  for (const auto& c : rows) {
    out << c.label << '\t' << c.mean_a << '\t' << c.mean_b << '\t'
        << c.welch.statistic << '\t' << c.welch.p_value << '\n';
  }
  return out.str();
}

struct EvalOutcome {
  EvalReport report;
  std::optional<EvalReport> other;
  std::vector<MetricComparison> comparison;
};

inline EvalOutcome cmd_eval(const std::filesystem::path& model_path,
                            const std::filesystem::path& data_dir,
                            const EvalConfig& cfg, std::size_t groups,
                            const std::optional<std::filesystem::path>& compare,
                            const std::filesystem::path& run_dir, RunLog& log) {
  const auto data = load_prepared(data_dir);
  const auto loaded = load_model(model_path, data, log);
  EvalOutcome out;
  out.report = evaluate_model(loaded.model, data, cfg, groups);
  warn_about_report(out.report, log);
  std::filesystem::create_directories(run_dir);
  io::write_file(run_dir / "report.json",
                 report_to_json(out.report).dump(2) + "\n");
  std::string tsv = report_to_tsv(out.report);
  if (compare) {
    const auto other = load_model(*compare, data, log);
    out.other = evaluate_model(other.model, data, cfg, 0);
    tsv += report_to_tsv(*out.other, false);
    out.comparison = compare_reports(out.report, *out.other);
    io::write_file(run_dir / "comparison.tsv",
                   comparison_tsv(out.comparison, out.report.variant,
                                  out.other->variant));
  }
  io::write_file(run_dir / "report.tsv", tsv);
  return out;
}

// ---------------------------------------------------------------------------
// ablate / sweep

struct TableRow {
  std::string label;
  EvalReport report;
  FitResult fit;
};

inline std::string metric_table(const std::string& first_column,
                                const std::vector<TableRow>& rows, int k = 10) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << first_column << "\tAUC\tNDCG@" << k << "\tRecall@" << k
      << "\tbest_epoch\n";
  for (const auto& r : rows) {
    out << r.label << '\t' << r.report.mean("auc") << '\t'
        << r.report.mean("ndcg", k) << '\t' << r.report.mean("recall", k)
        << '\t' << r.fit.best_epoch << '\n';
  }
  return out.str();
}

inline TableRow train_and_evaluate(const Dataset& data, const RunConfig& cfg,
                                   const std::string& label) {
  auto outcome = train_model(data, cfg.train);
  auto report = evaluate_model(outcome.model, data, cfg.eval, 0);
  return {label, std::move(report), std::move(outcome.fit)};
}

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v{"avg-avg", "avg-att", "hafr",
                                          "hafr-non-v", "hafr-non-i"};
  return v;
}

inline std::vector<TableRow> cmd_ablate(const std::filesystem::path& data_dir,
                                        const RunConfig& cfg,
                                        const std::filesystem::path& run_dir,
                                        RunLog& log) {
  const auto data = load_prepared(data_dir);
  std::vector<TableRow> rows;
  for (const auto& name : ablation_variants()) {
    auto c = cfg;
    c.train.variant = name;
    log.info("ablation: " + name);
    rows.push_back(train_and_evaluate(data, c, name));
    warn_about_report(rows.back().report, log);
  }
  std::filesystem::create_directories(run_dir);
  io::write_file(run_dir / "ablation.tsv", metric_table("variant", rows));
  std::string tsv;
  for (std::size_t j = 0; j < rows.size(); ++j) {
    tsv += report_to_tsv(rows[j].report, j == 0);
  }
  io::write_file(run_dir / "report.tsv", tsv);
  return rows;
}

inline const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes{"delta", "lambda_mlp"};
  return axes;
}

inline std::vector<TableRow> cmd_sweep(const std::filesystem::path& data_dir,
                                       const RunConfig& cfg,
                                       const std::string& axis,
                                       const std::vector<double>& values,
                                       const std::filesystem::path& run_dir,
                                       RunLog& log) {
  if (axis != "delta" && axis != "lambda_mlp") {
    throw Error("invalid sweep axis '" + axis +
                "' (valid axes: delta, lambda_mlp)");
  }
  if (values.empty()) {
    throw Error("sweep: no values given");
  }
  const auto data = load_prepared(data_dir);
  std::vector<TableRow> rows;
  for (double v : values) {
    auto c = cfg;
    std::ostringstream label;
    if (axis == "delta") {
      if (v < 1 || v != std::floor(v)) {
        throw Error("sweep: delta values must be positive integers");
      }
      c.train.attention_dim = static_cast<int>(v);
      label << c.train.attention_dim;
    } else {
      if (!(v >= 0.0)) {
        throw Error("sweep: lambda_mlp values must be >= 0");
      }
      c.train.lambda_mlp = v;
      label << v;
    }
    log.info("sweep " + axis + "=" + label.str());
    rows.push_back(train_and_evaluate(data, c, label.str()));
  }
  std::filesystem::create_directories(run_dir);
  io::write_file(run_dir / "sweep.tsv", metric_table(axis, rows));
  return rows;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradCheckOptions {
  std::size_t probes = 200;
  std::size_t batch = 16;
  double h = 1e-6;
  double tolerance = 1e-4;
  // Negative control: adds 1 to every analytic gradient of the first
  // touched group before probing.
  bool corrupt_gradient = false;
};

struct GradCheckReport {
  std::string variant;
  GradCheckResult result;
  bool passed = false;
};

inline SynthConfig gradcheck_synth(std::uint64_t seed) {
  SynthConfig s;
  s.num_users = 24;
  s.num_recipes = 30;
  s.num_ingredients = 12;
  s.ingredients_per_recipe = 5;
  s.min_ingredients_per_recipe = 1;
  s.interactions_per_user = 8;
  s.feature_dim = 8;
  s.seed = seed;
  return s;
}

// Analytic gradient of Σ BPR + λ‖θ_touched‖² over one synthetic batch,
// checked against central differences, with parameters moved off their
// initialization so every path carries signal.
template <typename Model>
GradCheckReport gradcheck_model(Model& model, const Dataset& data,
                                const GradCheckOptions& opt,
                                std::uint64_t seed) {
  auto& params = model.params();
  auto perturb = derive_stream(seed, "gradcheck/perturb");
  for (auto& g : params) {
    for (Eigen::Index j = 0; j < g.value.size(); ++j) {
      g.value.data()[j] += 0.3 * perturb.normal();
    }
  }
  auto triples = epoch_triples(data, seed, 1);
  triples.resize(std::min(triples.size(), opt.batch));
  params.zero_grad();
  for (const auto& t : triples) {
    const auto pos = model.forward(t.u, t.i);
    const auto neg = model.forward(t.u, t.k);
    model.backward(pos, neg, bpr_loss(pos.score, neg.score).grad);
  }
  params.apply_l2();
  if (opt.corrupt_gradient) {
    for (auto& g : params) {
      if (g.any_touched()) {
        g.grad.array() += 1.0;
        break;
      }
    }
  }
  auto loss = [&](ParamStore<double>&) {
    double total = 0.0;
    for (const auto& t : triples) {
      total += bpr_loss(model.score(t.u, t.i), model.score(t.u, t.k)).loss;
    }
    return total + params.l2_penalty();
  };
  GradCheckReport out;
  out.variant = model.variant_name();
  out.result = grad_check(loss, params, opt.probes, opt.h, seed);
  out.passed = out.result.max_relative_error < opt.tolerance;
  params.zero_grad();
  return out;
}

inline std::vector<std::string> gradcheck_all_variants() {
  std::vector<std::string> v = hafr_variant_names();
  v.insert(v.end(), baseline_kinds().begin(), baseline_kinds().end());
  return v;
}

inline GradCheckReport cmd_gradcheck(const TrainConfig& cfg,
                                     const GradCheckOptions& opt) {
  const auto data = synth_generate(gradcheck_synth(cfg.seed));
  auto c = cfg;
  auto model = make_model(data, c);
  return std::visit(
      [&](auto& m) { return gradcheck_model(m, data, opt, cfg.seed); }, model);
}

}  // namespace hafr
