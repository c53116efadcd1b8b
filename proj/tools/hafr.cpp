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

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hafr/hafr.hpp"

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

hafr::RunConfig resolve_config(const Globals& g) {
  auto cfg = g.config.empty() ? hafr::parse_run_config(nlohmann::json::object())
                              : hafr::load_run_config(g.config);
  if (g.seed) {
    hafr::set_seed(cfg, *g.seed);
  }
  cfg.eval.threads = g.threads;
  return cfg;
}

// The config file is copied byte for byte; without one the effective
// defaults are written instead.
void echo_config(const Globals& g, const hafr::RunConfig& cfg,
                 const fs::path& run_dir) {
  fs::create_directories(run_dir);
  if (!g.config.empty()) {
    fs::copy_file(g.config, run_dir / "config.json",
                  fs::copy_options::overwrite_existing);
  } else {
    hafr::io::write_file(run_dir / "config.json",
                         hafr::run_config_to_json(cfg).dump(2) + "\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hafr: hierarchical attention food recommendation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON run configuration")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "master seed (overrides the config)");
  app.add_option("--threads", g.threads, "evaluation worker threads")
      ->check(CLI::PositiveNumber);

  std::string run_dir = "run";
  auto add_run_dir = [&](CLI::App* sub) {
    sub->add_option("--run-dir", run_dir, "output directory for this run");
  };

  // prepare
  auto* prepare = app.add_subcommand("prepare", "ingest raw files");
  std::string interactions, ingredients, features, prepared_out;
  std::optional<std::uint32_t> feature_dim;
  prepare->add_option("--interactions", interactions)->required();
  prepare->add_option("--ingredients", ingredients)->required();
  prepare->add_option("--features", features)->required();
  prepare->add_option("--out", prepared_out, "prepared dataset dir")
      ->required();
  prepare->add_option("--feature-dim", feature_dim, "image feature width");
  add_run_dir(prepare);

  // synth
  auto* synth = app.add_subcommand("synth", "generate planted-preference data");
  std::string synth_out;
  bool synth_raw_only = false;
  synth->add_option("--out", synth_out)->required();
  synth->add_flag("--raw-only", synth_raw_only, "skip the prepare step");
  add_run_dir(synth);

  // train
  auto* train = app.add_subcommand("train", "fit a model");
  std::string data_dir, model_out, variant;
  std::optional<int> epochs;
  train->add_option("--data", data_dir)->required();
  train->add_option("--out", model_out, "checkpoint path")->required();
  train->add_option("--variant", variant, "hafr variant or baseline kind");
  train->add_option("--epochs", epochs, "max epochs");
  add_run_dir(train);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string model_path;
  std::optional<std::string> compare;
  std::size_t groups = 0;
  std::optional<int> repeats;
  std::optional<std::size_t> negatives;
  eval->add_option("--model", model_path)->required();
  eval->add_option("--data", data_dir)->required();
  eval->add_option("--compare", compare, "second checkpoint for Welch tests");
  eval->add_option("--groups", groups, "popularity groups (0 = off)");
  eval->add_option("--repeats", repeats);
  eval->add_option("--negatives", negatives);
  add_run_dir(eval);

  // ablate
  auto* ablate = app.add_subcommand("ablate", "attention ablation table");
  ablate->add_option("--data", data_dir)->required();
  add_run_dir(ablate);

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check");
  std::string gc_variant = "all";
  hafr::GradCheckOptions gc;
  gradcheck->add_option("--variant", gc_variant, "variant name or 'all'");
  gradcheck->add_option("--probes", gc.probes);
  gradcheck->add_flag("--corrupt-gradient", gc.corrupt_gradient,
                      "negative control: perturb analytic gradients");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "hyperparameter sweep");
  std::string axis;
  std::vector<double> values;
  sweep->add_option("--data", data_dir)->required();
  sweep->add_option("--axis", axis, "delta | lambda_mlp")->required();
  sweep->add_option("--values", values)->required()->delimiter(',');
  add_run_dir(sweep);

  for (auto* sub : app.get_subcommands({})) {
    sub->fallthrough();
  }

  CLI11_PARSE(app, argc, argv);

  hafr::RunLog log;
  try {
    auto cfg = resolve_config(g);
    if (*gradcheck) {
      const auto names = gc_variant == "all"
                             ? hafr::gradcheck_all_variants()
                             : std::vector<std::string>{gc_variant};
      bool ok = true;
      for (const auto& name : names) {
        auto tc = cfg.train;
        tc.variant = name;
        // Small sizes keep every probe cheap; the check is size-agnostic.
        tc.embedding_dim = 6;
        tc.attention_dim = 5;
        const auto r = hafr::cmd_gradcheck(tc, gc);
        std::cout << name << "\tmax_rel_err=" << r.result.max_relative_error
                  << "\tprobes=" << r.result.probes << "\t"
                  << (r.passed ? "PASS" : "FAIL") << '\n';
        ok = ok && r.passed;
      }
      return ok ? 0 : 2;
    }

    log.open(run_dir);
    echo_config(g, cfg, run_dir);

    if (*prepare) {
      const auto m = hafr::cmd_prepare(
          interactions, ingredients, features, prepared_out,
          feature_dim.value_or(cfg.data.feature_dim), log);
      std::cout << m.dump(2) << '\n';
    } else if (*synth) {
      const auto m = hafr::cmd_synth(cfg.synth, synth_out, log, !synth_raw_only);
      if (!synth_raw_only) {
        std::cout << m.dump(2) << '\n';
      }
    } else if (*train) {
      if (!variant.empty()) cfg.train.variant = variant;
      if (epochs) {
        cfg.train.max_epochs = *epochs;
        cfg.train.patience = std::min(cfg.train.patience, *epochs);
      }
      const auto out = hafr::cmd_train(data_dir, cfg, model_out, run_dir, log);
      std::cout << "best_epoch\t" << out.fit.best_epoch << '\n';
      if (out.fit.best_valid_auc) {
        std::cout << "valid_auc\t" << *out.fit.best_valid_auc << '\n';
      }
    } else if (*eval) {
      if (repeats) cfg.eval.repeats = *repeats;
      if (negatives) cfg.eval.num_negatives = *negatives;
      std::optional<fs::path> other;
      if (compare) other = *compare;
      const auto out = hafr::cmd_eval(model_path, data_dir, cfg.eval, groups,
                                      other, run_dir, log);
      std::vector<hafr::EvalReport> rows{out.report};
      if (out.other) rows.push_back(*out.other);
      std::cout << hafr::summary_table(rows);
      if (!out.comparison.empty()) {
        std::cout << hafr::comparison_tsv(out.comparison, out.report.variant,
                                          out.other->variant);
      }
    } else if (*ablate) {
      const auto rows = hafr::cmd_ablate(data_dir, cfg, run_dir, log);
      std::cout << hafr::metric_table("variant", rows);
    } else if (*sweep) {
      const auto rows =
          hafr::cmd_sweep(data_dir, cfg, axis, values, run_dir, log);
      std::cout << hafr::metric_table(axis, rows);
    }
  } catch (const std::exception& e) {
    log.quiet(true);
    log.warn(std::string("error: ") + e.what());
    std::cerr << "hafr: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
