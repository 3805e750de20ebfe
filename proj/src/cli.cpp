#include "scrub/cli.hpp"

#include <fstream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "scrub/error.hpp"
#include "scrub/orchestrator.hpp"
#include "scrub/report.hpp"

namespace scrub {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

bool is_validation_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::InvalidSpec:
    case ErrorKind::InvalidStep:
    case ErrorKind::UnknownDataset:
    case ErrorKind::UnknownColumn:
    case ErrorKind::TypeMismatch:
    case ErrorKind::MissingTarget:
      return true;
    default:
      return false;
  }
}

PreparedDataset prepare_dataset(const std::string& dataset, const std::string& config_path,
                                const std::string& recipe_path, std::optional<std::uint64_t> seed) {
  DatasetBundle bundle;
  std::optional<CorruptionRecipe> recipe;
  if (!recipe_path.empty()) recipe = load_recipe(recipe_path);

  std::optional<DatasetEntry> entry;
  if (!config_path.empty()) {
    const auto entries = load_datasets_config(config_path);
    if (const auto it = entries.find(dataset); it != entries.end()) entry = it->second;
  }

  if (dataset == kSyntheticDefault && !entry) {
    bundle = generate_synthetic(default_synthetic_spec());
  } else {
    if (!entry) {
      throw Error(ErrorKind::InvalidConfig,
                  "dataset '" + dataset + "' needs an entry in the datasets config (--config)");
    }
    auto task = entry->task ? *entry->task : default_task_for(dataset).value_or(TaskSpec{});
    if (task.target_column.empty()) {
      throw Error(ErrorKind::InvalidConfig, "dataset '" + dataset + "' has no task definition");
    }
    const auto path = fetch_dataset(entry->source);
    LoadOptions options;
    options.index_column = task.index_column;
    options.kind_overrides = task.kind_overrides;
    const auto raw = load_csv(path, options);
    bundle = prepare_bundle(raw, task, Provenance{entry->source.id, sha256_file(path), task.split_seed});
    if (!recipe && entry->recipe_path) recipe = load_recipe(*entry->recipe_path);
  }
  if (!recipe) recipe = recipe_for(dataset);
  if (seed) recipe->master_seed = *seed;
  return corrupt_bundle(std::move(bundle), *recipe);
}

PipelineConfig pipeline_from(const std::string& config_path) {
  if (config_path.empty()) return {};
  std::ifstream in(config_path);
  if (!in) throw Error(ErrorKind::FileNotFound, "cannot open " + config_path);
  const auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::InvalidConfig, config_path + " is not valid JSON");
  return j.contains("pipeline") ? pipeline_config_from_json(j["pipeline"]) : PipelineConfig{};
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Benchmark harness for data-cleaning agents", "scrub"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Config file (JSON)");
    sub->add_option("--seed", seed, "Seed override");
  };

  std::string dataset;
  std::string recipe_path;
  std::string out_dir;
  auto* corrupt = app.add_subcommand("corrupt", "Build a bundle and corrupt its training split");
  add_common(corrupt);
  corrupt->add_option("--dataset", dataset, "Dataset id")->required();
  corrupt->add_option("--recipe", recipe_path, "Recipe JSON overriding the built-in one");
  corrupt->add_option("--out", out_dir, "Output directory (default bundles/<dataset>)");

  std::string bundle_dir;
  std::string output_file;
  auto* baseline = app.add_subcommand("baseline", "Compute P_Clean and P_Dirty for a bundle");
  add_common(baseline);
  baseline->add_option("--bundle", bundle_dir, "Bundle directory from `corrupt`")->required();
  baseline->add_option("--out", output_file, "Also write the report to this file");

  std::string episodes_dir = "episodes";
  auto* run = app.add_subcommand("run", "Run the episodes described by a run config");
  add_common(run);
  run->add_option("--bundle", bundle_dir, "Bundle directory from `corrupt`")->required();
  run->add_option("--episodes", episodes_dir, "Episodes root directory");

  std::string transcript;
  bool verify = false;
  auto* replay_cmd = app.add_subcommand("replay", "Re-score an episode from its transcript");
  add_common(replay_cmd);
  replay_cmd->add_option("transcript", transcript, "transcript.jsonl or its episode directory")->required();
  replay_cmd->add_flag("--verify", verify, "Fail unless the replay matches result.json byte for byte");

  std::vector<std::uint64_t> thresholds;
  auto* report = app.add_subcommand("report", "Aggregate episodes into summary tables");
  add_common(report);
  report->add_option("--episodes", episodes_dir, "Episodes root directory");
  report->add_option("--out", out_dir, "Output directory (default <episodes>/report)");
  report->add_option("--thresholds", thresholds, "Token thresholds for the curves");

  std::vector<std::string> argv_tail(args.rbegin(), args.rend());
  try {
    app.parse(std::move(argv_tail));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& error) {
    err << "error: " << error.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*corrupt) {
      const auto prepared = prepare_dataset(dataset, config_path, recipe_path, seed);
      const fs::path target = out_dir.empty() ? fs::path("bundles") / dataset : fs::path(out_dir);
      save_prepared(prepared, target);
      out << json{{"bundle", target.string()},
                  {"train_rows", prepared.bundle.train_clean.num_rows()},
                  {"test_rows", prepared.bundle.test_clean.num_rows()},
                  {"corrupted_cells", prepared.log.entries.size()},
                  {"master_seed", prepared.recipe.master_seed}}
                 .dump(2)
          << '\n';
    } else if (*baseline) {
      auto pipeline = pipeline_from(config_path);
      if (seed) pipeline.training_seed = *seed;
      const auto prepared = load_prepared(bundle_dir);
      const auto text = baseline_to_json(compute_baselines(prepared.bundle, pipeline)).dump(2) + "\n";
      out << text;
      if (!output_file.empty()) {
        std::ofstream file(output_file, std::ios::trunc);
        if (!file) throw Error(ErrorKind::IoError, "cannot write " + output_file);
        file << text;
      }
    } else if (*run) {
      if (config_path.empty()) throw Error(ErrorKind::InvalidConfig, "run needs --config");
      auto config = load_run_config(config_path);
      if (seed) config.seed = *seed;
      const auto prepared = load_prepared(bundle_dir);
      if (config.dataset_id.empty()) config.dataset_id = fs::path(bundle_dir).filename().string();
      const auto results = run_experiment(config, prepared, episodes_dir);
      json summary = json::array();
      for (const auto& result : results) {
        summary.push_back({{"run_id", result.run_id},
                           {"best_score", result.best_score},
                           {"improvement", result.improvement},
                           {"termination", result.termination},
                           {"submissions", result.submissions.size()}});
      }
      out << summary.dump(2) << '\n';
    } else if (*replay_cmd) {
      fs::path path(transcript);
      if (fs::is_directory(path)) path /= "transcript.jsonl";
      const auto text = run_result_text(replay(path));
      out << text;
      if (verify) {
        std::ifstream in(path.parent_path() / "result.json", std::ios::binary);
        const std::string recorded((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (recorded != text) {
          err << "replay differs from " << (path.parent_path() / "result.json").string() << '\n';
          return 2;
        }
      }
    } else if (*report) {
      if (thresholds.empty()) thresholds = default_thresholds();
      std::sort(thresholds.begin(), thresholds.end());
      const fs::path target = out_dir.empty() ? fs::path(episodes_dir) / "report" : fs::path(out_dir);
      const auto summary = write_report(episodes_dir, target, thresholds);
      out << improvement_csv(summary);
    }
  } catch (const Error& error) {
    err << "error: " << error.what() << '\n';
    return is_validation_error(error.kind()) ? 1 : 2;
  } catch (const std::exception& error) {
    err << "error: " << error.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace scrub
