#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scrub/agent.hpp"
#include "scrub/corruption.hpp"
#include "scrub/gate.hpp"
#include "scrub/pipeline.hpp"
#include "scrub/provisioning.hpp"
#include "scrub/sandbox.hpp"

namespace scrub {

enum class HintLevel { None, Weak, Strong };

std::string_view to_string(HintLevel level);
HintLevel hint_level_from_string(std::string_view text);

struct RunConfig {
  std::string dataset_id;
  std::string recipe_id;
  HintLevel hint_level = HintLevel::None;
  std::uint64_t token_budget = 200000;
  // Rendered as the goal score; P_Clean when unset.
  std::optional<double> goal_f1;
  AgentSpec agent;
  int repeats = 6;
  std::uint64_t seed = 0;
  PipelineConfig pipeline;
  SandboxLimits sandbox;
  WorkerCommand worker;
  // Safety stop for agents that never exhaust the budget.
  int max_turns = 500;
  std::string no_hint_text = "none";
};

void validate_run_config(const RunConfig& config);
nlohmann::json run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& json);
RunConfig load_run_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Prompt

std::string hint_text(HintLevel level, const CorruptionRecipe& recipe, const std::string& no_hint_text);

// The fixed initial prompt with its slots filled. Scores use four decimals.
std::string render_initial_prompt(double p_dirty, double goal, const std::string& target_column,
                                  const std::string& dataset_description, const std::string& pipeline_code,
                                  const std::string& hint);

std::string build_initial_prompt(const RunConfig& config, const TaskSpec& task, const BaselineReport& baselines,
                                 const std::string& pipeline_code, const CorruptionRecipe& recipe);

// ---------------------------------------------------------------------------
// Episode records

struct ToolResponse {
  std::string call_id;
  std::string name;
  std::string content;
  // Code calls: whether the call created or changed a train_cleaned_v*.csv.
  bool wrote_submission = false;
  // Submit calls: ordinal of the resulting SubmissionRecord.
  std::optional<int> submission;
};

struct Turn {
  int ordinal = 0;
  std::string text;
  std::vector<ToolCall> tool_calls;
  std::vector<ToolResponse> responses;
  TokenUsage usage;
  std::uint64_t cumulative_tokens = 0;
};

nlohmann::json turn_to_json(const Turn& turn);
Turn turn_from_json(const nlohmann::json& json);

// p_{j+1} = p_j + output_j + responses_j.
Conversation conversation_after(const std::string& initial_prompt, const std::vector<Turn>& turns);

struct SubmissionRecord {
  int ordinal = 0;
  std::string path;
  // Copy of the submitted file, relative to the episode directory; empty when the path did not exist.
  std::string artifact;
  ValidationVerdict verdict;
  std::optional<double> score;
  int turn = 0;
  std::uint64_t cumulative_tokens = 0;
};

nlohmann::json submission_to_json(const SubmissionRecord& record);
SubmissionRecord submission_from_json(const nlohmann::json& json);

struct BestSubmission {
  std::optional<int> ordinal;  // empty: no accepted submission
  double score = 0.0;
};

// Highest accepted score, earliest ordinal on ties; `fallback` when none.
BestSubmission best_of(const std::vector<SubmissionRecord>& records, double fallback);

struct TokenAccount {
  std::uint64_t total = 0;
  bool terminate = false;
};

TokenAccount account_tokens(std::uint64_t cumulative, const TokenUsage& usage, std::uint64_t budget);

struct RunResult {
  std::string run_id;
  std::string dataset_id;
  std::string agent;
  HintLevel hint_level = HintLevel::None;
  double p_clean = 0.0;
  double p_dirty = 0.0;
  std::vector<SubmissionRecord> submissions;
  std::optional<int> best_ordinal;
  double best_score = 0.0;
  // best_score - p_dirty, unfloored.
  double improvement = 0.0;
  std::string termination;
  int turns = 0;
  std::uint64_t cumulative_tokens = 0;
  int code_calls = 0;
  int submission_code_calls = 0;
  std::string transcript = "transcript.jsonl";
};

nlohmann::json run_result_to_json(const RunResult& result);
RunResult run_result_from_json(const nlohmann::json& json);
// Pretty JSON with a trailing newline; the form written to result.json.
std::string run_result_text(const RunResult& result);
RunResult load_run_result(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Episodes

struct EpisodeSetup {
  RunConfig config;
  std::string run_id;
  const DatasetBundle* bundle = nullptr;  // must carry train_dirty
  const CorruptionRecipe* recipe = nullptr;
  const GroundTruthLog* log = nullptr;    // optional; only scripted oracles read it
  BaselineReport baselines;
};

// Episode directory layout:
//   episode.json       config, baselines, initial prompt, termination
//   transcript.jsonl   one turn per line
//   result.json        RunResult
//   sandbox/           worker cwd with train.csv and the agent's files
//   submissions/       copies of every submitted file
//   bundle/            the bundle the episode was scored against
//
// Creates the sandbox and stages train.csv. Returns the sandbox root.
std::filesystem::path stage_episode(const EpisodeSetup& setup, const std::filesystem::path& episode_dir);

// `executor` may be null for agents that never call the code tool.
RunResult run_episode(const EpisodeSetup& setup, Agent& agent, CodeExecutor* executor,
                      const std::filesystem::path& episode_dir);

// Rebuilds the RunResult from the transcript and the retained artifacts,
// re-running the gate and evaluator. Throws TranscriptCorrupt or MissingArtifacts.
RunResult replay(const std::filesystem::path& transcript_path);

// ---------------------------------------------------------------------------
// Experiments

struct PreparedDataset {
  DatasetBundle bundle;  // with train_dirty
  CorruptionRecipe recipe;
  GroundTruthLog log;
};

// Corrupts a clean bundle with `recipe`.
PreparedDataset corrupt_bundle(DatasetBundle bundle, const CorruptionRecipe& recipe);

// bundle files plus recipe.json and ground_truth_log.csv.
void save_prepared(const PreparedDataset& prepared, const std::filesystem::path& dir);
PreparedDataset load_prepared(const std::filesystem::path& dir);

std::string make_run_id(const RunConfig& config, int repeat);

// Runs config.repeats episodes under episodes_root/<run-id>/. Scripted
// policies that never call the code tool run without a worker.
std::vector<RunResult> run_experiment(const RunConfig& config, const PreparedDataset& prepared,
                                      const std::filesystem::path& episodes_root);

}  // namespace scrub
