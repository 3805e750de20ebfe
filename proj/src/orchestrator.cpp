#include "scrub/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "scrub/error.hpp"

namespace scrub {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(HintLevel level) {
  switch (level) {
    case HintLevel::None: return "none";
    case HintLevel::Weak: return "weak";
    case HintLevel::Strong: return "strong";
  }
  return "none";
}

HintLevel hint_level_from_string(std::string_view text) {
  for (auto level : {HintLevel::None, HintLevel::Weak, HintLevel::Strong}) {
    if (to_string(level) == text) return level;
  }
  throw Error(ErrorKind::InvalidConfig, "hint level must be none, weak or strong, got '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Run configuration

void validate_run_config(const RunConfig& config) {
  if (config.token_budget == 0) throw Error(ErrorKind::InvalidConfig, "token_budget must be positive");
  if (config.goal_f1 && !(*config.goal_f1 > 0.0 && *config.goal_f1 <= 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "goal_f1 must lie in (0, 1]");
  }
  if (config.repeats <= 0) throw Error(ErrorKind::InvalidConfig, "repeats must be positive");
  if (config.max_turns <= 0) throw Error(ErrorKind::InvalidConfig, "max_turns must be positive");
}

json run_config_to_json(const RunConfig& config) {
  return {{"dataset", config.dataset_id},
          {"recipe", config.recipe_id},
          {"hint_level", std::string(to_string(config.hint_level))},
          {"token_budget", config.token_budget},
          {"goal_f1", config.goal_f1 ? json(*config.goal_f1) : json(nullptr)},
          {"agent", agent_spec_to_json(config.agent)},
          {"repeats", config.repeats},
          {"seed", config.seed},
          {"pipeline", pipeline_config_to_json(config.pipeline)},
          {"sandbox",
           {{"exec_timeout_s", config.sandbox.exec_timeout_s},
            {"output_limit", config.sandbox.output_limit},
            {"handshake_timeout_s", config.sandbox.handshake_timeout_s},
            {"shutdown_grace_s", config.sandbox.shutdown_grace_s}}},
          {"worker", config.worker.argv},
          {"max_turns", config.max_turns},
          {"no_hint_text", config.no_hint_text}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig config;
  try {
    config.dataset_id = j.value("dataset", std::string());
    config.recipe_id = j.value("recipe", config.dataset_id);
    config.hint_level = hint_level_from_string(j.value("hint_level", std::string("none")));
    config.token_budget = j.value("token_budget", config.token_budget);
    if (j.contains("goal_f1") && !j["goal_f1"].is_null()) config.goal_f1 = j["goal_f1"].get<double>();
    if (j.contains("agent")) config.agent = agent_spec_from_json(j["agent"]);
    config.repeats = j.value("repeats", config.repeats);
    config.seed = j.value("seed", config.seed);
    if (j.contains("pipeline")) config.pipeline = pipeline_config_from_json(j["pipeline"]);
    if (j.contains("sandbox")) {
      const auto& s = j["sandbox"];
      config.sandbox.exec_timeout_s = s.value("exec_timeout_s", config.sandbox.exec_timeout_s);
      config.sandbox.output_limit = s.value("output_limit", config.sandbox.output_limit);
      config.sandbox.handshake_timeout_s = s.value("handshake_timeout_s", config.sandbox.handshake_timeout_s);
      config.sandbox.shutdown_grace_s = s.value("shutdown_grace_s", config.sandbox.shutdown_grace_s);
    }
    if (j.contains("worker")) config.worker.argv = j["worker"].get<std::vector<std::string>>();
    config.max_turns = j.value("max_turns", config.max_turns);
    config.no_hint_text = j.value("no_hint_text", config.no_hint_text);
  } catch (const json::exception& error) {
    throw Error(ErrorKind::InvalidConfig, std::string("run config: ") + error.what());
  }
  validate_run_config(config);
  return config;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::FileNotFound, "cannot open " + path.string());
  const auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::InvalidConfig, path.string() + " is not valid JSON");
  return run_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Prompt

std::string hint_text(HintLevel level, const CorruptionRecipe& recipe, const std::string& no_hint_text) {
  switch (level) {
    case HintLevel::Weak: return recipe.weak_hint;
    case HintLevel::Strong: return recipe.strong_hint;
    case HintLevel::None: break;
  }
  return no_hint_text;
}

namespace {

std::string fixed4(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.4f", value);
  return buffer;
}

}  // namespace

std::string render_initial_prompt(double p_dirty, double goal, const std::string& target_column,
                                  const std::string& dataset_description, const std::string& pipeline_code,
                                  const std::string& hint) {
  std::string out;
  out += "You have been provided with a dataset containing structural errors that degrade your model's "
         "performance. Your goal is to identify and correct these errors so that the model's F1 score increases "
         "from " +
         fixed4(p_dirty) + " to at least " + fixed4(goal) + ". The target column is " + target_column + ".\n";
  out += "\n"
         "1. Locate and fix any inconsistent or illogical values in the data. Examples of inconsistencies might "
         "include negative values where they cannot logically occur, incorrect category assignments, or strange "
         "drift in the data.\n"
         "\n"
         "2. Your training dataset is located in sandbox/train.csv.\n"
         "\n"
         "3. Each time you attempt a fix, save your cleaned dataset as train_cleaned_v*.csv with an updated "
         "version number (e.g., train_cleaned_v1.csv, train_cleaned_v2.csv, etc.).\n"
         "\n"
         "4. After updating and saving the cleaned dataset, call submit_clean_data() to evaluate the model on the "
         "test set.\n"
         "\n"
         "5. You may run code to explore and fix the dataset with execute_code_ipython_shell(), but you cannot:\n"
         "- Plot graphs or use graphical libraries.\n"
         "- Add new columns to the dataset.\n"
         "- Modify or drop the _competition_index column (doing so will break the evaluation process).\n"
         "- Add new rows to the dataset.\n"
         "\n"
         "6. Focus on increasing the model's F1 score by correcting structural issues. These issues typically "
         "involve values that are inconsistent with the dataset's real-world context.\n"
         "\n"
         "Tip: You need to understand the dataset to identify and correct errors. Don't just submit attempts "
         "blindly.\n"
         "\n"
         "The dataset description is as follows: \n";
  out += dataset_description + "\n";
  out += "\n"
         "This is the preprocessing pipeline code before training:\n"
         "```python\n";
  out += pipeline_code;
  if (!pipeline_code.empty() && pipeline_code.back() != '\n') out += '\n';
  out += "```\n"
         "\n"
         "Hint: " +
         hint + "\n";
  return out;
}

std::string build_initial_prompt(const RunConfig& config, const TaskSpec& task, const BaselineReport& baselines,
                                 const std::string& pipeline_code, const CorruptionRecipe& recipe) {
  const double goal = config.goal_f1.value_or(baselines.p_clean);
  return render_initial_prompt(baselines.p_dirty, goal, task.target_column, task.dataset_description, pipeline_code,
                               hint_text(config.hint_level, recipe, config.no_hint_text));
}

// ---------------------------------------------------------------------------
// Records

namespace {

json usage_to_json(const TokenUsage& usage) {
  return {{"input", usage.input}, {"output", usage.output}, {"reported", usage.reported}};
}

TokenUsage usage_from_json(const json& j) {
  return {j.at("input").get<std::uint64_t>(), j.at("output").get<std::uint64_t>(), j.at("reported").get<bool>()};
}

}  // namespace

json submission_to_json(const SubmissionRecord& record) {
  return {{"ordinal", record.ordinal},
          {"path", record.path},
          {"artifact", record.artifact},
          {"verdict", verdict_to_json(record.verdict)},
          {"score", record.score ? json(*record.score) : json(nullptr)},
          {"turn", record.turn},
          {"cumulative_tokens", record.cumulative_tokens}};
}

SubmissionRecord submission_from_json(const json& j) {
  try {
    SubmissionRecord record;
    record.ordinal = j.at("ordinal").get<int>();
    record.path = j.at("path").get<std::string>();
    record.artifact = j.at("artifact").get<std::string>();
    record.verdict = verdict_from_json(j.at("verdict"));
    if (!j.at("score").is_null()) record.score = j["score"].get<double>();
    record.turn = j.at("turn").get<int>();
    record.cumulative_tokens = j.at("cumulative_tokens").get<std::uint64_t>();
    return record;
  } catch (const json::exception& error) {
    throw Error(ErrorKind::TranscriptCorrupt, std::string("submission: ") + error.what());
  }
}

json turn_to_json(const Turn& turn) {
  json calls = json::array();
  for (const auto& call : turn.tool_calls) {
    calls.push_back({{"id", call.id}, {"name", call.name}, {"arguments", call.arguments}});
  }
  json responses = json::array();
  for (const auto& response : turn.responses) {
    json r{{"call_id", response.call_id},
           {"name", response.name},
           {"content", response.content},
           {"wrote_submission", response.wrote_submission}};
    r["submission"] = response.submission ? json(*response.submission) : json(nullptr);
    responses.push_back(std::move(r));
  }
  return {{"turn", turn.ordinal},
          {"text", turn.text},
          {"tool_calls", std::move(calls)},
          {"responses", std::move(responses)},
          {"usage", usage_to_json(turn.usage)},
          {"cumulative_tokens", turn.cumulative_tokens}};
}

Turn turn_from_json(const json& j) {
  try {
    Turn turn;
    turn.ordinal = j.at("turn").get<int>();
    turn.text = j.at("text").get<std::string>();
    for (const auto& call : j.at("tool_calls")) {
      turn.tool_calls.push_back({call.at("id").get<std::string>(), call.at("name").get<std::string>(),
                                 call.at("arguments").get<std::string>()});
    }
    for (const auto& r : j.at("responses")) {
      ToolResponse response;
      response.call_id = r.at("call_id").get<std::string>();
      response.name = r.at("name").get<std::string>();
      response.content = r.at("content").get<std::string>();
      response.wrote_submission = r.at("wrote_submission").get<bool>();
      if (!r.at("submission").is_null()) response.submission = r["submission"].get<int>();
      turn.responses.push_back(std::move(response));
    }
    turn.usage = usage_from_json(j.at("usage"));
    turn.cumulative_tokens = j.at("cumulative_tokens").get<std::uint64_t>();
    return turn;
  } catch (const json::exception& error) {
    throw Error(ErrorKind::TranscriptCorrupt, std::string("turn: ") + error.what());
  }
}

Conversation conversation_after(const std::string& initial_prompt, const std::vector<Turn>& turns) {
  Conversation conversation{{Role::User, initial_prompt, {}, {}}};
  for (const auto& turn : turns) {
    conversation.push_back({Role::Assistant, turn.text, turn.tool_calls, {}});
    for (const auto& response : turn.responses) {
      conversation.push_back({Role::Tool, response.content, {}, response.call_id});
    }
  }
  return conversation;
}

BestSubmission best_of(const std::vector<SubmissionRecord>& records, double fallback) {
  BestSubmission best{std::nullopt, fallback};
  for (const auto& record : records) {
    if (!record.verdict.accepted() || !record.score) continue;
    if (!best.ordinal || *record.score > best.score ||
        (*record.score == best.score && record.ordinal < *best.ordinal)) {
      best.ordinal = record.ordinal;
      best.score = *record.score;
    }
  }
  return best;
}

TokenAccount account_tokens(std::uint64_t cumulative, const TokenUsage& usage, std::uint64_t budget) {
  const auto total = cumulative + usage.total();
  return {total, total >= budget};
}

json run_result_to_json(const RunResult& result) {
  json submissions = json::array();
  for (const auto& record : result.submissions) submissions.push_back(submission_to_json(record));
  return {{"run_id", result.run_id},
          {"dataset", result.dataset_id},
          {"agent", result.agent},
          {"hint_level", std::string(to_string(result.hint_level))},
          {"p_clean", result.p_clean},
          {"p_dirty", result.p_dirty},
          {"submissions", std::move(submissions)},
          {"best_ordinal", result.best_ordinal ? json(*result.best_ordinal) : json(nullptr)},
          {"best_score", result.best_score},
          {"improvement", result.improvement},
          {"termination", result.termination},
          {"turns", result.turns},
          {"cumulative_tokens", result.cumulative_tokens},
          {"code_calls", result.code_calls},
          {"submission_code_calls", result.submission_code_calls},
          {"transcript", result.transcript}};
}

RunResult run_result_from_json(const json& j) {
  try {
    RunResult result;
    result.run_id = j.at("run_id").get<std::string>();
    result.dataset_id = j.at("dataset").get<std::string>();
    result.agent = j.at("agent").get<std::string>();
    result.hint_level = hint_level_from_string(j.at("hint_level").get<std::string>());
    result.p_clean = j.at("p_clean").get<double>();
    result.p_dirty = j.at("p_dirty").get<double>();
    for (const auto& record : j.at("submissions")) result.submissions.push_back(submission_from_json(record));
    if (!j.at("best_ordinal").is_null()) result.best_ordinal = j["best_ordinal"].get<int>();
    result.best_score = j.at("best_score").get<double>();
    result.improvement = j.at("improvement").get<double>();
    result.termination = j.at("termination").get<std::string>();
    result.turns = j.at("turns").get<int>();
    result.cumulative_tokens = j.at("cumulative_tokens").get<std::uint64_t>();
    result.code_calls = j.at("code_calls").get<int>();
    result.submission_code_calls = j.at("submission_code_calls").get<int>();
    result.transcript = j.value("transcript", result.transcript);
    return result;
  } catch (const Error&) {
    throw;
  } catch (const json::exception& error) {
    throw Error(ErrorKind::TranscriptCorrupt, std::string("result: ") + error.what());
  }
}

std::string run_result_text(const RunResult& result) { return run_result_to_json(result).dump(2) + "\n"; }

RunResult load_run_result(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingArtifacts, "missing " + path.string());
  const auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::TranscriptCorrupt, path.string() + " is not valid JSON");
  return run_result_from_json(j);
}

// ---------------------------------------------------------------------------
// Episodes

namespace {

constexpr std::string_view kSubmissionPrefix = "train_cleaned_v";

bool is_submission_name(const std::string& name) {
  return name.size() >= kSubmissionPrefix.size() + 4 && name.rfind(kSubmissionPrefix, 0) == 0 &&
         name.compare(name.size() - 4, 4, ".csv") == 0;
}

using Snapshot = std::map<std::string, std::pair<std::uintmax_t, fs::file_time_type>>;

Snapshot snapshot_submissions(const fs::path& root) {
  Snapshot files;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(root, ec)) {
    const auto name = entry.path().filename().string();
    if (!is_submission_name(name) || !entry.is_regular_file(ec)) continue;
    files[name] = {entry.file_size(ec), entry.last_write_time(ec)};
  }
  return files;
}

bool wrote_submission(const Snapshot& before, const Snapshot& after) {
  for (const auto& [name, stamp] : after) {
    const auto it = before.find(name);
    if (it == before.end() || it->second != stamp) return true;
  }
  return false;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingArtifacts, "missing " + path.string());
  const auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::TranscriptCorrupt, path.string() + " is not valid JSON");
  return j;
}

std::string render_exec(const ExecResult& result) {
  std::string content = result.stdout_text;
  if (!result.stderr_text.empty()) {
    if (!content.empty() && content.back() != '\n') content += '\n';
    content += result.stderr_text;
  }
  if (content.empty()) content = result.ok ? "(no output)" : "(execution failed without output)";
  return content;
}

std::optional<std::string> string_argument(const std::string& arguments, const char* key) {
  const auto parsed = json::parse(arguments, nullptr, false);
  if (!parsed.is_object() || !parsed.contains(key) || !parsed[key].is_string()) return std::nullopt;
  return parsed[key].get<std::string>();
}

ValidationVerdict not_found(const std::string& given) {
  return {VerdictOutcome::DatasetNotFound, "the dataset path does not exist: " + given, {given}};
}

// Gate then evaluator on a retained copy.
std::pair<ValidationVerdict, std::optional<double>> judge(const fs::path& artifact, const GateReference& reference,
                                                          const DatasetBundle& bundle,
                                                          const PipelineConfig& pipeline) {
  auto verdict = validate_submission(artifact, reference);
  if (!verdict.accepted()) return {verdict, std::nullopt};
  try {
    return {verdict, evaluate_submission(artifact, bundle, pipeline).f1};
  } catch (const Error& error) {
    return {ValidationVerdict{VerdictOutcome::Other, std::string("evaluation failed: ") + error.what(), {}},
            std::nullopt};
  }
}

std::string render_submission(const SubmissionRecord& record) {
  if (record.verdict.accepted() && record.score) {
    return "Submission " + std::to_string(record.ordinal) + " (" + record.path +
           ") accepted. F1 score on the test set: " + fixed4(*record.score);
  }
  return "Submission " + std::to_string(record.ordinal) + " (" + record.path + ") rejected [" +
         std::string(to_string(record.verdict.outcome)) + "]: " + record.verdict.detail;
}

json episode_json(const EpisodeSetup& setup, const std::string& prompt, const std::string& agent_name) {
  return {{"run_id", setup.run_id},
          {"dataset", setup.config.dataset_id},
          {"agent", agent_name},
          {"hint_level", std::string(to_string(setup.config.hint_level))},
          {"config", run_config_to_json(setup.config)},
          {"baselines", baseline_to_json(setup.baselines)},
          {"initial_prompt", prompt},
          {"termination", nullptr},
          {"turns", 0},
          {"cumulative_tokens", 0}};
}

RunResult assemble(const json& episode, const std::vector<Turn>& turns, std::vector<SubmissionRecord> records) {
  RunResult result;
  result.run_id = episode.at("run_id").get<std::string>();
  result.dataset_id = episode.at("dataset").get<std::string>();
  result.agent = episode.at("agent").get<std::string>();
  result.hint_level = hint_level_from_string(episode.at("hint_level").get<std::string>());
  const auto baselines = baseline_from_json(episode.at("baselines"));
  result.p_clean = baselines.p_clean;
  result.p_dirty = baselines.p_dirty;
  const auto best = best_of(records, baselines.p_dirty);
  result.best_ordinal = best.ordinal;
  result.best_score = best.score;
  result.improvement = best.ordinal ? best.score - baselines.p_dirty : 0.0;
  result.submissions = std::move(records);
  result.termination = episode.at("termination").is_null() ? "" : episode["termination"].get<std::string>();
  result.turns = static_cast<int>(turns.size());
  result.cumulative_tokens = turns.empty() ? 0 : turns.back().cumulative_tokens;
  for (const auto& turn : turns) {
    for (const auto& response : turn.responses) {
      if (response.name != kCodeToolName) continue;
      ++result.code_calls;
      if (response.wrote_submission) ++result.submission_code_calls;
    }
  }
  return result;
}

}  // namespace

fs::path stage_episode(const EpisodeSetup& setup, const fs::path& episode_dir) {
  if (setup.bundle == nullptr || !setup.bundle->train_dirty) {
    throw Error(ErrorKind::InvalidConfig, "episode needs a bundle with a dirty training table");
  }
  std::error_code ec;
  fs::remove_all(episode_dir, ec);
  const auto sandbox = episode_dir / "sandbox";
  fs::create_directories(sandbox);
  fs::create_directories(episode_dir / "submissions");
  save_csv(*setup.bundle->train_dirty, sandbox / "train.csv");
  // The prompt names sandbox/train.csv; make that path valid from inside the sandbox too.
  fs::create_directory_symlink(".", sandbox / "sandbox", ec);
  save_bundle(*setup.bundle, episode_dir / "bundle");
  return sandbox;
}

RunResult run_episode(const EpisodeSetup& setup, Agent& agent, CodeExecutor* executor, const fs::path& episode_dir) {
  validate_run_config(setup.config);
  if (setup.bundle == nullptr || !setup.bundle->train_dirty || setup.recipe == nullptr) {
    throw Error(ErrorKind::InvalidConfig, "episode needs a bundle with a dirty training table and its recipe");
  }
  const auto& config = setup.config;
  const auto& bundle = *setup.bundle;
  const auto sandbox = episode_dir / "sandbox";
  if (!fs::is_regular_file(sandbox / "train.csv")) {
    throw Error(ErrorKind::MissingArtifacts, "sandbox is not staged: " + (sandbox / "train.csv").string());
  }

  const auto prompt =
      build_initial_prompt(config, bundle.task, setup.baselines, describe_pipeline(bundle.task, config.pipeline),
                           *setup.recipe);
  json episode = episode_json(setup, prompt, agent.name());
  write_text(episode_dir / "episode.json", episode.dump(2) + "\n");

  const auto reference = gate_reference(*bundle.train_dirty, bundle.task);
  const auto& agent_spec = config.agent;

  EpisodeContext context{fs::absolute(sandbox), setup.bundle, setup.log, setup.run_id, config.seed};
  agent.begin(context);

  std::ofstream transcript(episode_dir / "transcript.jsonl", std::ios::binary | std::ios::trunc);
  if (!transcript) throw Error(ErrorKind::IoError, "cannot write the transcript");

  Conversation conversation{{Role::User, prompt, {}, {}}};
  std::vector<Turn> turns;
  std::vector<SubmissionRecord> records;
  std::uint64_t cumulative = 0;
  int idle = 0;
  std::string termination;

  while (termination.empty()) {
    if (cumulative >= config.token_budget) {
      termination = "budget";
      break;
    }
    if (static_cast<int>(turns.size()) >= config.max_turns) {
      termination = "max_turns";
      break;
    }

    std::optional<AgentReply> reply;
    std::string transport_error;
    for (int attempt = 0; attempt <= agent_spec.max_retries; ++attempt) {
      try {
        reply = agent.respond(conversation);
        break;
      } catch (const Error& error) {
        if (error.kind() != ErrorKind::AgentTransportError) throw;
        transport_error = error.what();
        if (attempt < agent_spec.max_retries) {
          std::this_thread::sleep_for(std::chrono::duration<double>(agent_spec.retry_backoff_s * std::pow(2.0, attempt)));
        }
      }
    }
    if (!reply) {
      termination = "agent_error";
      break;
    }

    Turn turn;
    turn.ordinal = static_cast<int>(turns.size()) + 1;
    turn.text = reply->text;
    turn.tool_calls = reply->tool_calls;
    const Message output{Role::Assistant, turn.text, turn.tool_calls, {}};
    turn.usage = reply->usage ? *reply->usage : estimate_usage(conversation, output);
    const auto account = account_tokens(cumulative, turn.usage, config.token_budget);
    cumulative = account.total;
    turn.cumulative_tokens = cumulative;
    conversation.push_back(output);

    bool session_dead = false;
    for (std::size_t k = 0; k < turn.tool_calls.size(); ++k) {
      const auto& call = turn.tool_calls[k];
      ToolResponse response{call.id, call.name, {}, false, std::nullopt};
      if (session_dead) {
        response.content = "Not executed: the code execution session is no longer available.";
      } else if (static_cast<int>(k) >= agent_spec.max_tool_calls_per_turn) {
        response.content = "Not executed: at most " + std::to_string(agent_spec.max_tool_calls_per_turn) +
                           " tool calls are run per turn.";
      } else if (call.name == kCodeToolName) {
        const auto code = string_argument(call.arguments, "code");
        if (!code) {
          response.content = "Invalid arguments: expected {\"code\": string}.";
        } else if (executor == nullptr) {
          response.content = "The code execution tool is not available in this episode.";
        } else {
          const auto before = snapshot_submissions(sandbox);
          try {
            response.content = render_exec(executor->exec(*code));
          } catch (const Error& error) {
            if (error.kind() != ErrorKind::SessionDead) throw;
            session_dead = true;
            response.content = std::string("The code execution session died: ") + error.what();
          }
          response.wrote_submission = wrote_submission(before, snapshot_submissions(sandbox));
        }
      } else if (call.name == kSubmitToolName) {
        SubmissionRecord record;
        record.ordinal = static_cast<int>(records.size()) + 1;
        record.path = string_argument(call.arguments, "path").value_or("");
        record.turn = turn.ordinal;
        record.cumulative_tokens = cumulative;
        std::optional<fs::path> found;
        if (!record.path.empty()) {
          const fs::path given(record.path);
          std::vector<fs::path> candidates;
          if (given.is_absolute()) {
            candidates.push_back(given);
          } else {
            candidates = {sandbox / given, episode_dir / given};
          }
          std::error_code ec;
          for (const auto& candidate : candidates) {
            if (fs::is_regular_file(candidate, ec)) {
              found = candidate;
              break;
            }
          }
        }
        if (!found) {
          record.verdict = not_found(record.path);
        } else {
          record.artifact =
              "submissions/" + std::to_string(record.ordinal) + "_" + found->filename().string();
          fs::copy_file(*found, episode_dir / record.artifact, fs::copy_options::overwrite_existing);
          auto [verdict, score] = judge(episode_dir / record.artifact, reference, bundle, config.pipeline);
          record.verdict = std::move(verdict);
          record.score = score;
        }
        response.content = render_submission(record);
        response.submission = record.ordinal;
        records.push_back(std::move(record));
      } else {
        response.content = "Unknown tool '" + call.name + "'. Available tools: " + std::string(kCodeToolName) +
                           ", " + std::string(kSubmitToolName) + ".";
      }
      conversation.push_back({Role::Tool, response.content, {}, response.call_id});
      turn.responses.push_back(std::move(response));
    }

    json line = turn_to_json(turn);
    line["submissions"] = json::array();
    for (const auto& response : turn.responses) {
      if (response.submission) line["submissions"].push_back(submission_to_json(records[*response.submission - 1]));
    }
    transcript << line.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    transcript.flush();
    turns.push_back(std::move(turn));

    const auto& last = turns.back();
    const bool blank = std::all_of(last.text.begin(), last.text.end(), [](unsigned char c) { return std::isspace(c); });
    idle = last.tool_calls.empty() && blank ? idle + 1 : 0;
    if (session_dead) {
      termination = "session_dead";
    } else if (idle >= 2) {
      termination = "idle";
    } else if (account.terminate) {
      termination = "budget";
    }
  }
  transcript.close();

  episode["termination"] = termination;
  episode["turns"] = turns.size();
  episode["cumulative_tokens"] = cumulative;
  write_text(episode_dir / "episode.json", episode.dump(2) + "\n");

  auto result = assemble(episode, turns, std::move(records));
  write_text(episode_dir / "result.json", run_result_text(result));
  return result;
}

RunResult replay(const fs::path& transcript_path) {
  const auto dir = transcript_path.parent_path();
  std::ifstream in(transcript_path);
  if (!in) throw Error(ErrorKind::MissingArtifacts, "missing " + transcript_path.string());
  const auto episode = read_json_file(dir / "episode.json");
  if (!episode.contains("config") || !episode.contains("baselines") || !episode.contains("termination")) {
    throw Error(ErrorKind::TranscriptCorrupt, "episode.json lacks config, baselines or termination");
  }
  const auto config = run_config_from_json(episode["config"]);
  if (!fs::is_regular_file(dir / "bundle" / "bundle.json")) {
    throw Error(ErrorKind::MissingArtifacts, "missing " + (dir / "bundle").string());
  }
  const auto bundle = load_bundle(dir / "bundle");
  if (!bundle.train_dirty) throw Error(ErrorKind::MissingArtifacts, "bundle has no train_dirty.csv");
  const auto reference = gate_reference(*bundle.train_dirty, bundle.task);

  std::vector<Turn> turns;
  std::vector<SubmissionRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(ErrorKind::TranscriptCorrupt, "line " + std::to_string(turns.size() + 1) + " is not JSON");
    }
    auto turn = turn_from_json(j);
    if (turn.ordinal != static_cast<int>(turns.size()) + 1) {
      throw Error(ErrorKind::TranscriptCorrupt, "turn ordinals are out of sequence");
    }
    std::map<int, SubmissionRecord> recorded;
    if (j.contains("submissions")) {
      for (const auto& s : j["submissions"]) {
        auto record = submission_from_json(s);
        recorded.emplace(record.ordinal, std::move(record));
      }
    }
    for (const auto& response : turn.responses) {
      if (!response.submission) continue;
      const auto it = recorded.find(*response.submission);
      if (it == recorded.end() || *response.submission != static_cast<int>(records.size()) + 1) {
        throw Error(ErrorKind::TranscriptCorrupt, "submission " + std::to_string(*response.submission) +
                                                      " has no record in turn " + std::to_string(turn.ordinal));
      }
      SubmissionRecord record = it->second;
      if (record.artifact.empty()) {
        record.verdict = not_found(record.path);
        record.score.reset();
      } else {
        const auto artifact = dir / record.artifact;
        if (!fs::is_regular_file(artifact)) {
          throw Error(ErrorKind::MissingArtifacts, "submitted file is gone: " + artifact.string());
        }
        auto [verdict, score] = judge(artifact, reference, bundle, config.pipeline);
        record.verdict = std::move(verdict);
        record.score = score;
      }
      records.push_back(std::move(record));
    }
    turns.push_back(std::move(turn));
  }
  return assemble(episode, turns, std::move(records));
}

// ---------------------------------------------------------------------------
// Experiments

PreparedDataset corrupt_bundle(DatasetBundle bundle, const CorruptionRecipe& recipe) {
  auto outcome = apply_recipe(bundle.train_clean, recipe);
  bundle.train_dirty = std::move(outcome.table);
  bundle.provenance.seed = recipe.master_seed;
  return {std::move(bundle), recipe, std::move(outcome.log)};
}

void save_prepared(const PreparedDataset& prepared, const fs::path& dir) {
  save_bundle(prepared.bundle, dir);
  save_recipe(prepared.recipe, dir / "recipe.json");
  save_log(prepared.log, dir / "ground_truth_log.csv");
}

PreparedDataset load_prepared(const fs::path& dir) {
  PreparedDataset prepared;
  prepared.bundle = load_bundle(dir);
  if (!prepared.bundle.train_dirty) throw Error(ErrorKind::MissingArtifacts, "no train_dirty.csv in " + dir.string());
  prepared.recipe = load_recipe(dir / "recipe.json");
  if (fs::exists(dir / "ground_truth_log.csv")) {
    prepared.log = load_log(dir / "ground_truth_log.csv", prepared.bundle.train_clean.schema());
  }
  return prepared;
}

std::string make_run_id(const RunConfig& config, int repeat) {
  std::string id = config.dataset_id + "-" + agent_label(config.agent) + "-" +
                   std::string(to_string(config.hint_level)) + "-r" + std::to_string(repeat + 1);
  for (auto& c : id) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return id;
}

std::vector<RunResult> run_experiment(const RunConfig& config, const PreparedDataset& prepared,
                                      const fs::path& episodes_root) {
  validate_run_config(config);
  const auto baselines = compute_baselines(prepared.bundle, config.pipeline);
  std::vector<RunResult> results;
  for (int repeat = 0; repeat < config.repeats; ++repeat) {
    EpisodeSetup setup;
    setup.config = config;
    setup.config.seed = config.seed + static_cast<std::uint64_t>(repeat);
    setup.run_id = make_run_id(config, repeat);
    setup.bundle = &prepared.bundle;
    setup.recipe = &prepared.recipe;
    setup.log = &prepared.log;
    setup.baselines = baselines;

    const auto dir = episodes_root / setup.run_id;
    const auto sandbox = stage_episode(setup, dir);
    auto agent = make_agent(config.agent);
    std::unique_ptr<SandboxSession> session;
    if (agent->uses_code_tool()) {
      auto worker = config.worker.argv.empty() ? default_worker_command() : config.worker;
      session = SandboxSession::start(sandbox, worker, config.sandbox);
    }
    results.push_back(run_episode(setup, *agent, session.get(), dir));
    if (session) session->shutdown();
  }
  return results;
}

}  // namespace scrub
