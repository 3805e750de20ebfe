#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scrub/corruption.hpp"
#include "scrub/provisioning.hpp"

namespace scrub {

inline constexpr std::string_view kCodeToolName = "execute_code_ipython_shell";
inline constexpr std::string_view kSubmitToolName = "submit_clean_data";

enum class Role { System, User, Assistant, Tool };

std::string_view to_string(Role role);
Role role_from_string(std::string_view text);

struct ToolCall {
  std::string id;
  std::string name;
  // Raw JSON object text, as emitted by the agent.
  std::string arguments;

  friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

struct Message {
  Role role = Role::User;
  std::string content;
  std::vector<ToolCall> tool_calls;  // assistant messages only
  std::string tool_call_id;          // tool messages only

  friend bool operator==(const Message&, const Message&) = default;
};

using Conversation = std::vector<Message>;

nlohmann::json message_to_json(const Message& message);
Message message_from_json(const nlohmann::json& json);
// Canonical byte form of a conversation: one compact JSON message per line.
std::string serialize_conversation(const Conversation& conversation);

struct TokenUsage {
  std::uint64_t input = 0;
  std::uint64_t output = 0;
  // False when the counts are the character-based estimate.
  bool reported = false;

  std::uint64_t total() const { return input + output; }
  friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

// ceil(code points / 4).
std::uint64_t estimate_tokens(std::string_view text);
std::uint64_t estimate_message_tokens(const Message& message);
// Input: every message presented; output: the reply's text and tool-call arguments.
TokenUsage estimate_usage(const Conversation& presented, const Message& reply);

struct AgentReply {
  std::string text;
  std::vector<ToolCall> tool_calls;
  std::optional<TokenUsage> usage;
};

// What an agent may know about its episode beyond the conversation.
// Scripted policies use it to bypass the code tool.
struct EpisodeContext {
  std::filesystem::path sandbox_root;
  const DatasetBundle* bundle = nullptr;
  const GroundTruthLog* log = nullptr;
  std::string run_id;
  std::uint64_t seed = 0;
};

class Agent {
 public:
  virtual ~Agent() = default;
  virtual void begin(const EpisodeContext& context) { (void)context; }
  // Throws AgentTransportError on transient failures; the caller retries.
  virtual AgentReply respond(const Conversation& conversation) = 0;
  virtual bool uses_code_tool() const { return true; }
  virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------
// Agent configuration

struct AgentSpec {
  // "scripted" or "llm"
  std::string kind = "scripted";
  // Scripted: noop, oracle, budget, or script:<path>.
  std::string policy = "noop";
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model;
  std::optional<double> temperature;
  std::string api_key_env = "OPENAI_API_KEY";
  int max_tool_calls_per_turn = 8;
  int max_retries = 4;
  double retry_backoff_s = 1.0;
  double request_timeout_s = 300.0;
  // Budget policy: tokens reported per turn.
  std::uint64_t turn_tokens = 1000;
  // Display label used in run ids and reports; defaults to the model or policy.
  std::string label;
};

nlohmann::json agent_spec_to_json(const AgentSpec& spec);
AgentSpec agent_spec_from_json(const nlohmann::json& json);
std::string agent_label(const AgentSpec& spec);

std::unique_ptr<Agent> make_agent(const AgentSpec& spec);

// ---------------------------------------------------------------------------
// Scripted policies

// Submits the dirty training file unchanged, then goes idle.
class NoopAgent : public Agent {
 public:
  AgentReply respond(const Conversation& conversation) override;
  bool uses_code_tool() const override { return false; }
  std::string name() const override { return "noop"; }

 private:
  int turn_ = 0;
};

// Inverts the ground-truth log, writes train_cleaned_v1.csv into the
// sandbox directly and submits it.
class OracleAgent : public Agent {
 public:
  void begin(const EpisodeContext& context) override;
  AgentReply respond(const Conversation& conversation) override;
  bool uses_code_tool() const override { return false; }
  std::string name() const override { return "oracle"; }

 private:
  EpisodeContext context_;
  int turn_ = 0;
};

// Emits fixed-size text-only turns forever.
class BudgetAgent : public Agent {
 public:
  explicit BudgetAgent(std::uint64_t turn_tokens) : turn_tokens_(turn_tokens) {}
  AgentReply respond(const Conversation& conversation) override;
  bool uses_code_tool() const override { return false; }
  std::string name() const override { return "budget"; }

 private:
  std::uint64_t turn_tokens_;
  int turn_ = 0;
};

// Replays a fixed list of replies, then goes idle.
//
// JSON form: {"turns": [{"text": "...", "tool_calls": [{"name": ..., "arguments": {...}}],
//                        "usage": {"input": n, "output": m},
//                        "files": {"name.csv": "contents"}}]}
// `files` are written into the sandbox before the reply is returned.
class ScriptedAgent : public Agent {
 public:
  struct Step {
    std::string text;
    std::vector<ToolCall> tool_calls;
    std::optional<TokenUsage> usage;
    std::vector<std::pair<std::string, std::string>> files;
  };

  explicit ScriptedAgent(std::vector<Step> steps, std::string name = "script");
  static ScriptedAgent from_json(const nlohmann::json& json, std::string name = "script");
  static ScriptedAgent load(const std::filesystem::path& path);

  void begin(const EpisodeContext& context) override;
  AgentReply respond(const Conversation& conversation) override;
  bool uses_code_tool() const override;
  std::string name() const override { return name_; }

 private:
  std::vector<Step> steps_;
  std::string name_;
  std::filesystem::path sandbox_root_;
  std::size_t next_ = 0;
};

// ---------------------------------------------------------------------------
// Live models over the chat-completions HTTP schema

nlohmann::json tool_definitions();
nlohmann::json chat_request_body(const Conversation& conversation, const AgentSpec& spec);
// Throws AgentTransportError on malformed responses.
AgentReply parse_chat_response(const nlohmann::json& body);

class ChatCompletionsAgent : public Agent {
 public:
  explicit ChatCompletionsAgent(AgentSpec spec);
  AgentReply respond(const Conversation& conversation) override;
  std::string name() const override { return agent_label(spec_); }

 private:
  AgentSpec spec_;
};

}  // namespace scrub
