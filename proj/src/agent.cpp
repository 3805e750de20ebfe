#include "scrub/agent.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "scrub/error.hpp"

namespace scrub {

using nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::Tool: return "tool";
  }
  return "user";
}

Role role_from_string(std::string_view text) {
  for (auto role : {Role::System, Role::User, Role::Assistant, Role::Tool}) {
    if (to_string(role) == text) return role;
  }
  throw Error(ErrorKind::TranscriptCorrupt, "unknown role '" + std::string(text) + "'");
}

json message_to_json(const Message& message) {
  json j{{"role", std::string(to_string(message.role))}, {"content", message.content}};
  if (!message.tool_calls.empty()) {
    j["tool_calls"] = json::array();
    for (const auto& call : message.tool_calls) {
      j["tool_calls"].push_back({{"id", call.id}, {"name", call.name}, {"arguments", call.arguments}});
    }
  }
  if (message.role == Role::Tool) j["tool_call_id"] = message.tool_call_id;
  return j;
}

Message message_from_json(const json& j) {
  try {
    Message message;
    message.role = role_from_string(j.at("role").get<std::string>());
    message.content = j.at("content").get<std::string>();
    if (j.contains("tool_calls")) {
      for (const auto& call : j.at("tool_calls")) {
        message.tool_calls.push_back({call.at("id").get<std::string>(), call.at("name").get<std::string>(),
                                      call.at("arguments").get<std::string>()});
      }
    }
    message.tool_call_id = j.value("tool_call_id", std::string());
    return message;
  } catch (const json::exception& error) {
    throw Error(ErrorKind::TranscriptCorrupt, std::string("message: ") + error.what());
  }
}

std::string serialize_conversation(const Conversation& conversation) {
  std::string out;
  for (const auto& message : conversation) {
    out += message_to_json(message).dump(-1, ' ', false, json::error_handler_t::replace);
    out += '\n';
  }
  return out;
}

std::uint64_t estimate_tokens(std::string_view text) {
  std::uint64_t code_points = 0;
  for (char c : text) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++code_points;
  }
  return (code_points + 3) / 4;
}

std::uint64_t estimate_message_tokens(const Message& message) {
  std::string text = message.content;
  for (const auto& call : message.tool_calls) text += call.arguments;
  return estimate_tokens(text);
}

TokenUsage estimate_usage(const Conversation& presented, const Message& reply) {
  TokenUsage usage;
  for (const auto& message : presented) usage.input += estimate_message_tokens(message);
  usage.output = estimate_message_tokens(reply);
  return usage;
}

// ---------------------------------------------------------------------------
// Configuration

json agent_spec_to_json(const AgentSpec& spec) {
  json j{{"kind", spec.kind},
         {"policy", spec.policy},
         {"endpoint", spec.endpoint},
         {"model", spec.model},
         {"api_key_env", spec.api_key_env},
         {"max_tool_calls_per_turn", spec.max_tool_calls_per_turn},
         {"max_retries", spec.max_retries},
         {"retry_backoff_s", spec.retry_backoff_s},
         {"request_timeout_s", spec.request_timeout_s},
         {"turn_tokens", spec.turn_tokens},
         {"label", spec.label}};
  j["temperature"] = spec.temperature ? json(*spec.temperature) : json(nullptr);
  return j;
}

AgentSpec agent_spec_from_json(const json& j) {
  AgentSpec spec;
  try {
    spec.kind = j.value("kind", spec.kind);
    spec.policy = j.value("policy", spec.policy);
    spec.endpoint = j.value("endpoint", spec.endpoint);
    spec.model = j.value("model", spec.model);
    if (j.contains("temperature") && !j["temperature"].is_null()) spec.temperature = j["temperature"].get<double>();
    spec.api_key_env = j.value("api_key_env", spec.api_key_env);
    spec.max_tool_calls_per_turn = j.value("max_tool_calls_per_turn", spec.max_tool_calls_per_turn);
    spec.max_retries = j.value("max_retries", spec.max_retries);
    spec.retry_backoff_s = j.value("retry_backoff_s", spec.retry_backoff_s);
    spec.request_timeout_s = j.value("request_timeout_s", spec.request_timeout_s);
    spec.turn_tokens = j.value("turn_tokens", spec.turn_tokens);
    spec.label = j.value("label", spec.label);
  } catch (const json::exception& error) {
    throw Error(ErrorKind::InvalidConfig, std::string("agent: ") + error.what());
  }
  if (spec.kind != "scripted" && spec.kind != "llm") {
    throw Error(ErrorKind::InvalidConfig, "agent kind must be 'scripted' or 'llm', got '" + spec.kind + "'");
  }
  if (spec.kind == "llm" && spec.model.empty()) throw Error(ErrorKind::InvalidConfig, "llm agent needs a model");
  if (spec.max_tool_calls_per_turn <= 0 || spec.max_retries < 0) {
    throw Error(ErrorKind::InvalidConfig, "agent: max_tool_calls_per_turn must be positive, max_retries >= 0");
  }
  return spec;
}

std::string agent_label(const AgentSpec& spec) {
  if (!spec.label.empty()) return spec.label;
  if (spec.kind == "llm") return spec.model;
  const auto colon = spec.policy.find(':');
  if (colon == std::string::npos) return spec.policy;
  return std::filesystem::path(spec.policy.substr(colon + 1)).stem().string();
}

std::unique_ptr<Agent> make_agent(const AgentSpec& spec) {
  if (spec.kind == "llm") return std::make_unique<ChatCompletionsAgent>(spec);
  if (spec.policy == "noop") return std::make_unique<NoopAgent>();
  if (spec.policy == "oracle") return std::make_unique<OracleAgent>();
  if (spec.policy == "budget") return std::make_unique<BudgetAgent>(spec.turn_tokens);
  if (spec.policy.rfind("script:", 0) == 0) {
    auto agent = ScriptedAgent::load(spec.policy.substr(7));
    return std::make_unique<ScriptedAgent>(std::move(agent));
  }
  throw Error(ErrorKind::InvalidConfig, "unknown scripted policy '" + spec.policy + "'");
}

// ---------------------------------------------------------------------------
// Scripted policies

namespace {

ToolCall submit_call(std::string id, const std::string& path) {
  return {std::move(id), std::string(kSubmitToolName), json{{"path", path}}.dump()};
}

}  // namespace

AgentReply NoopAgent::respond(const Conversation&) {
  if (++turn_ > 1) return {};
  return {"Submitting the training data unchanged.", {submit_call("call_1_1", "train.csv")}, std::nullopt};
}

void OracleAgent::begin(const EpisodeContext& context) {
  if (context.bundle == nullptr || !context.bundle->train_dirty || context.log == nullptr) {
    throw Error(ErrorKind::InvalidConfig, "the oracle policy needs the dirty table and its ground-truth log");
  }
  context_ = context;
  turn_ = 0;
}

AgentReply OracleAgent::respond(const Conversation&) {
  if (++turn_ > 1) return {};
  const Table restored = invert(*context_.bundle->train_dirty, *context_.log);
  save_csv(restored, context_.sandbox_root / "train_cleaned_v1.csv");
  return {"Reverted every logged corruption.", {submit_call("call_1_1", "train_cleaned_v1.csv")}, std::nullopt};
}

AgentReply BudgetAgent::respond(const Conversation&) {
  ++turn_;
  AgentReply reply;
  reply.text = "Still inspecting the data (turn " + std::to_string(turn_) + ").";
  const std::uint64_t output = turn_tokens_ / 4;
  reply.usage = TokenUsage{turn_tokens_ - output, output, true};
  return reply;
}

ScriptedAgent::ScriptedAgent(std::vector<Step> steps, std::string name)
    : steps_(std::move(steps)), name_(std::move(name)) {}

ScriptedAgent ScriptedAgent::from_json(const json& j, std::string name) {
  std::vector<Step> steps;
  try {
    std::size_t turn = 0;
    for (const auto& entry : j.at("turns")) {
      ++turn;
      Step step;
      step.text = entry.value("text", std::string());
      if (entry.contains("tool_calls")) {
        std::size_t k = 0;
        for (const auto& call : entry.at("tool_calls")) {
          ++k;
          const auto& arguments = call.at("arguments");
          step.tool_calls.push_back({"call_" + std::to_string(turn) + "_" + std::to_string(k),
                                     call.at("name").get<std::string>(),
                                     arguments.is_string() ? arguments.get<std::string>() : arguments.dump()});
        }
      }
      if (entry.contains("usage")) {
        step.usage = TokenUsage{entry["usage"].at("input").get<std::uint64_t>(),
                                entry["usage"].at("output").get<std::uint64_t>(), true};
      }
      if (entry.contains("files")) {
        for (const auto& [file, contents] : entry["files"].items()) {
          step.files.emplace_back(file, contents.get<std::string>());
        }
      }
      steps.push_back(std::move(step));
    }
  } catch (const json::exception& error) {
    throw Error(ErrorKind::InvalidConfig, std::string("script: ") + error.what());
  }
  return ScriptedAgent(std::move(steps), std::move(name));
}

ScriptedAgent ScriptedAgent::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::FileNotFound, "cannot open script " + path.string());
  const auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::InvalidConfig, "script " + path.string() + " is not valid JSON");
  return from_json(j, path.stem().string());
}

void ScriptedAgent::begin(const EpisodeContext& context) {
  sandbox_root_ = context.sandbox_root;
  next_ = 0;
}

AgentReply ScriptedAgent::respond(const Conversation&) {
  if (next_ >= steps_.size()) return {};
  const auto& step = steps_[next_++];
  for (const auto& [file, contents] : step.files) {
    const auto target = sandbox_root_ / file;
    std::ofstream out(target, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + target.string());
    out << contents;
  }
  return {step.text, step.tool_calls, step.usage};
}

bool ScriptedAgent::uses_code_tool() const {
  for (const auto& step : steps_) {
    for (const auto& call : step.tool_calls) {
      if (call.name == kCodeToolName) return true;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// Chat completions

json tool_definitions() {
  return json::array(
      {{{"type", "function"},
        {"function",
         {{"name", std::string(kCodeToolName)},
          {"description",
           "Run Python code in a persistent interactive shell. The working directory contains train.csv. "
           "Returns the printed output."},
          {"parameters",
           {{"type", "object"},
            {"properties", {{"code", {{"type", "string"}, {"description", "Python code to execute"}}}}},
            {"required", {"code"}}}}}}},
       {{"type", "function"},
        {"function",
         {{"name", std::string(kSubmitToolName)},
          {"description",
           "Submit a cleaned copy of the training data for evaluation. Returns the model's F1 score on the test "
           "set, or the reason the submission was rejected."},
          {"parameters",
           {{"type", "object"},
            {"properties",
             {{"path", {{"type", "string"}, {"description", "Path of the cleaned CSV, e.g. train_cleaned_v1.csv"}}}}},
            {"required", {"path"}}}}}}}});
}

json chat_request_body(const Conversation& conversation, const AgentSpec& spec) {
  json messages = json::array();
  for (const auto& message : conversation) {
    json m{{"role", std::string(to_string(message.role))}};
    if (message.role == Role::Assistant && !message.tool_calls.empty()) {
      m["content"] = message.content.empty() ? json(nullptr) : json(message.content);
      m["tool_calls"] = json::array();
      for (const auto& call : message.tool_calls) {
        m["tool_calls"].push_back(
            {{"id", call.id}, {"type", "function"}, {"function", {{"name", call.name}, {"arguments", call.arguments}}}});
      }
    } else {
      m["content"] = message.content;
    }
    if (message.role == Role::Tool) m["tool_call_id"] = message.tool_call_id;
    messages.push_back(std::move(m));
  }
  json body{{"model", spec.model}, {"messages", std::move(messages)}, {"tools", tool_definitions()}};
  if (spec.temperature) body["temperature"] = *spec.temperature;
  return body;
}

AgentReply parse_chat_response(const json& body) {
  try {
    const auto& message = body.at("choices").at(0).at("message");
    AgentReply reply;
    if (message.contains("content") && message["content"].is_string()) reply.text = message["content"];
    if (message.contains("tool_calls") && message["tool_calls"].is_array()) {
      for (const auto& call : message["tool_calls"]) {
        const auto& function = call.at("function");
        reply.tool_calls.push_back({call.at("id").get<std::string>(), function.at("name").get<std::string>(),
                                    function.value("arguments", std::string("{}"))});
      }
    }
    if (body.contains("usage") && body["usage"].is_object()) {
      const auto& usage = body["usage"];
      reply.usage = TokenUsage{usage.value("prompt_tokens", std::uint64_t{0}),
                               usage.value("completion_tokens", std::uint64_t{0}), true};
    }
    return reply;
  } catch (const json::exception& error) {
    throw Error(ErrorKind::AgentTransportError, std::string("malformed chat response: ") + error.what());
  }
}

ChatCompletionsAgent::ChatCompletionsAgent(AgentSpec spec) : spec_(std::move(spec)) {}

AgentReply ChatCompletionsAgent::respond(const Conversation& conversation) {
  const auto scheme = spec_.endpoint.find("://");
  if (scheme == std::string::npos) throw Error(ErrorKind::InvalidConfig, "endpoint needs a scheme: " + spec_.endpoint);
  const auto slash = spec_.endpoint.find('/', scheme + 3);
  const std::string origin = spec_.endpoint.substr(0, slash);
  const std::string path = slash == std::string::npos ? "/" : spec_.endpoint.substr(slash);

  httplib::Client client(origin);
  const auto timeout = static_cast<time_t>(spec_.request_timeout_s);
  client.set_connection_timeout(30, 0);
  client.set_read_timeout(timeout, 0);
  client.set_write_timeout(timeout, 0);
  httplib::Headers headers;
  if (const char* key = std::getenv(spec_.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const auto body = chat_request_body(conversation, spec_).dump(-1, ' ', false, json::error_handler_t::replace);
  const auto response = client.Post(path, headers, body, "application/json");
  if (!response) {
    throw Error(ErrorKind::AgentTransportError, "request failed: " + httplib::to_string(response.error()));
  }
  if (response->status < 200 || response->status >= 300) {
    throw Error(ErrorKind::AgentTransportError,
                "HTTP " + std::to_string(response->status) + ": " + response->body.substr(0, 500));
  }
  const auto parsed = json::parse(response->body, nullptr, false);
  if (parsed.is_discarded()) throw Error(ErrorKind::AgentTransportError, "response is not JSON");
  return parse_chat_response(parsed);
}

}  // namespace scrub
