#pragma once

#include <sys/types.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace scrub {

struct SandboxLimits {
  double exec_timeout_s = 60.0;
  std::size_t output_limit = 10000;
  double handshake_timeout_s = 20.0;
  double shutdown_grace_s = 2.0;
};

struct ExecResult {
  bool ok = false;
  std::string stdout_text;
  std::string stderr_text;
  std::int64_t duration_ms = 0;
  bool truncated = false;
};

inline constexpr std::string_view kTimeoutMessage = "TIMEOUT: session state reset";
inline constexpr std::string_view kTruncationMarker = "...[truncated]";

// Cuts stdout then stderr so that their combined size stays within `limit`,
// never splitting a UTF-8 sequence, and appends the marker to the cut stream.
void truncate_output(ExecResult& result, std::size_t limit);

// The code-execution tool as seen by the orchestrator.
class CodeExecutor {
 public:
  virtual ~CodeExecutor() = default;
  virtual ExecResult exec(const std::string& code) = 0;
  virtual const std::filesystem::path& root() const = 0;
};

// Worker launch line; the sandbox root is appended as the last argument.
struct WorkerCommand {
  std::vector<std::string> argv;
};

// SCRUB_WORKER (split on whitespace), else "scrub-worker".
WorkerCommand default_worker_command();

// One persistent worker process speaking newline-delimited JSON on its
// standard streams. Requests are strictly sequential.
class SandboxSession : public CodeExecutor {
 public:
  // Throws WorkerSpawnFailed or HandshakeTimeout.
  static std::unique_ptr<SandboxSession> start(const std::filesystem::path& root, WorkerCommand command,
                                               SandboxLimits limits = {});
  ~SandboxSession() override;

  SandboxSession(const SandboxSession&) = delete;
  SandboxSession& operator=(const SandboxSession&) = delete;

  // On timeout the worker is killed and restarted with a fresh namespace.
  // Throws SessionDead when a replacement worker cannot be brought up.
  ExecResult exec(const std::string& code) override;
  ExecResult reset();
  const std::filesystem::path& root() const override { return root_; }

  bool alive() const;
  pid_t pid() const { return pid_; }
  std::uint64_t request_count() const { return counter_; }
  const SandboxLimits& limits() const { return limits_; }

  // Idempotent; safe after the worker has died.
  void shutdown();

 private:
  SandboxSession(std::filesystem::path root, WorkerCommand command, SandboxLimits limits);

  void spawn();
  void handshake();
  void kill_worker();
  void restart();
  bool send_line(const std::string& line);
  // Empty optional on timeout; throws nothing. Sets eof_ on EOF.
  std::optional<std::string> read_line(double timeout_s);
  ExecResult request(const std::string& op, const std::string* code);

  std::filesystem::path root_;
  WorkerCommand command_;
  SandboxLimits limits_;
  pid_t pid_ = -1;
  int to_worker_ = -1;
  int from_worker_ = -1;
  std::string buffer_;
  bool eof_ = false;
  std::uint64_t counter_ = 0;
  std::uint64_t next_id_ = 0;
};

}  // namespace scrub
