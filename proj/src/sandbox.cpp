#include "scrub/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "scrub/error.hpp"

namespace scrub {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

// Largest prefix length <= max that does not split a UTF-8 sequence.
std::size_t utf8_cut(const std::string& text, std::size_t max) {
  if (max >= text.size()) return text.size();
  std::size_t cut = max;
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  return cut;
}

Clock::time_point deadline_after(double seconds) {
  return Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(seconds));
}

double seconds_left(Clock::time_point deadline) {
  return std::chrono::duration<double>(deadline - Clock::now()).count();
}

void close_fd(int& fd) {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

}  // namespace

void truncate_output(ExecResult& result, std::size_t limit) {
  if (result.stdout_text.size() + result.stderr_text.size() <= limit) return;
  result.truncated = true;
  const std::size_t budget = limit > kTruncationMarker.size() ? limit - kTruncationMarker.size() : 0;
  if (result.stdout_text.size() > budget) {
    result.stdout_text.resize(utf8_cut(result.stdout_text, budget));
    result.stdout_text += kTruncationMarker;
    result.stderr_text.clear();
    return;
  }
  const std::size_t rest = budget - result.stdout_text.size();
  result.stderr_text.resize(utf8_cut(result.stderr_text, rest));
  result.stderr_text += kTruncationMarker;
}

WorkerCommand default_worker_command() {
  WorkerCommand command;
  if (const char* env = std::getenv("SCRUB_WORKER"); env != nullptr && *env != '\0') {
    std::istringstream words(env);
    for (std::string word; words >> word;) command.argv.push_back(word);
  }
  if (command.argv.empty()) command.argv.push_back("scrub-worker");
  return command;
}

SandboxSession::SandboxSession(std::filesystem::path root, WorkerCommand command, SandboxLimits limits)
    : root_(std::move(root)), command_(std::move(command)), limits_(limits) {}

SandboxSession::~SandboxSession() { shutdown(); }

std::unique_ptr<SandboxSession> SandboxSession::start(const std::filesystem::path& root, WorkerCommand command,
                                                      SandboxLimits limits) {
  std::error_code ec;
  if (!std::filesystem::is_directory(root, ec)) {
    throw Error(ErrorKind::WorkerSpawnFailed, "sandbox root is not a directory: " + root.string());
  }
  if (command.argv.empty()) throw Error(ErrorKind::WorkerSpawnFailed, "empty worker command");
  // A dead worker must surface as EOF, not kill the harness.
  ::signal(SIGPIPE, SIG_IGN);
  std::unique_ptr<SandboxSession> session(
      new SandboxSession(std::filesystem::absolute(root), std::move(command), limits));
  session->spawn();
  session->handshake();
  return session;
}

void SandboxSession::spawn() {
  int in_pipe[2];
  int out_pipe[2];
  int err_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw Error(ErrorKind::WorkerSpawnFailed, std::strerror(errno));
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw Error(ErrorKind::WorkerSpawnFailed, std::strerror(errno));
  }
  if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    throw Error(ErrorKind::WorkerSpawnFailed, std::strerror(errno));
  }

  std::vector<std::string> args = command_.argv;
  args.push_back(root_.string());
  std::vector<char*> argv;
  for (auto& arg : args) argv.push_back(arg.data());
  argv.push_back(nullptr);
  const std::string dir = root_.string();

  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) ::close(fd);
    throw Error(ErrorKind::WorkerSpawnFailed, std::strerror(errno));
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    int code = 0;
    if (::chdir(dir.c_str()) != 0 || ::dup2(in_pipe[0], 0) < 0 || ::dup2(out_pipe[1], 1) < 0) {
      code = errno;
    } else {
      ::execvp(argv[0], argv.data());
      code = errno;
    }
    [[maybe_unused]] auto written = ::write(err_pipe[1], &code, sizeof code);
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);

  int child_errno = 0;
  ssize_t got;
  do {
    got = ::read(err_pipe[0], &child_errno, sizeof child_errno);
  } while (got < 0 && errno == EINTR);
  ::close(err_pipe[0]);
  if (got > 0) {
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::waitpid(pid, nullptr, 0);
    throw Error(ErrorKind::WorkerSpawnFailed,
                "cannot launch '" + command_.argv.front() + "': " + std::strerror(child_errno));
  }
  pid_ = pid;
  to_worker_ = in_pipe[1];
  from_worker_ = out_pipe[0];
  buffer_.clear();
  eof_ = false;
}

void SandboxSession::handshake() {
  const auto deadline = deadline_after(limits_.handshake_timeout_s);
  if (!send_line(R"({"id":0,"op":"ping"})")) {
    kill_worker();
    throw Error(ErrorKind::WorkerSpawnFailed, "worker closed its input before the handshake");
  }
  while (true) {
    const auto line = read_line(seconds_left(deadline));
    if (!line) {
      const bool ended = eof_;
      kill_worker();
      if (ended) throw Error(ErrorKind::WorkerSpawnFailed, "worker exited during the handshake");
      throw Error(ErrorKind::HandshakeTimeout, "no handshake within " +
                                                   std::to_string(limits_.handshake_timeout_s) + " s");
    }
    const auto message = json::parse(*line, nullptr, false);
    if (message.is_object() && message.value("id", -1) == 0) return;
  }
}

bool SandboxSession::send_line(const std::string& line) {
  std::string data = line + "\n";
  std::size_t sent = 0;
  while (sent < data.size()) {
    const auto n = ::write(to_worker_, data.data() + sent, data.size() - sent);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

std::optional<std::string> SandboxSession::read_line(double timeout_s) {
  const auto deadline = deadline_after(std::max(timeout_s, 0.0));
  while (true) {
    const auto newline = buffer_.find('\n');
    if (newline != std::string::npos) {
      std::string line = buffer_.substr(0, newline);
      buffer_.erase(0, newline + 1);
      return line;
    }
    if (eof_) return std::nullopt;
    const double left = seconds_left(deadline);
    if (left <= 0) return std::nullopt;
    pollfd pfd{from_worker_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(std::ceil(left * 1000.0)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      eof_ = true;
      return std::nullopt;
    }
    if (ready == 0) continue;
    char chunk[65536];
    const auto n = ::read(from_worker_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      eof_ = true;
    } else if (n == 0) {
      eof_ = true;
    } else {
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }
}

void SandboxSession::kill_worker() {
  close_fd(to_worker_);
  close_fd(from_worker_);
  if (pid_ > 0) {
    ::kill(-pid_, SIGKILL);
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
  }
  pid_ = -1;
  buffer_.clear();
}

void SandboxSession::restart() {
  kill_worker();
  try {
    spawn();
    handshake();
  } catch (const Error& error) {
    throw Error(ErrorKind::SessionDead, std::string("worker could not be restarted: ") + error.what());
  }
}

bool SandboxSession::alive() const {
  if (pid_ <= 0) return false;
  return ::waitpid(pid_, nullptr, WNOHANG) == 0;
}

ExecResult SandboxSession::request(const std::string& op, const std::string* code) {
  if (pid_ <= 0) restart();
  ++counter_;
  const auto id = ++next_id_;
  json message{{"id", id}, {"op", op}};
  if (code != nullptr) message["code"] = *code;
  const auto started = Clock::now();

  ExecResult result;
  auto fail_and_restart = [&](std::string_view why) {
    restart();
    result.ok = false;
    result.stdout_text.clear();
    result.stderr_text = std::string(why);
    result.duration_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - started).count();
    return result;
  };

  if (!send_line(message.dump(-1, ' ', false, json::error_handler_t::replace))) {
    return fail_and_restart("WORKER CRASHED: session state reset");
  }
  const auto deadline = started + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(limits_.exec_timeout_s));
  while (true) {
    const auto line = read_line(seconds_left(deadline));
    if (!line) {
      return fail_and_restart(eof_ ? std::string_view("WORKER CRASHED: session state reset") : kTimeoutMessage);
    }
    const auto response = json::parse(*line, nullptr, false);
    if (!response.is_object() || !response.contains("id") || !response["id"].is_number_integer()) continue;
    if (response["id"].get<std::uint64_t>() != id) continue;
    result.ok = response.value("ok", false);
    result.stdout_text = response.value("stdout", std::string());
    result.stderr_text = response.value("stderr", std::string());
    if (response.contains("duration_ms") && response["duration_ms"].is_number()) {
      result.duration_ms = response["duration_ms"].get<std::int64_t>();
    } else {
      result.duration_ms =
          std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - started).count();
    }
    truncate_output(result, limits_.output_limit);
    return result;
  }
}

ExecResult SandboxSession::exec(const std::string& code) { return request("exec", &code); }

ExecResult SandboxSession::reset() { return request("reset", nullptr); }

void SandboxSession::shutdown() {
  if (pid_ <= 0) {
    close_fd(to_worker_);
    close_fd(from_worker_);
    return;
  }
  json message{{"id", ++next_id_}, {"op", "shutdown"}};
  send_line(message.dump());
  close_fd(to_worker_);
  const auto deadline = deadline_after(limits_.shutdown_grace_s);
  bool exited = false;
  while (Clock::now() < deadline) {
    const pid_t done = ::waitpid(pid_, nullptr, WNOHANG);
    if (done == pid_ || done < 0) {
      exited = true;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  if (exited) {
    // Reap anything the worker left behind in its group.
    ::kill(-pid_, SIGKILL);
  } else {
    ::kill(-pid_, SIGKILL);
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
  }
  close_fd(from_worker_);
  pid_ = -1;
  buffer_.clear();
}

}  // namespace scrub
