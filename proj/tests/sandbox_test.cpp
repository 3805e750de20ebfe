#include <gtest/gtest.h>

#include <signal.h>

#include "scrub/error.hpp"
#include "scrub/sandbox.hpp"
#include "support.hpp"

namespace scrub {
namespace {

using testing::fake_worker_command;
using testing::TempDir;

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& error) {
    return error.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::InvalidConfig;
}

TEST(Truncate, CombinedLimitAndMarker) {
  ExecResult result{true, std::string(20, 'a'), std::string(30, 'b'), 0, false};
  truncate_output(result, 40);
  EXPECT_TRUE(result.truncated);
  EXPECT_EQ(result.stdout_text, std::string(20, 'a'));
  EXPECT_EQ(result.stderr_text, std::string(40 - 20 - kTruncationMarker.size(), 'b') + std::string(kTruncationMarker));
  EXPECT_LE(result.stdout_text.size() + result.stderr_text.size(), 40u);

  ExecResult big{true, std::string(100, 'a'), "err", 0, false};
  truncate_output(big, 50);
  EXPECT_EQ(big.stdout_text.size(), 50u);
  EXPECT_TRUE(big.stderr_text.empty());

  ExecResult small{true, "ok", "", 0, false};
  truncate_output(small, 50);
  EXPECT_FALSE(small.truncated);
}

TEST(Truncate, NeverSplitsUtf8) {
  std::string text;
  for (int i = 0; i < 20; ++i) text += "\xC3\xA9";  // é
  ExecResult result{true, text, "", 0, false};
  truncate_output(result, 15 + kTruncationMarker.size());
  const auto body = result.stdout_text.substr(0, result.stdout_text.size() - kTruncationMarker.size());
  EXPECT_EQ(body.size(), 14u);
}

TEST(WorkerCommand, EnvironmentOverride) {
  ::setenv("SCRUB_WORKER", "python3  -u worker.py", 1);
  EXPECT_EQ(default_worker_command().argv, (std::vector<std::string>{"python3", "-u", "worker.py"}));
  ::unsetenv("SCRUB_WORKER");
  EXPECT_EQ(default_worker_command().argv, std::vector<std::string>{"scrub-worker"});
}

TEST(Session, PersistentStateAndCwd) {
  TempDir dir;
  testing::write_file(dir / "train.csv", "a\n1\n");
  auto session = SandboxSession::start(dir.path(), fake_worker_command());
  auto r1 = session->exec("x = 41\nprint(open('train.csv').read().strip())");
  EXPECT_TRUE(r1.ok) << r1.stderr_text;
  EXPECT_EQ(r1.stdout_text, "a\n1\n");
  auto r2 = session->exec("print(x + 1)");
  EXPECT_EQ(r2.stdout_text, "42\n");
  auto r3 = session->exec("open('train_cleaned_v1.csv', 'w').write('a\\n')");
  EXPECT_TRUE(r3.ok);
  EXPECT_TRUE(std::filesystem::exists(dir / "train_cleaned_v1.csv"));
  EXPECT_EQ(session->request_count(), 3u);
}

TEST(Session, ErrorsAreReturnedNotThrown) {
  TempDir dir;
  auto session = SandboxSession::start(dir.path(), fake_worker_command());
  auto result = session->exec("raise ValueError('boom')");
  EXPECT_FALSE(result.ok);
  EXPECT_NE(result.stderr_text.find("ValueError: boom"), std::string::npos);
  EXPECT_TRUE(session->exec("print(1)").ok);
}

TEST(Session, ResetClearsNamespace) {
  TempDir dir;
  auto session = SandboxSession::start(dir.path(), fake_worker_command());
  session->exec("y = 1");
  EXPECT_TRUE(session->reset().ok);
  EXPECT_FALSE(session->exec("print(y)").ok);
}

TEST(Session, OutputIsTruncated) {
  TempDir dir;
  auto session = SandboxSession::start(dir.path(), fake_worker_command());
  auto result = session->exec("print('x' * 20000)");
  EXPECT_TRUE(result.truncated);
  EXPECT_EQ(result.stdout_text.size(), 10000u);
  EXPECT_TRUE(result.stdout_text.ends_with(kTruncationMarker));
}

TEST(Session, TimeoutRestartsWithFreshState) {
  TempDir dir;
  SandboxLimits limits;
  limits.exec_timeout_s = 0.5;
  auto session = SandboxSession::start(dir.path(), fake_worker_command(), limits);
  session->exec("z = 5");
  const auto first_pid = session->pid();
  auto result = session->exec("import time\ntime.sleep(30)");
  EXPECT_FALSE(result.ok);
  EXPECT_EQ(result.stderr_text, kTimeoutMessage);
  EXPECT_NE(session->pid(), first_pid);
  EXPECT_TRUE(session->alive());
  EXPECT_FALSE(session->exec("print(z)").ok);
  EXPECT_TRUE(session->exec("print(1)").ok);
}

TEST(Session, CrashRestarts) {
  TempDir dir;
  auto session = SandboxSession::start(dir.path(), fake_worker_command());
  auto result = session->exec("import os\nos._exit(3)");
  EXPECT_FALSE(result.ok);
  EXPECT_NE(result.stderr_text.find("WORKER CRASHED"), std::string::npos);
  EXPECT_TRUE(session->exec("print(2)").ok);
}

TEST(Session, SessionDeadWhenRestartFails) {
  TempDir dir;
  const auto worker = (testing::test_data_dir() / "fixtures" / "fake_worker.py").string();
  // Refuses to start once the marker file exists.
  WorkerCommand command{{"python3", "-c",
                         "import os, sys, runpy\n"
                         "if os.path.exists(os.path.join(sys.argv[1], 'dead')): sys.exit(1)\n"
                         "sys.argv = ['" + worker + "', sys.argv[1]]\n"
                         "runpy.run_path('" + worker + "', run_name='__main__')\n"}};
  auto session = SandboxSession::start(dir.path(), command);
  EXPECT_EQ(kind_of([&] { session->exec("import os\nopen('dead', 'w').close()\nos._exit(1)"); }),
            ErrorKind::SessionDead);
}

TEST(Session, SpawnFailures) {
  TempDir dir;
  EXPECT_EQ(kind_of([&] { SandboxSession::start(dir.path(), {{"/nonexistent/worker"}}); }),
            ErrorKind::WorkerSpawnFailed);
  EXPECT_EQ(kind_of([&] { SandboxSession::start(dir / "missing", fake_worker_command()); }),
            ErrorKind::WorkerSpawnFailed);
  EXPECT_EQ(kind_of([&] { SandboxSession::start(dir.path(), {{"python3", "-c", "import sys; sys.exit(0)"}}); }),
            ErrorKind::WorkerSpawnFailed);
}

TEST(Session, HandshakeTimeout) {
  TempDir dir;
  SandboxLimits limits;
  limits.handshake_timeout_s = 0.5;
  EXPECT_EQ(kind_of([&] {
              SandboxSession::start(dir.path(), {{"python3", "-c", "import time; time.sleep(30)"}}, limits);
            }),
            ErrorKind::HandshakeTimeout);
}

TEST(Session, ShutdownIsIdempotent) {
  TempDir dir;
  auto session = SandboxSession::start(dir.path(), fake_worker_command());
  const auto pid = session->pid();
  session->shutdown();
  session->shutdown();
  EXPECT_FALSE(session->alive());
  EXPECT_NE(::kill(pid, 0), 0);
}

}  // namespace
}  // namespace scrub
