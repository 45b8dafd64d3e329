#pragma once

#include <sys/types.h>

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace patchmem {

struct ProcessResult {
  int exit_code = -1;  // 128 + signal when killed by a signal
  bool timed_out = false;
  std::string output;  // stdout and stderr interleaved
  std::chrono::milliseconds elapsed{0};
};

struct ProcessOptions {
  std::filesystem::path cwd;
  std::chrono::milliseconds timeout{std::chrono::minutes(10)};
  std::size_t output_cap = 0;  // 0: unbounded; otherwise head+tail kept
  std::map<std::string, std::string> env;  // added to the inherited environment
  std::string stdin_data;
};

/// Runs argv[0] (PATH lookup) in its own process group; the whole group is
/// killed on timeout.
ProcessResult run_process(const std::vector<std::string>& argv, const ProcessOptions& options);

/// `/bin/sh -c command`.
ProcessResult run_command(const std::string& command, const ProcessOptions& options);

/// A long-lived bash process. Working directory and environment persist
/// between run() calls. Not thread-safe.
class ShellSession {
 public:
  explicit ShellSession(std::filesystem::path initial_cwd, std::size_t output_cap = 20000);
  ~ShellSession();

  ShellSession(const ShellSession&) = delete;
  ShellSession& operator=(const ShellSession&) = delete;

  struct Result {
    int exit_code = 0;
    std::string output;
  };

  /// Throws Error(Timeout) after killing and restarting the shell, or
  /// Error(SessionDead) if the shell exited.
  Result run(const std::string& command, std::chrono::milliseconds timeout);

  void restart();
  bool alive() const { return pid_ > 0; }

 private:
  void start();
  void stop();

  std::filesystem::path initial_cwd_;
  std::size_t output_cap_;
  pid_t pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  std::string sentinel_;
  unsigned long counter_ = 0;
};

}  // namespace patchmem
