#include "patchmem/process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <random>

#include "patchmem/error.hpp"
#include "patchmem/text.hpp"

namespace patchmem {
namespace {

using Clock = std::chrono::steady_clock;

// Keeps the first and last `cap/2` bytes of a stream of unknown length.
class BoundedSink {
 public:
  explicit BoundedSink(std::size_t cap) : cap_(cap) {}

  void append(const char* data, std::size_t n) {
    total_ += n;
    if (cap_ == 0 || head_.size() + n <= cap_ / 2) {
      head_.append(data, n);
      return;
    }
    std::size_t room = cap_ / 2 > head_.size() ? cap_ / 2 - head_.size() : 0;
    head_.append(data, std::min(room, n));
    tail_.append(data + std::min(room, n), n - std::min(room, n));
    if (tail_.size() > cap_) tail_.erase(0, tail_.size() - cap_ / 2);
  }

  std::string finish() const {
    std::string all = head_ + tail_;
    if (cap_ == 0 || total_ <= cap_) return all;
    return text::cap_head_tail(all, cap_);
  }

 private:
  std::size_t cap_;
  std::size_t total_ = 0;
  std::string head_;
  std::string tail_;
};

void kill_group(pid_t pid) {
  if (pid > 0) {
    ::kill(-pid, SIGKILL);
    ::kill(pid, SIGKILL);
  }
}

int decode_status(int status) {
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
  return -1;
}

void write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    auto n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      return;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

}  // namespace

ProcessResult run_process(const std::vector<std::string>& argv, const ProcessOptions& options) {
  if (argv.empty()) throw Error(ErrorCode::BadArguments, "empty argv");
  int out_pipe[2];
  int in_pipe[2];
  if (::pipe2(out_pipe, O_CLOEXEC) != 0 || ::pipe2(in_pipe, O_CLOEXEC) != 0)
    throw Error(ErrorCode::IoError, std::string("pipe: ") + std::strerror(errno));

  const auto start = Clock::now();
  pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorCode::IoError, std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(out_pipe[1], STDERR_FILENO);
    if (!options.cwd.empty() && ::chdir(options.cwd.c_str()) != 0) _exit(126);
    for (const auto& [k, v] : options.env) ::setenv(k.c_str(), v.c_str(), 1);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    ::execvp(args[0], args.data());
    _exit(127);
  }
  ::setpgid(pid, pid);
  ::close(out_pipe[1]);
  ::close(in_pipe[0]);
  write_all(in_pipe[1], options.stdin_data);
  ::close(in_pipe[1]);

  BoundedSink sink(options.output_cap);
  ProcessResult result;
  const auto deadline = start + options.timeout;
  char buf[65536];
  while (true) {
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (remaining <= 0) {
      result.timed_out = true;
      kill_group(pid);
      break;
    }
    pollfd pfd{out_pipe[0], POLLIN, 0};
    int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining, 1000)));
    if (rc < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (rc == 0) continue;
    auto n = ::read(out_pipe[0], buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (n == 0) break;
    sink.append(buf, static_cast<std::size_t>(n));
  }
  ::close(out_pipe[0]);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  // Background children may hold the pipe; the group is gone either way.
  kill_group(pid);
  result.exit_code = decode_status(status);
  result.output = sink.finish();
  result.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
  return result;
}

ProcessResult run_command(const std::string& command, const ProcessOptions& options) {
  return run_process({"/bin/sh", "-c", command}, options);
}

ShellSession::ShellSession(std::filesystem::path initial_cwd, std::size_t output_cap)
    : initial_cwd_(std::move(initial_cwd)), output_cap_(output_cap) {
  std::random_device rd;
  sentinel_ = "__PATCHMEM_DONE_" + std::to_string(rd()) + std::to_string(rd()) + "__";
  start();
}

ShellSession::~ShellSession() { stop(); }

void ShellSession::start() {
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0)
    throw Error(ErrorCode::IoError, std::string("pipe: ") + std::strerror(errno));
  pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorCode::IoError, std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::setsid();
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(out_pipe[1], STDERR_FILENO);
    if (::chdir(initial_cwd_.c_str()) != 0) _exit(126);
    ::execlp("bash", "bash", "--noprofile", "--norc", static_cast<char*>(nullptr));
    _exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  pid_ = pid;
  in_fd_ = in_pipe[1];
  out_fd_ = out_pipe[0];
  // A dead reader must surface as an error, not a signal.
  ::signal(SIGPIPE, SIG_IGN);
}

void ShellSession::stop() {
  if (in_fd_ >= 0) ::close(in_fd_);
  if (out_fd_ >= 0) ::close(out_fd_);
  in_fd_ = out_fd_ = -1;
  if (pid_ > 0) {
    kill_group(pid_);
    int status = 0;
    while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
    }
  }
  pid_ = -1;
}

void ShellSession::restart() {
  stop();
  start();
}

ShellSession::Result ShellSession::run(const std::string& command, std::chrono::milliseconds timeout) {
  if (pid_ <= 0) throw Error(ErrorCode::SessionDead, "shell session is not running; restart it");
  const std::string marker = sentinel_ + std::to_string(++counter_);
  // stdin of the command is /dev/null so it cannot swallow the framing.
  std::string script = "{\n" + command + "\n} < /dev/null\nprintf '\\n%s %d\\n' '" + marker + "' \"$?\"\n";
  write_all(in_fd_, script);

  const auto deadline = Clock::now() + timeout;
  std::string buffer;
  const std::string needle = "\n" + marker + " ";
  char buf[65536];
  while (true) {
    auto pos = buffer.find(needle);
    if (pos != std::string::npos) {
      auto eol = buffer.find('\n', pos + needle.size());
      if (eol != std::string::npos) {
        Result r;
        r.exit_code = std::atoi(buffer.c_str() + pos + needle.size());
        r.output = text::cap_head_tail(std::string_view(buffer).substr(0, pos), output_cap_);
        return r;
      }
    }
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (remaining <= 0) {
      restart();
      throw Error(ErrorCode::Timeout, "command timed out after " + std::to_string(timeout.count()) +
                                          " ms; shell restarted");
    }
    pollfd pfd{out_fd_, POLLIN, 0};
    int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining, 1000)));
    if (rc < 0 && errno == EINTR) continue;
    if (rc <= 0) continue;
    auto n = ::read(out_fd_, buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      stop();
      throw Error(ErrorCode::SessionDead, "shell exited; output so far:\n" + text::cap_head_tail(buffer, output_cap_));
    }
    buffer.append(buf, static_cast<std::size_t>(n));
    // Bound memory for chatty commands while still finding the marker.
    if (buffer.size() > 64 * 1024 * 1024) buffer.erase(output_cap_, buffer.size() - 32 * 1024 * 1024);
  }
}

}  // namespace patchmem
