// garble/subprocess.hpp
//
// Copyright 2026 The garble authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <csignal>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

namespace garble {

class SubprocessError : public std::runtime_error {
 public:
  explicit SubprocessError(const std::string& what) : std::runtime_error(what) {}
};

// Bidirectional pipe to a child process. stdin_fd()/stdout_fd() stay open
// for the child's lifetime, which supports persistent framed protocols.
class ChildProcess {
 public:
  ChildProcess(const std::vector<std::string>& argv, const std::string& workdir = "") {
    if (argv.empty()) throw SubprocessError("ChildProcess: empty argv");
    // A child exiting mid-write must surface as EPIPE, not SIGPIPE.
    static const bool sigpipe_ignored = [] {
      std::signal(SIGPIPE, SIG_IGN);
      return true;
    }();
    (void)sigpipe_ignored;
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0)
      throw SubprocessError("ChildProcess: pipe failed");
    pid_ = fork();
    if (pid_ < 0) throw SubprocessError("ChildProcess: fork failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      if (!workdir.empty() && chdir(workdir.c_str()) != 0) _exit(127);
      std::vector<char*> args;
      for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
      args.push_back(nullptr);
      execvp(args[0], args.data());
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    in_fd_ = to_child[1];
    out_fd_ = from_child[0];
  }

  ~ChildProcess() {
    close_stdin();
    if (out_fd_ >= 0) close(out_fd_);
    if (pid_ > 0) {
      int status = 0;
      if (waitpid(pid_, &status, WNOHANG) == 0) {
        kill(pid_, SIGKILL);
        waitpid(pid_, &status, 0);
      }
    }
  }

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  void write_all(const void* data, std::size_t len) {
    const char* p = static_cast<const char*>(data);
    while (len > 0) {
      ssize_t n = ::write(in_fd_, p, len);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw SubprocessError("ChildProcess: write failed");
      }
      p += n;
      len -= static_cast<std::size_t>(n);
    }
  }

  // Reads exactly len bytes, honoring the deadline per poll cycle.
  void read_all(void* data, std::size_t len, int timeout_ms) {
    char* p = static_cast<char*>(data);
    while (len > 0) {
      struct pollfd pfd{out_fd_, POLLIN, 0};
      const int rc = poll(&pfd, 1, timeout_ms);
      if (rc == 0) throw SubprocessError("ChildProcess: read timeout");
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw SubprocessError("ChildProcess: poll failed");
      }
      ssize_t n = ::read(out_fd_, p, len);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw SubprocessError("ChildProcess: read failed");
      }
      if (n == 0) throw SubprocessError("ChildProcess: child closed its output");
      p += n;
      len -= static_cast<std::size_t>(n);
    }
  }

  void close_stdin() {
    if (in_fd_ >= 0) {
      close(in_fd_);
      in_fd_ = -1;
    }
  }

  // Drains stdout until EOF, then reaps the child. Returns its exit code.
  int finish(std::string* remaining_output, int timeout_ms) {
    close_stdin();
    char buf[4096];
    while (true) {
      struct pollfd pfd{out_fd_, POLLIN, 0};
      const int rc = poll(&pfd, 1, timeout_ms);
      if (rc == 0) {
        kill(pid_, SIGKILL);
        waitpid(pid_, nullptr, 0);
        pid_ = -1;
        throw SubprocessError("ChildProcess: timeout waiting for output");
      }
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw SubprocessError("ChildProcess: poll failed");
      }
      ssize_t n = ::read(out_fd_, buf, sizeof buf);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw SubprocessError("ChildProcess: read failed");
      }
      if (n == 0) break;
      if (remaining_output) remaining_output->append(buf, static_cast<std::size_t>(n));
    }
    int status = 0;
    waitpid(pid_, &status, 0);
    pid_ = -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  }

  bool alive() const {
    return pid_ > 0 && waitpid(pid_, nullptr, WNOHANG) == 0;
  }

  int stdin_fd() const { return in_fd_; }
  int stdout_fd() const { return out_fd_; }

 private:
  pid_t pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
};

// One-shot helper: spawn, feed stdin, collect stdout, reap. Writing and
// reading are interleaved so large inputs cannot deadlock against a child
// that produces output early.
inline std::pair<int, std::string> run_subprocess(const std::vector<std::string>& argv,
                                                  const std::string& input,
                                                  const std::string& workdir = "",
                                                  int timeout_ms = 10000) {
  ChildProcess child(argv, workdir);
  std::size_t written = 0;
  std::string output;
  char buf[4096];
  while (written < input.size()) {
    struct pollfd pfds[2] = {{child.stdin_fd(), POLLOUT, 0}, {child.stdout_fd(), POLLIN, 0}};
    const int rc = poll(pfds, 2, timeout_ms);
    if (rc == 0) throw SubprocessError("run_subprocess: timeout");
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw SubprocessError("run_subprocess: poll failed");
    }
    if (pfds[1].revents & (POLLIN | POLLHUP)) {
      ssize_t n = ::read(child.stdout_fd(), buf, sizeof buf);
      if (n > 0) output.append(buf, static_cast<std::size_t>(n));
      else if (n == 0) break;  // child closed stdout before consuming stdin
    }
    if (pfds[0].revents & (POLLOUT | POLLERR | POLLHUP)) {
      ssize_t n = ::write(child.stdin_fd(), input.data() + written, input.size() - written);
      if (n < 0) {
        if (errno == EINTR) continue;
        if (errno == EPIPE) break;  // child exited early; collect what it wrote
        throw SubprocessError("run_subprocess: write failed");
      }
      written += static_cast<std::size_t>(n);
    }
  }
  const int code = child.finish(&output, timeout_ms);
  return {code, output};
}

}  // namespace garble
