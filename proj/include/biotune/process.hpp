// Copyright 2026 The biotune Authors.
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

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "biotune/endpoint.hpp"
#include "biotune/errors.hpp"
#include "biotune/protocol.hpp"

extern char** environ;

namespace biotune {

/// Trainer child process talking over its stdin/stdout. stderr is inherited
/// so trainer logs land next to ours.
///
/// SIGPIPE is ignored process-wide once a channel is created; a dead trainer
/// then surfaces as TrainerFailure from send().
class ProcessChannel : public LineChannel {
 public:
  explicit ProcessChannel(std::vector<std::string> argv) : argv_(std::move(argv)) {
    if (argv_.empty()) throw ConfigError("empty launch command", "trainer.command");
    std::signal(SIGPIPE, SIG_IGN);

    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) throw TrainerFailure(errno_message("pipe"));
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw TrainerFailure(errno_message("pipe"));
    }

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);

    std::vector<char*> args;
    for (auto& a : argv_) args.push_back(a.data());
    args.push_back(nullptr);

    const int rc = ::posix_spawnp(&pid_, args[0], &actions, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(to_child[0]);
    ::close(from_child[1]);
    if (rc != 0) {
      ::close(to_child[1]);
      ::close(from_child[0]);
      pid_ = -1;
      throw TrainerFailure("cannot launch trainer '" + argv_[0] + "': " + std::strerror(rc));
    }
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
  }

  ProcessChannel(const ProcessChannel&) = delete;
  ProcessChannel& operator=(const ProcessChannel&) = delete;

  ~ProcessChannel() override {
    if (write_fd_ >= 0) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    if (pid_ > 0) reap();
  }

  void send(std::string_view line) override {
    while (!line.empty()) {
      const ssize_t n = ::write(write_fd_, line.data(), line.size());
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TrainerFailure("trainer stdin closed: " + std::string(std::strerror(errno)));
      }
      line.remove_prefix(static_cast<std::size_t>(n));
    }
  }

  std::optional<std::string> receive(std::chrono::milliseconds timeout) override {
    using Clock = std::chrono::steady_clock;
    const auto deadline = Clock::now() + timeout;
    while (true) {
      if (auto line = lines_.next()) return line;
      if (eof_) throw TrainerFailure("trainer closed its output stream");
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      if (left.count() <= 0 && timeout.count() > 0) return std::nullopt;
      pollfd pfd{read_fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(std::max<long long>(0, left.count())));
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw TrainerFailure(errno_message("poll"));
      }
      if (ready == 0) return std::nullopt;
      char buf[65536];
      const ssize_t n = ::read(read_fd_, buf, sizeof buf);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TrainerFailure(errno_message("read"));
      }
      if (n == 0) {
        eof_ = true;
        continue;
      }
      lines_.feed(std::string_view(buf, static_cast<std::size_t>(n)));
    }
  }

  pid_t pid() const noexcept { return pid_; }

 private:
  static std::string errno_message(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

  void reap() {
    // Closing stdin asks the trainer to exit; give it a moment, then insist.
    for (int i = 0; i < 50; ++i) {
      int status = 0;
      if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    ::kill(pid_, SIGKILL);
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }

  std::vector<std::string> argv_;
  pid_t pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
  bool eof_ = false;
  protocol::LineAssembler lines_;
};

}  // namespace biotune
