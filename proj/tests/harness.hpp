#pragma once

#include <sys/types.h>

#include <filesystem>
#include <string>
#include <vector>

namespace harness {

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& tag);

/// Runs `program args...` to completion with stdout/stderr sent to `log`;
/// returns the exit status (-1 if killed by a signal).
int run(const std::string& program, const std::vector<std::string>& args, const std::filesystem::path& log);

/// Starts `program args...` in the background; output goes to `log`.
pid_t spawn(const std::string& program, const std::vector<std::string>& args, const std::filesystem::path& log);

/// Sends `signal` and reaps the child.
void kill_and_wait(pid_t pid, int signal);

/// An ephemeral TCP port that was free a moment ago.
int free_port();

/// Polls GET /health until it answers 200 or `seconds` elapse.
bool wait_healthy(int port, double seconds);

}  // namespace harness
