// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sys/types.h>

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace r2ai {

/// Searches PATH (or accepts a path containing '/') for an executable.
std::optional<std::filesystem::path> find_executable(std::string_view name);

struct RunOptions {
    std::filesystem::path cwd;
    std::chrono::milliseconds timeout{60'000};
    std::string stdin_data;
    std::size_t max_output = 1 << 20;
};

struct ProcessResult {
    std::string output;  // stdout and stderr, interleaved as produced
    int exit_code = -1;
    bool timed_out = false;
    bool truncated = false;
};

/// Spawns argv[0] (looked up in PATH), collects its combined output and waits
/// for it. On timeout the whole process group is killed and whatever was
/// produced so far is returned. Throws Error{spawn_failure}.
ProcessResult run_process(const std::vector<std::string>& argv, const RunOptions& options = {});

/// A long-lived child with pipes on stdin and stdout (stderr is discarded).
/// Killed and reaped on destruction.
class Subprocess {
public:
    static Subprocess spawn(const std::vector<std::string>& argv);

    Subprocess(Subprocess&& other) noexcept;
    Subprocess& operator=(Subprocess&& other) noexcept;
    Subprocess(const Subprocess&) = delete;
    Subprocess& operator=(const Subprocess&) = delete;
    ~Subprocess();

    /// False once the pipe broke or the child exited.
    bool write_all(std::string_view data);

    enum class ReadStatus { ok, timeout, closed };

    /// Appends bytes to `out` until `terminator` is read (not included).
    ReadStatus read_until(char terminator, std::string& out, std::chrono::milliseconds timeout);

    bool alive();
    void kill();
    pid_t pid() const { return pid_; }

private:
    Subprocess(pid_t pid, int in_fd, int out_fd) : pid_(pid), stdin_fd_(in_fd), stdout_fd_(out_fd) {}
    void close_all();

    pid_t pid_ = -1;
    int stdin_fd_ = -1;
    int stdout_fd_ = -1;
    std::string buffer_;
};

} // namespace r2ai
