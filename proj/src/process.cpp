// SPDX-License-Identifier: Apache-2.0

#include "r2ai/process.hpp"

#include "r2ai/error.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <utility>

namespace r2ai {

namespace {

using Clock = std::chrono::steady_clock;

struct Pipe {
    int read = -1;
    int write = -1;
};

// Writes to a dead child must fail with EPIPE instead of killing us.
void ignore_sigpipe() {
    static std::once_flag once;
    std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

Pipe make_pipe() {
    ignore_sigpipe();
    int fds[2];
    if (::pipe2(fds, O_CLOEXEC) != 0) {
        throw Error(ErrorCode::spawn_failure, std::string("pipe: ") + std::strerror(errno));
    }
    return {fds[0], fds[1]};
}

void close_fd(int& fd) {
    if (fd >= 0) {
        ::close(fd);
        fd = -1;
    }
}

std::vector<char*> to_argv(const std::vector<std::string>& args) {
    std::vector<char*> out;
    out.reserve(args.size() + 1);
    for (const auto& a : args) {
        out.push_back(const_cast<char*>(a.c_str()));
    }
    out.push_back(nullptr);
    return out;
}

int remaining_ms(Clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left, 1'000'000));
}

// Runs in the child after fork(); only async-signal-safe calls from here.
[[noreturn]] void exec_child(const std::string& exe, std::vector<char*>& argv, int in_fd, int out_fd, int err_fd,
                             const char* cwd, int report_fd) {
    ::setpgid(0, 0);
    ::dup2(in_fd, STDIN_FILENO);
    ::dup2(out_fd, STDOUT_FILENO);
    ::dup2(err_fd, STDERR_FILENO);
    if (cwd != nullptr && ::chdir(cwd) != 0) {
        const int err = errno;
        [[maybe_unused]] auto n = ::write(report_fd, &err, sizeof err);
        ::_exit(127);
    }
    ::execv(exe.c_str(), argv.data());
    const int err = errno;
    [[maybe_unused]] auto n = ::write(report_fd, &err, sizeof err);
    ::_exit(127);
}

// Waits for the exec report pipe: EOF means exec succeeded.
void check_exec(int report_read, pid_t pid, const std::string& exe) {
    int err = 0;
    const auto n = ::read(report_read, &err, sizeof err);
    ::close(report_read);
    if (n == sizeof err) {
        ::waitpid(pid, nullptr, 0);
        throw Error(ErrorCode::spawn_failure, "cannot execute " + exe + ": " + std::strerror(err));
    }
}

std::filesystem::path resolve_or_throw(const std::string& name) {
    const auto exe = find_executable(name);
    if (!exe) {
        throw Error(ErrorCode::spawn_failure, "executable not found: " + name);
    }
    return *exe;
}

} // namespace

std::optional<std::filesystem::path> find_executable(std::string_view name) {
    if (name.empty()) {
        return std::nullopt;
    }
    const auto is_exec = [](const std::filesystem::path& p) {
        std::error_code ec;
        return std::filesystem::is_regular_file(p, ec) && ::access(p.c_str(), X_OK) == 0;
    };
    if (name.find('/') != std::string_view::npos) {
        std::filesystem::path p(name);
        return is_exec(p) ? std::optional(p) : std::nullopt;
    }
    const char* path = std::getenv("PATH");
    std::string_view dirs = path != nullptr ? path : "/usr/local/bin:/usr/bin:/bin";
    while (!dirs.empty()) {
        const auto colon = dirs.find(':');
        const auto dir = dirs.substr(0, colon);
        if (!dir.empty()) {
            auto candidate = std::filesystem::path(dir) / name;
            if (is_exec(candidate)) {
                return candidate;
            }
        }
        if (colon == std::string_view::npos) {
            break;
        }
        dirs.remove_prefix(colon + 1);
    }
    return std::nullopt;
}

ProcessResult run_process(const std::vector<std::string>& argv, const RunOptions& options) {
    if (argv.empty()) {
        throw Error(ErrorCode::spawn_failure, "empty command line");
    }
    const std::string exe = resolve_or_throw(argv.front()).string();
    auto cargv = to_argv(argv);
    const std::string cwd = options.cwd.string();

    Pipe in = make_pipe();
    Pipe out = make_pipe();
    Pipe report = make_pipe();

    const pid_t pid = ::fork();
    if (pid < 0) {
        for (int* fd : {&in.read, &in.write, &out.read, &out.write, &report.read, &report.write}) {
            close_fd(*fd);
        }
        throw Error(ErrorCode::spawn_failure, std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
        exec_child(exe, cargv, in.read, out.write, out.write, cwd.empty() ? nullptr : cwd.c_str(), report.write);
    }
    ::setpgid(pid, pid);
    close_fd(in.read);
    close_fd(out.write);
    close_fd(report.write);
    check_exec(report.read, pid, exe);

    ProcessResult result;
    const auto deadline = Clock::now() + options.timeout;

    std::string_view pending = options.stdin_data;
    if (pending.empty()) {
        close_fd(in.write);
    } else {
        ::fcntl(in.write, F_SETFL, ::fcntl(in.write, F_GETFL) | O_NONBLOCK);
    }

    char buf[8192];
    while (out.read >= 0) {
        pollfd fds[2] = {{out.read, POLLIN, 0}, {in.write, POLLOUT, 0}};
        const nfds_t count = in.write >= 0 ? 2 : 1;
        const int wait = remaining_ms(deadline);
        if (wait == 0) {
            result.timed_out = true;
            break;
        }
        const int rc = ::poll(fds, count, wait);
        if (rc < 0) {
            if (errno == EINTR) {
                continue;
            }
            break;
        }
        if (rc == 0) {
            result.timed_out = true;
            break;
        }
        if (count == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP)) != 0) {
            const auto n = ::write(in.write, pending.data(), pending.size());
            if (n > 0) {
                pending.remove_prefix(static_cast<std::size_t>(n));
            }
            if (n < 0 || pending.empty()) {
                close_fd(in.write);
            }
        }
        if ((fds[0].revents & (POLLIN | POLLHUP | POLLERR)) != 0) {
            const auto n = ::read(out.read, buf, sizeof buf);
            if (n <= 0) {
                close_fd(out.read);
                break;
            }
            const auto room = options.max_output - std::min(options.max_output, result.output.size());
            result.output.append(buf, std::min<std::size_t>(room, static_cast<std::size_t>(n)));
            if (static_cast<std::size_t>(n) > room) {
                result.truncated = true;
            }
        }
    }
    close_fd(in.write);
    close_fd(out.read);

    int status = 0;
    if (result.timed_out) {
        ::kill(-pid, SIGKILL);
        ::waitpid(pid, &status, 0);
        return result;
    }
    // Output closed; the child may still be running with stdout shut.
    while (true) {
        const pid_t r = ::waitpid(pid, &status, WNOHANG);
        if (r == pid) {
            break;
        }
        if (r < 0 && errno != EINTR) {
            break;
        }
        if (remaining_ms(deadline) == 0) {
            result.timed_out = true;
            ::kill(-pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            return result;
        }
        ::usleep(2000);
    }
    if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.exit_code = 128 + WTERMSIG(status);
    }
    return result;
}

Subprocess Subprocess::spawn(const std::vector<std::string>& argv) {
    if (argv.empty()) {
        throw Error(ErrorCode::spawn_failure, "empty command line");
    }
    const std::string exe = resolve_or_throw(argv.front()).string();
    auto cargv = to_argv(argv);

    Pipe in = make_pipe();
    Pipe out = make_pipe();
    Pipe report = make_pipe();
    const int devnull = ::open("/dev/null", O_WRONLY | O_CLOEXEC);

    const pid_t pid = ::fork();
    if (pid < 0) {
        for (int* fd : {&in.read, &in.write, &out.read, &out.write, &report.read, &report.write}) {
            close_fd(*fd);
        }
        ::close(devnull);
        throw Error(ErrorCode::spawn_failure, std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
        exec_child(exe, cargv, in.read, out.write, devnull, nullptr, report.write);
    }
    ::setpgid(pid, pid);
    ::close(devnull);
    close_fd(in.read);
    close_fd(out.write);
    close_fd(report.write);
    check_exec(report.read, pid, exe);
    return Subprocess(pid, in.write, out.read);
}

Subprocess::Subprocess(Subprocess&& other) noexcept
    : pid_(std::exchange(other.pid_, -1)),
      stdin_fd_(std::exchange(other.stdin_fd_, -1)),
      stdout_fd_(std::exchange(other.stdout_fd_, -1)),
      buffer_(std::move(other.buffer_)) {}

Subprocess& Subprocess::operator=(Subprocess&& other) noexcept {
    if (this != &other) {
        kill();
        pid_ = std::exchange(other.pid_, -1);
        stdin_fd_ = std::exchange(other.stdin_fd_, -1);
        stdout_fd_ = std::exchange(other.stdout_fd_, -1);
        buffer_ = std::move(other.buffer_);
    }
    return *this;
}

Subprocess::~Subprocess() { kill(); }

bool Subprocess::write_all(std::string_view data) {
    if (stdin_fd_ < 0) {
        return false;
    }
    while (!data.empty()) {
        const auto n = ::write(stdin_fd_, data.data(), data.size());
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            return false;
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

Subprocess::ReadStatus Subprocess::read_until(char terminator, std::string& out, std::chrono::milliseconds timeout) {
    const auto deadline = Clock::now() + timeout;
    while (true) {
        if (const auto pos = buffer_.find(terminator); pos != std::string::npos) {
            out.append(buffer_, 0, pos);
            buffer_.erase(0, pos + 1);
            return ReadStatus::ok;
        }
        if (stdout_fd_ < 0) {
            out += buffer_;
            buffer_.clear();
            return ReadStatus::closed;
        }
        pollfd pfd{stdout_fd_, POLLIN, 0};
        const int wait = remaining_ms(deadline);
        const int rc = wait == 0 ? 0 : ::poll(&pfd, 1, wait);
        if (rc < 0 && errno == EINTR) {
            continue;
        }
        if (rc == 0) {
            // The rest of this reply and its terminator arrive on a later read.
            out += buffer_;
            buffer_.clear();
            return ReadStatus::timeout;
        }
        char buf[8192];
        const auto n = ::read(stdout_fd_, buf, sizeof buf);
        if (n <= 0) {
            close_fd(stdout_fd_);
            continue;
        }
        buffer_.append(buf, static_cast<std::size_t>(n));
    }
}

bool Subprocess::alive() {
    if (pid_ <= 0) {
        return false;
    }
    int status = 0;
    const pid_t r = ::waitpid(pid_, &status, WNOHANG);
    if (r == pid_) {
        pid_ = -1;
        return false;
    }
    return true;
}

void Subprocess::kill() {
    close_all();
    if (pid_ > 0) {
        ::kill(-pid_, SIGKILL);
        ::waitpid(pid_, nullptr, 0);
        pid_ = -1;
    }
}

void Subprocess::close_all() {
    close_fd(stdin_fd_);
    close_fd(stdout_fd_);
}

} // namespace r2ai
