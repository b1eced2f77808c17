// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "r2ai/error.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace r2ai {

struct CommandResult {
    std::string command;
    std::string output;
    std::chrono::milliseconds duration{0};
    bool partial = false;
};

/// Thrown by DisasmSession::exec when a command outlives its timeout. The
/// output gathered so far travels with it.
class CommandTimeout : public Error {
public:
    explicit CommandTimeout(CommandResult partial)
        : Error(ErrorCode::timeout, "command '" + partial.command + "' timed out"), partial_(std::move(partial)) {}
    const CommandResult& partial() const { return partial_; }

private:
    CommandResult partial_;
};

struct RawReply {
    std::string output;
    bool timed_out = false;
};

/// Transport to a disassembler. Implementations are driven by exactly one
/// DisasmSession and never see concurrent calls.
class DisasmBackend {
public:
    virtual ~DisasmBackend() = default;
    /// Throws Error{session_dead} when the disassembler is gone.
    virtual RawReply exec(const std::string& command, std::chrono::milliseconds timeout) = 0;
    virtual bool alive() = 0;
};

/// Canned replies for tests and offline demos.
struct MockFixture {
    std::map<std::string, std::string> outputs;
    std::map<std::string, std::chrono::milliseconds> delays;
    std::string fallback;

    /// {"commands": {cmd: output}, "delays_ms": {cmd: n}, "fallback": "..."}
    static MockFixture parse(std::string_view json_text);
    static MockFixture load(const std::filesystem::path& path);
};

/// Shared log of what a mock backend received, readable after the backend
/// has been moved into a session.
struct CommandRecorder {
    std::mutex mutex;
    std::vector<std::string> commands;

    std::vector<std::string> snapshot() {
        std::lock_guard lock(mutex);
        return commands;
    }
};

/// Answers from a MockFixture. A command missing from the fixture but of the
/// form `base~filter` gets the lines of `base` that contain `filter`.
class MockBackend final : public DisasmBackend {
public:
    explicit MockBackend(MockFixture fixture, std::shared_ptr<CommandRecorder> recorder = nullptr);
    RawReply exec(const std::string& command, std::chrono::milliseconds timeout) override;
    bool alive() override { return !killed_; }
    void kill() { killed_ = true; }

private:
    std::string lookup(const std::string& command) const;

    MockFixture fixture_;
    std::shared_ptr<CommandRecorder> recorder_;
    bool killed_ = false;
};

struct DisasmOptions {
    std::string executable = "radare2";
    std::chrono::milliseconds timeout{30'000};
    std::size_t output_cap = 64 * 1024;
};

/// Creates the pipe backend: the executable is started as
/// `<exe> -q0 <binary>`, each command is written newline-terminated and
/// each reply ends with a NUL byte.
std::unique_ptr<DisasmBackend> make_pipe_backend(const std::filesystem::path& binary, const DisasmOptions& options);

enum class BackendKind { external_process, mock };

/// One live disassembler per analyzed binary; commands run one at a time.
class DisasmSession {
public:
    /// Throws Error{not_found} for a missing binary, Error{spawn_failure} when
    /// the disassembler cannot be started.
    static DisasmSession open(const std::filesystem::path& binary, const DisasmOptions& options = {});
    static DisasmSession open_mock(MockFixture fixture, std::shared_ptr<CommandRecorder> recorder = nullptr,
                                   const DisasmOptions& options = {});
    static DisasmSession with_backend(std::unique_ptr<DisasmBackend> backend, BackendKind kind,
                                      std::filesystem::path binary, const DisasmOptions& options);

    DisasmSession(DisasmSession&&) noexcept;
    DisasmSession& operator=(DisasmSession&&) noexcept;
    ~DisasmSession();

    /// Runs one command. Output is made text-safe and capped at
    /// options.output_cap bytes. Throws CommandTimeout or Error{session_dead}.
    CommandResult exec(const std::string& command);

    /// Runs the ';'-separated commands in order and concatenates their
    /// output. A failing command leaves an inline note and the rest still run.
    std::string init_snapshot(std::string_view init_commands);

    BackendKind kind() const { return kind_; }
    const std::filesystem::path& binary_path() const { return binary_; }
    std::chrono::milliseconds timeout() const { return options_.timeout; }
    void set_timeout(std::chrono::milliseconds t) { options_.timeout = t; }

private:
    DisasmSession(std::unique_ptr<DisasmBackend> backend, BackendKind kind, std::filesystem::path binary,
                  DisasmOptions options);

    std::unique_ptr<std::mutex> mutex_;
    std::unique_ptr<DisasmBackend> backend_;
    BackendKind kind_;
    std::filesystem::path binary_;
    DisasmOptions options_;
};

/// Splits an init command string on ';', dropping blanks.
std::vector<std::string> split_commands(std::string_view commands);

/// Caps `output` at `cap` bytes, appending a note with the omitted size.
std::string cap_output(std::string output, std::size_t cap);

} // namespace r2ai
