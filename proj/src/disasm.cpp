// SPDX-License-Identifier: Apache-2.0

#include "r2ai/disasm.hpp"

#include "r2ai/process.hpp"
#include "r2ai/text.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace r2ai {

namespace {

using Clock = std::chrono::steady_clock;

class PipeBackend final : public DisasmBackend {
public:
    PipeBackend(Subprocess process, std::chrono::milliseconds timeout)
        : process_(std::move(process)), timeout_(timeout) {}

    RawReply exec(const std::string& command, std::chrono::milliseconds timeout) override {
        drain(timeout);
        if (!process_.alive() || !process_.write_all(command + "\n")) {
            throw Error(ErrorCode::session_dead, "disassembler process is gone");
        }
        RawReply reply;
        switch (process_.read_until('\0', reply.output, timeout)) {
        case Subprocess::ReadStatus::ok: break;
        case Subprocess::ReadStatus::timeout:
            ++unanswered_;
            reply.timed_out = true;
            break;
        case Subprocess::ReadStatus::closed:
            throw Error(ErrorCode::session_dead, "disassembler exited while running '" + command + "'");
        }
        return reply;
    }

    bool alive() override { return process_.alive(); }

    // The first NUL marks the end of startup output.
    void await_ready() {
        std::string banner;
        if (process_.read_until('\0', banner, timeout_) != Subprocess::ReadStatus::ok) {
            throw Error(ErrorCode::spawn_failure, "disassembler did not become ready");
        }
    }

private:
    // Discards the late replies of commands that previously timed out so the
    // next reply is attributed to the right command.
    void drain(std::chrono::milliseconds timeout) {
        while (unanswered_ > 0) {
            std::string late;
            const auto status = process_.read_until('\0', late, timeout);
            if (status == Subprocess::ReadStatus::closed) {
                throw Error(ErrorCode::session_dead, "disassembler process is gone");
            }
            if (status == Subprocess::ReadStatus::timeout) {
                throw CommandTimeout(CommandResult{"(pending reply)", late, timeout, true});
            }
            --unanswered_;
        }
    }

    Subprocess process_;
    std::chrono::milliseconds timeout_;
    int unanswered_ = 0;
};

} // namespace

MockFixture MockFixture::parse(std::string_view json_text) {
    const auto j = nlohmann::json::parse(json_text);
    MockFixture f;
    const auto commands = j.value("commands", nlohmann::json::object());
    for (const auto& [cmd, out] : commands.items()) {
        f.outputs[cmd] = out.get<std::string>();
    }
    const auto delays = j.value("delays_ms", nlohmann::json::object());
    for (const auto& [cmd, ms] : delays.items()) {
        f.delays[cmd] = std::chrono::milliseconds(ms.get<long long>());
    }
    f.fallback = j.value("fallback", "");
    return f;
}

MockFixture MockFixture::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::not_found, "cannot read mock fixture " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

MockBackend::MockBackend(MockFixture fixture, std::shared_ptr<CommandRecorder> recorder)
    : fixture_(std::move(fixture)), recorder_(std::move(recorder)) {}

std::string MockBackend::lookup(const std::string& command) const {
    if (const auto it = fixture_.outputs.find(command); it != fixture_.outputs.end()) {
        return it->second;
    }
    if (const auto tilde = command.find('~'); tilde != std::string::npos) {
        const auto base = lookup(std::string(text::trim(command.substr(0, tilde))));
        const auto needle = command.substr(tilde + 1);
        std::string out;
        for (const auto& line : text::split(base, '\n')) {
            if (!line.empty() && line.find(needle) != std::string::npos) {
                out += line + "\n";
            }
        }
        return out;
    }
    return fixture_.fallback;
}

RawReply MockBackend::exec(const std::string& command, std::chrono::milliseconds timeout) {
    if (killed_) {
        throw Error(ErrorCode::session_dead, "mock disassembler was killed");
    }
    if (recorder_) {
        std::lock_guard lock(recorder_->mutex);
        recorder_->commands.push_back(command);
    }
    if (const auto it = fixture_.delays.find(command); it != fixture_.delays.end()) {
        if (it->second > timeout) {
            std::this_thread::sleep_for(timeout);
            return RawReply{"", true};
        }
        std::this_thread::sleep_for(it->second);
    }
    return RawReply{lookup(command), false};
}

std::unique_ptr<DisasmBackend> make_pipe_backend(const std::filesystem::path& binary, const DisasmOptions& options) {
    auto backend = std::make_unique<PipeBackend>(Subprocess::spawn({options.executable, "-q0", binary.string()}),
                                                 options.timeout);
    backend->await_ready();
    return backend;
}

DisasmSession::DisasmSession(std::unique_ptr<DisasmBackend> backend, BackendKind kind, std::filesystem::path binary,
                             DisasmOptions options)
    : mutex_(std::make_unique<std::mutex>()),
      backend_(std::move(backend)),
      kind_(kind),
      binary_(std::move(binary)),
      options_(std::move(options)) {}

DisasmSession::DisasmSession(DisasmSession&&) noexcept = default;
DisasmSession& DisasmSession::operator=(DisasmSession&&) noexcept = default;
DisasmSession::~DisasmSession() = default;

DisasmSession DisasmSession::open(const std::filesystem::path& binary, const DisasmOptions& options) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(binary, ec)) {
        throw Error(ErrorCode::not_found, "no such file: " + binary.string());
    }
    std::ifstream probe(binary, std::ios::binary);
    if (!probe) {
        throw Error(ErrorCode::not_found, "cannot read " + binary.string());
    }
    if (!find_executable(options.executable)) {
        throw Error(ErrorCode::spawn_failure, "disassembler executable not found: " + options.executable);
    }
    return DisasmSession(make_pipe_backend(binary, options), BackendKind::external_process, binary, options);
}

DisasmSession DisasmSession::open_mock(MockFixture fixture, std::shared_ptr<CommandRecorder> recorder,
                                       const DisasmOptions& options) {
    return DisasmSession(std::make_unique<MockBackend>(std::move(fixture), std::move(recorder)), BackendKind::mock,
                         "(mock)", options);
}

DisasmSession DisasmSession::with_backend(std::unique_ptr<DisasmBackend> backend, BackendKind kind,
                                          std::filesystem::path binary, const DisasmOptions& options) {
    return DisasmSession(std::move(backend), kind, std::move(binary), options);
}

std::string cap_output(std::string output, std::size_t cap) {
    if (output.size() <= cap) {
        return output;
    }
    const auto cut = text::utf8_floor(output, cap);
    const auto omitted = output.size() - cut;
    output.resize(cut);
    output += "\n[...output truncated: " + std::to_string(omitted) + " bytes omitted...]\n";
    return output;
}

CommandResult DisasmSession::exec(const std::string& command) {
    std::lock_guard lock(*mutex_);
    const auto start = Clock::now();
    auto reply = backend_->exec(command, options_.timeout);
    CommandResult result;
    result.command = command;
    result.output = cap_output(text::escape_binary(reply.output), options_.output_cap);
    result.duration = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
    result.partial = reply.timed_out;
    if (reply.timed_out) {
        throw CommandTimeout(std::move(result));
    }
    return result;
}

std::vector<std::string> split_commands(std::string_view commands) {
    std::vector<std::string> out;
    for (const auto& part : text::split(commands, ';')) {
        const auto t = text::trim(part);
        if (!t.empty()) {
            out.emplace_back(t);
        }
    }
    return out;
}

std::string DisasmSession::init_snapshot(std::string_view init_commands) {
    std::string snapshot;
    for (const auto& cmd : split_commands(init_commands)) {
        std::string piece;
        try {
            piece = exec(cmd).output;
        } catch (const CommandTimeout& e) {
            piece = e.partial().output + "[" + cmd + ": timed out, output incomplete]\n";
        } catch (const Error& e) {
            piece = "[" + cmd + ": " + e.what() + "]\n";
        }
        if (!piece.empty() && piece.back() != '\n') {
            piece += '\n';
        }
        snapshot += piece;
    }
    return snapshot;
}

} // namespace r2ai
