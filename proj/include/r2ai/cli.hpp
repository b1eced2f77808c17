// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "r2ai/agent.hpp"
#include "r2ai/config.hpp"
#include "r2ai/provider.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace r2ai {

enum class CommandKind {
    decompile,
    decompile_recursive,
    auto_query,
    settings,
    help,
    file_query,
    model,
    suggest_name,
    repl,
    log,
    log_json,
    drop_last,
    reset,
    embeddings,
    signature,
    explain,
    suggest_vars,
    find_vulns,
    find_vulns_recursive,
    free_query,
};

struct Command {
    CommandKind kind = CommandKind::help;
    /// Query text, -e argument, -m argument or -Rq text.
    std::string text;
    std::string path;
    std::size_t count = 1;
};

struct GlobalOptions {
    std::string binary;
    std::string mock_fixture;
    std::string config;
    std::string history;
    std::string seek;
    std::optional<std::string> serve;
    std::vector<std::string> set;
    bool verbose = false;
};

struct Invocation {
    GlobalOptions options;
    Command command;
};

/// Throws Error{unknown_flag} for flags outside the list, Error{parse_failure}
/// for missing arguments.
Invocation parse_invocation(const std::vector<std::string>& args);

/// Parses one REPL line with the same syntax; a leading "r2ai" is optional.
Command parse_command_line(const std::string& line);

std::string help_text();

/// Prompts on `out`, reads the decision from `in`. End of input denies.
class TerminalApprover {
public:
    using Editor = std::function<std::optional<std::string>(const std::string&)>;

    TerminalApprover(std::istream& in, std::ostream& out, Editor editor);

    ApprovalDecision operator()(const ApprovalRequest& request);

private:
    std::istream& in_;
    std::ostream& out_;
    Editor editor_;
};

/// Opens `payload` in $VISUAL, else $EDITOR, else vi. Nullopt when the
/// editor fails.
std::optional<std::string> edit_in_editor(const std::string& payload, const EnvLookup& env = process_env());

struct CliIO {
    std::istream& in;
    std::ostream& out;
    std::ostream& err;
    EnvLookup env = process_env();
    std::shared_ptr<Transport> transport;
    TerminalApprover::Editor editor;
    /// Replaces the default ToolRunner (tests).
    std::shared_ptr<ToolDispatcher> dispatcher;
};

/// Exit codes: 0 success, 1 usage or local error, 2 provider error,
/// 3 auto run aborted by max_runs.
int run_cli(const std::vector<std::string>& args, CliIO& io);

} // namespace r2ai
