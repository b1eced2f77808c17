// SPDX-License-Identifier: Apache-2.0

#include "r2ai/agent.hpp"

#include "r2ai/process.hpp"
#include "r2ai/text.hpp"

#include <algorithm>
#include <atomic>
#include <regex>

#include <unistd.h>

#include <spdlog/spdlog.h>

namespace r2ai {

namespace {

bool matches_any(const std::string& s, std::initializer_list<const char*> patterns) {
    return std::any_of(patterns.begin(), patterns.end(), [&](const char* p) {
        return std::regex_search(s, std::regex(p, std::regex::icase));
    });
}

void add_flag(std::vector<std::string>& flags, const char* flag) {
    if (std::find(flags.begin(), flags.end(), flag) == flags.end()) {
        flags.emplace_back(flag);
    }
}

void flag_r2_command(const std::string& command, std::vector<std::string>& flags) {
    for (const auto& part : split_commands(command)) {
        std::string cmd(text::trim(part));
        while (!cmd.empty() && (cmd.front() == '.' || cmd.front() == '@')) {
            cmd.erase(cmd.begin());
        }
        if (cmd.empty()) {
            continue;
        }
        if (cmd.front() == '!' || cmd.find('`') != std::string::npos || cmd.find('|') != std::string::npos ||
            cmd.rfind("#!", 0) == 0) {
            add_flag(flags, "shell");
        }
        if (cmd.front() == 'd' || cmd.rfind("ood", 0) == 0 || cmd.rfind("oo+", 0) == 0) {
            add_flag(flags, "debugger");
        }
        if (cmd.front() == 'w' || cmd.rfind("rm ", 0) == 0 || cmd.find('>') != std::string::npos) {
            add_flag(flags, "destructive");
        }
    }
}

void flag_script(const std::string& script, std::vector<std::string>& flags) {
    if (matches_any(script, {R"(\bos\.system\b)", R"(\bsubprocess\b)", R"(\bpopen\b)", R"(\bchild_process\b)",
                             R"(\bexecSync\b)", R"(\bspawn(Sync)?\b)", R"(\bos\.exec)"})) {
        add_flag(flags, "shell");
    }
    if (matches_any(script, {R"(rm\s+-[a-z]*[rf])", R"(\bshutil\.rmtree\b)", R"(\bos\.(remove|unlink|rmdir)\b)",
                             R"(\bunlinkSync\b)", R"(\brmSync\b)", R"(\bmkfs\b)", R"(\bdd\s+if=)",
                             R"(>\s*/dev/sd)", R"(\btruncate\b)", R"(\bchmod\s+-R\b)"})) {
        add_flag(flags, "destructive");
    }
}

std::string scratch_name() {
    static std::atomic<unsigned> counter{0};
    return "r2ai-" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
}

std::optional<std::filesystem::path> first_found(const std::string& configured,
                                                 std::initializer_list<const char*> names) {
    if (!configured.empty()) {
        return find_executable(configured);
    }
    for (const auto* n : names) {
        if (auto p = find_executable(n)) {
            return p;
        }
    }
    return std::nullopt;
}

void emit(const AutoContext& ctx, AgentEvent::Kind kind, std::string text, const ApprovalRequest* req = nullptr,
          const ApprovalDecision* decision = nullptr) {
    if (ctx.observer) {
        ctx.observer(AgentEvent{kind, std::move(text), req, decision});
    }
}

} // namespace

std::string_view to_string(Phase p) {
    switch (p) {
    case Phase::awaiting_model: return "awaiting_model";
    case Phase::awaiting_approval: return "awaiting_approval";
    case Phase::executing_tool: return "executing_tool";
    case Phase::done: return "done";
    case Phase::aborted: return "aborted";
    }
    return "unknown";
}

std::string_view to_string(ApprovalDecision::Kind k) {
    switch (k) {
    case ApprovalDecision::Kind::approve: return "approve";
    case ApprovalDecision::Kind::approve_edited: return "approve_edited";
    case ApprovalDecision::Kind::deny: return "deny";
    }
    return "deny";
}

std::vector<std::string> danger_flags(const ToolCall& call) {
    std::vector<std::string> flags;
    const auto tool = parse_tool_name(call.name);
    if (!tool) {
        return flags;
    }
    const auto payload = editable_payload(call);
    switch (*tool) {
    case ToolName::r2cmd: flag_r2_command(payload, flags); break;
    case ToolName::run_python:
    case ToolName::execute_js: flag_script(payload, flags); break;
    case ToolName::execute_binary:
        add_flag(flags, "host-exec");
        flag_script(payload, flags);
        break;
    }
    return flags;
}

ToolRunner::ToolRunner(DisasmSession* session, Settings settings)
    : session_(session), settings_(std::move(settings)) {}

const std::filesystem::path& ToolRunner::scratch_dir() {
    if (scratch_.empty()) {
        scratch_ = settings_.scratch_dir.empty() ? std::filesystem::temp_directory_path() / scratch_name()
                                                 : std::filesystem::path(settings_.scratch_dir);
        std::filesystem::create_directories(scratch_);
    }
    return scratch_;
}

std::optional<std::filesystem::path> ToolRunner::python() const {
    return first_found(settings_.python_interpreter, {"python", "python3"});
}

std::optional<std::filesystem::path> ToolRunner::javascript() const {
    return first_found(settings_.js_interpreter, {"qjs", "node"});
}

ToolOutcome ToolRunner::run(std::vector<std::string> argv) {
    const auto timeout = std::chrono::seconds(settings_.auto_tool_timeout);
    ProcessResult r;
    try {
        RunOptions opts;
        opts.cwd = scratch_dir();
        opts.timeout = timeout;
        opts.max_output = static_cast<std::size_t>(settings_.r2_output_cap);
        r = run_process(argv, opts);
    } catch (const std::exception& e) {
        return {e.what(), true};
    }
    ToolOutcome out{text::escape_binary(r.output), false};
    if (r.truncated) {
        out.text += "\n[output truncated]";
    }
    if (r.timed_out) {
        out.text += "\n[timed out after " + std::to_string(timeout.count()) + "s, output incomplete]";
        out.is_error = true;
    } else if (r.exit_code != 0) {
        out.text += "\n[exit status " + std::to_string(r.exit_code) + "]";
        out.is_error = true;
    }
    if (out.text.empty()) {
        out.text = "(no output)";
    }
    return out;
}

ToolOutcome ToolRunner::dispatch(const ToolCall& call) {
    const auto tool = parse_tool_name(call.name);
    if (!tool) {
        return {"unknown tool '" + call.name + "'", true};
    }
    switch (*tool) {
    case ToolName::r2cmd: {
        if (session_ == nullptr) {
            return {"no binary is open", true};
        }
        try {
            auto r = session_->exec(call.args.value("command", ""));
            return {r.output.empty() ? "(no output)" : r.output, false};
        } catch (const CommandTimeout& e) {
            return {e.partial().output + "\n[timed out, output incomplete]", true};
        } catch (const Error& e) {
            return {e.what(), true};
        }
    }
    case ToolName::run_python: {
        const auto interp = python();
        if (!interp) {
            return {"interpreter-missing: no Python interpreter found (set r2ai.interpreter.python)", true};
        }
        return run({interp->string(), "-c", call.args.value("script", "")});
    }
    case ToolName::execute_js: {
        const auto interp = javascript();
        if (!interp) {
            return {"interpreter-missing: no JavaScript engine found (set r2ai.interpreter.js)", true};
        }
        return run({interp->string(), "-e", call.args.value("script", "")});
    }
    case ToolName::execute_binary: {
        const std::string path = call.args.value("path", "");
        std::optional<std::filesystem::path> exe;
        if (path.find('/') == std::string::npos) {
            exe = find_executable(path);
        } else if (std::error_code ec; std::filesystem::exists(path, ec)) {
            exe = std::filesystem::absolute(path);
        }
        if (!exe) {
            return {"not-found: " + path, true};
        }
        std::vector<std::string> argv{exe->string()};
        for (const auto& a : call.args.value("args", nlohmann::json::array())) {
            argv.push_back(a.get<std::string>());
        }
        return run(std::move(argv));
    }
    }
    return {"unknown tool '" + call.name + "'", true};
}

AutoRun::AutoRun(Conversation& conv, Settings settings, const TemplateStore& templates)
    : conv_(conv), settings_(std::move(settings)) {
    system_prompt_ =
        settings_.auto_system_prompt.empty() ? templates.get("auto_system") : settings_.auto_system_prompt;
    state_.max_runs = settings_.auto_max_runs;
}

void AutoRun::build_initial_request(const std::string& query, DisasmSession* session) {
    if (!supports_tools(settings_.api)) {
        throw Error(ErrorCode::tools_unsupported,
                    "auto mode needs tool calling, which " + std::string(to_string(settings_.api)) + " lacks here");
    }
    if (text::trim(query).empty()) {
        throw Error(ErrorCode::invalid_message, "empty query");
    }
    if (session != nullptr && !split_commands(settings_.auto_init_commands).empty()) {
        auto snapshot = session->init_snapshot(settings_.auto_init_commands);
        conv_.append(ChatMessage::user("Output of " + settings_.auto_init_commands + ":\n" + snapshot,
                                       Origin::auto_loop));
        snapshot_index_ = conv_.size() - 1;
    }
    conv_.append(ChatMessage::user(query, Origin::human));
    state_ = AutoRunState{};
    state_.max_runs = settings_.auto_max_runs;
}

TruncationResult AutoRun::request_view() const {
    Conversation view(conv_.id());
    view.append(ChatMessage::system(system_prompt_));
    for (std::size_t i = 0; i < conv_.size(); ++i) {
        if (!settings_.auto_resend_init && state_.run_index > 0 && snapshot_index_ == i) {
            continue;
        }
        view.append(conv_.messages()[i]);
    }
    return view.truncate_to_budget(static_cast<std::size_t>(std::max<std::int64_t>(settings_.max_input_tokens, 0)),
                                   [](std::string_view s) { return estimate_tokens(s); });
}

void AutoRun::step(const ProviderResponse& response) {
    if (state_.phase != Phase::awaiting_model) {
        throw Error(ErrorCode::precondition, "the run is not waiting for the model");
    }
    ++state_.run_index;
    conv_.append(response.to_message(Origin::auto_loop));
    if (response.tool_calls.empty()) {
        state_.phase = Phase::done;
        state_.final_answer = response.text();
        return;
    }
    for (const auto& call : response.tool_calls) {
        const auto* tool = find_tool(call.name);
        if (tool == nullptr) {
            conv_.append(ChatMessage::tool_result(call.id, "unknown tool '" + call.name + "'", true));
            continue;
        }
        if (const auto problem = validate_args(tool->input_schema, call.args)) {
            conv_.append(ChatMessage::tool_result(call.id, "invalid arguments for " + call.name + ": " + *problem,
                                                  true));
            continue;
        }
        state_.pending.push_back(ApprovalRequest{call, editable_payload(call), danger_flags(call)});
    }
    if (state_.run_index >= state_.max_runs) {
        abort("max_runs reached (" + std::to_string(state_.max_runs) + ")");
        return;
    }
    state_.phase = state_.pending.empty() ? Phase::awaiting_model : Phase::awaiting_approval;
}

ToolOutcome AutoRun::apply_decision(const std::string& call_id, const ApprovalDecision& decision,
                                    ToolDispatcher& dispatcher) {
    const auto it = std::find_if(state_.pending.begin(), state_.pending.end(),
                                 [&](const ApprovalRequest& r) { return r.id() == call_id; });
    if (state_.phase != Phase::awaiting_approval || it == state_.pending.end()) {
        throw Error(ErrorCode::not_pending, "no pending approval with id '" + call_id + "'");
    }
    const ApprovalRequest request = *it;
    state_.pending.erase(it);
    state_.decisions.push_back(DecisionRecord{call_id, decision});

    ToolOutcome outcome;
    if (decision.kind == ApprovalDecision::Kind::deny) {
        outcome.text = "user denied execution: " + (decision.reason.empty() ? std::string("no reason given")
                                                                            : decision.reason);
    } else {
        ToolCall call = request.call;
        if (decision.kind == ApprovalDecision::Kind::approve_edited) {
            call.args = args_from_payload(call, decision.payload);
        }
        const auto* tool = find_tool(call.name);
        if (const auto problem = validate_args(tool->input_schema, call.args)) {
            outcome = {"invalid arguments for " + call.name + ": " + *problem, true};
        } else {
            state_.phase = Phase::executing_tool;
            outcome = dispatcher.dispatch(call);
            outcome.text = text::escape_binary(outcome.text);
        }
    }
    conv_.append(ChatMessage::tool_result(call_id, outcome.text, outcome.is_error));
    state_.phase = state_.pending.empty() ? Phase::awaiting_model : Phase::awaiting_approval;
    return outcome;
}

void AutoRun::abort(const std::string& reason) {
    for (const auto& req : state_.pending) {
        conv_.append(ChatMessage::tool_result(req.id(), "not executed: " + reason, true));
    }
    state_.pending.clear();
    state_.phase = Phase::aborted;
    state_.abort_reason = reason;
}

AutoResult run_auto(const std::string& query, const Settings& settings, AutoContext& ctx) {
    if (ctx.conversation == nullptr || ctx.gateway == nullptr || ctx.dispatcher == nullptr) {
        throw Error(ErrorCode::precondition, "auto mode needs a conversation, a gateway and a dispatcher");
    }
    static const TemplateStore default_templates;
    static const PriceTable no_prices;
    CostMeter local_meter;
    CostMeter& meter = ctx.meter != nullptr ? *ctx.meter : local_meter;
    const auto model = settings.model_ref();

    AutoRun run(*ctx.conversation, settings, ctx.templates != nullptr ? *ctx.templates : default_templates);
    run.build_initial_request(query, ctx.session);
    meter.begin_run(settings.auto_max_runs);

    const std::span<const ToolDefinition> tools(tool_catalog());
    while (run.state().phase == Phase::awaiting_model) {
        auto view = run.request_view();
        if (!view.report.empty()) {
            spdlog::info("context truncated from ~{} to ~{} tokens", view.report.tokens_before,
                         view.report.tokens_after);
        }
        const auto response = ctx.gateway->complete(view.conversation, model, settings, tools);
        if (auto warning = meter.record_usage(response.usage, model, ctx.prices ? *ctx.prices : no_prices)) {
            spdlog::warn("{}", *warning);
        }
        run.step(response);
        meter.tick();
        emit(ctx, AgentEvent::Kind::model_reply, response.text());
        emit(ctx, AgentEvent::Kind::status, render_status(meter.ledger(), model));

        while (run.state().phase == Phase::awaiting_approval) {
            const ApprovalRequest request = run.state().pending.front();
            emit(ctx, AgentEvent::Kind::approval_requested, request.payload, &request);
            const auto decision = ctx.approver ? ctx.approver(request) : ApprovalDecision::deny("no approver");
            emit(ctx, AgentEvent::Kind::approval_resolved, std::string(to_string(decision.kind)), &request,
                 &decision);
            const auto outcome = run.apply_decision(request.id(), decision, *ctx.dispatcher);
            if (decision.kind != ApprovalDecision::Kind::deny) {
                emit(ctx, AgentEvent::Kind::tool_executed, outcome.text, &request, &decision);
            }
        }
    }
    meter.tick();
    const auto& st = run.state();
    emit(ctx, AgentEvent::Kind::finished, st.phase == Phase::done ? st.final_answer.value_or("") : st.abort_reason);
    return AutoResult{st, meter.ledger()};
}

} // namespace r2ai
