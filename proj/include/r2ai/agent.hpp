// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "r2ai/config.hpp"
#include "r2ai/conversation.hpp"
#include "r2ai/cost.hpp"
#include "r2ai/direct.hpp"
#include "r2ai/disasm.hpp"
#include "r2ai/provider.hpp"
#include "r2ai/tools.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace r2ai {

enum class Phase { awaiting_model, awaiting_approval, executing_tool, done, aborted };

std::string_view to_string(Phase p);

/// Danger tags attached to a payload: "debugger", "shell" and "destructive".
std::vector<std::string> danger_flags(const ToolCall& call);

struct ApprovalRequest {
    ToolCall call;
    /// Full command or script text under review.
    std::string payload;
    std::vector<std::string> danger;

    const std::string& id() const { return call.id; }
};

struct ApprovalDecision {
    enum class Kind { approve, approve_edited, deny };
    Kind kind = Kind::deny;
    std::string payload;
    std::string reason;

    static ApprovalDecision approve() { return {Kind::approve, {}, {}}; }
    static ApprovalDecision edited(std::string payload) { return {Kind::approve_edited, std::move(payload), {}}; }
    static ApprovalDecision deny(std::string reason = {}) { return {Kind::deny, {}, std::move(reason)}; }
};

std::string_view to_string(ApprovalDecision::Kind k);

struct DecisionRecord {
    std::string call_id;
    ApprovalDecision decision;
};

struct AutoRunState {
    std::int64_t run_index = 0;
    std::int64_t max_runs = 0;
    Phase phase = Phase::awaiting_model;
    std::optional<std::string> final_answer;
    std::vector<ApprovalRequest> pending;
    std::vector<DecisionRecord> decisions;
    std::string abort_reason;
};

struct ToolOutcome {
    std::string text;
    bool is_error = false;
};

/// Executes approved tool calls. Never throws for tool failures; they are
/// reported as text.
class ToolDispatcher {
public:
    virtual ~ToolDispatcher() = default;
    virtual ToolOutcome dispatch(const ToolCall& call) = 0;
};

/// r2cmd through the disassembler session, scripts and binaries as host
/// processes in a scratch directory. There is no sandbox: the approval gate
/// is the only protection.
class ToolRunner final : public ToolDispatcher {
public:
    ToolRunner(DisasmSession* session, Settings settings);

    ToolOutcome dispatch(const ToolCall& call) override;

    const std::filesystem::path& scratch_dir();

    /// Explicit setting, else python, else python3.
    std::optional<std::filesystem::path> python() const;
    /// Explicit setting, else qjs, else node.
    std::optional<std::filesystem::path> javascript() const;

private:
    ToolOutcome run(std::vector<std::string> argv);

    DisasmSession* session_;
    Settings settings_;
    std::filesystem::path scratch_;
};

/// Sequential auto-mode state machine over a conversation. Single threaded;
/// callers serialize access.
class AutoRun {
public:
    AutoRun(Conversation& conv, Settings settings, const TemplateStore& templates);

    /// Appends the init snapshot and the query. Throws Error{tools_unsupported}.
    void build_initial_request(const std::string& query, DisasmSession* session);

    /// What is sent next: system prompt, conversation, truncated to
    /// max_input_tokens.
    TruncationResult request_view() const;

    /// Consumes one model reply. Either finishes, aborts at max_runs, or
    /// moves to awaiting_approval with the calls that need a decision.
    /// Calls with invalid arguments are answered with an error result and
    /// never reach the analyst.
    void step(const ProviderResponse& response);

    /// Records the decision, dispatches unless denied, and appends the
    /// result. Throws Error{not_pending} for an unknown id.
    ToolOutcome apply_decision(const std::string& call_id, const ApprovalDecision& decision, ToolDispatcher& dispatcher);

    /// Ends the run, answering every open call with a synthetic result.
    void abort(const std::string& reason);

    const AutoRunState& state() const { return state_; }
    const std::string& system_prompt() const { return system_prompt_; }

private:
    Conversation& conv_;
    Settings settings_;
    std::string system_prompt_;
    std::optional<std::size_t> snapshot_index_;
    AutoRunState state_;
};

struct AgentEvent {
    enum class Kind { model_reply, approval_requested, approval_resolved, tool_executed, status, finished };
    Kind kind;
    std::string text;
    const ApprovalRequest* request = nullptr;
    const ApprovalDecision* decision = nullptr;
};

using Approver = std::function<ApprovalDecision(const ApprovalRequest&)>;
using AgentObserver = std::function<void(const AgentEvent&)>;

struct AutoContext {
    DisasmSession* session = nullptr;
    Conversation* conversation = nullptr;
    Gateway* gateway = nullptr;
    ToolDispatcher* dispatcher = nullptr;
    CostMeter* meter = nullptr;
    const PriceTable* prices = nullptr;
    const TemplateStore* templates = nullptr;
    Approver approver;
    AgentObserver observer;
};

struct AutoResult {
    AutoRunState state;
    CostLedger ledger;
};

/// Drives build_initial_request, then send, step, approvals and dispatch
/// until done or aborted. Provider errors propagate.
AutoResult run_auto(const std::string& query, const Settings& settings, AutoContext& ctx);

} // namespace r2ai
