// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "r2ai/agent.hpp"
#include "r2ai/config.hpp"
#include "r2ai/conversation.hpp"
#include "r2ai/cost.hpp"
#include "r2ai/direct.hpp"
#include "r2ai/disasm.hpp"
#include "r2ai/provider.hpp"

#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

namespace r2ai {

enum class EventKind {
    message_appended,
    approval_requested,
    approval_resolved,
    tool_executed,
    status_updated,
    run_finished,
    error,
};

std::string_view to_string(EventKind k);

struct SessionEvent {
    std::uint64_t seq = 0;
    EventKind kind = EventKind::status_updated;
    nlohmann::json payload;

    nlohmann::json to_json() const;
};

/// Ordered, bounded event history. Seq starts at 1.
class EventLog {
public:
    explicit EventLog(std::size_t retention = 10'000);

    std::uint64_t append(EventKind kind, nlohmann::json payload);

    /// Events with seq > from_seq. Throws Error{seq_expired} when some of
    /// them have already been discarded.
    std::vector<SessionEvent> since(std::uint64_t from_seq) const;

    /// Blocks until an event past from_seq exists or the timeout elapses.
    bool wait_for(std::uint64_t from_seq, std::chrono::milliseconds timeout) const;

    std::uint64_t last_seq() const;
    std::uint64_t first_retained_seq() const;

    /// Wakes waiters without adding an event (used on shutdown).
    void notify_all() const;

private:
    std::size_t retention_;
    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    std::deque<SessionEvent> events_;
    std::uint64_t next_seq_ = 1;
};

nlohmann::json ledger_to_json(const CostLedger& ledger);
nlohmann::json approval_to_json(const ApprovalRequest& request);

enum class QueryMode { direct, automatic, file };

struct QueryRequest {
    QueryMode mode = QueryMode::direct;
    DirectKind kind = DirectKind::free_query;
    std::string text;
    std::string path;
};

/// Result of one submitted query. exit_code follows the CLI convention:
/// 0 ok, 2 provider error, 3 aborted by the run limit, 1 anything else.
struct QueryOutcome {
    bool ok = false;
    std::string answer;
    std::string error;
    std::string remediation;
    std::optional<Phase> phase;
    int exit_code = 0;
};

struct SessionOptions {
    std::shared_ptr<SettingsRegistry> settings;
    std::shared_ptr<Transport> transport;
    EnvLookup env = process_env();
    Gateway::Sleeper sleeper;
    std::unique_ptr<DisasmSession> disasm;
    /// Null means a ToolRunner over the disassembler session.
    std::shared_ptr<ToolDispatcher> dispatcher;
    PriceTable prices;
    TemplateStore templates;
    /// Null means decisions arrive through deliver_decision().
    Approver approver;
    /// Called on the worker thread for every event, after it is logged.
    std::function<void(const SessionEvent&)> on_event;
};

/// One analyst session: conversation, ledger and disassembler, mutated only
/// by a single worker thread that drains a command queue.
class Session {
public:
    explicit Session(SessionOptions options);
    ~Session();

    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    std::future<QueryOutcome> submit(QueryRequest request);

    /// Runs `fn` on the worker thread, after everything queued before it.
    std::future<void> post(std::function<void()> fn);

    /// Throws Error{not_pending} if no such approval is waiting.
    void deliver_decision(const std::string& call_id, ApprovalDecision decision);
    std::vector<ApprovalRequest> pending_approvals() const;

    /// Both wait for the worker, so they take effect after queued queries.
    void reset_conversation();
    void drop_last(std::size_t n);
    void load_conversation(Conversation conv);

    nlohmann::json state() const;
    nlohmann::json transcript() const;
    std::string render_log(LogFormat format) const;
    std::string status_line() const;
    CostLedger ledger() const;

    SettingsRegistry& settings() { return *settings_; }
    EventLog& events() { return events_; }
    const EventLog& events() const { return events_; }

private:
    void worker_loop();
    QueryOutcome execute(const QueryRequest& request);
    ApprovalDecision await_decision(const ApprovalRequest& request);
    void emit(EventKind kind, nlohmann::json payload);
    void sync_messages();
    void set_phase(std::string phase);

    std::shared_ptr<SettingsRegistry> settings_;
    std::shared_ptr<Transport> transport_;
    EnvLookup env_;
    Gateway::Sleeper sleeper_;
    std::unique_ptr<DisasmSession> disasm_;
    std::shared_ptr<ToolDispatcher> dispatcher_;
    PriceTable prices_;
    TemplateStore templates_;
    Approver approver_;
    std::function<void(const SessionEvent&)> on_event_;

    EventLog events_;

    // Worker-owned.
    Conversation conversation_;
    CostMeter meter_;
    std::size_t announced_messages_ = 0;

    // Copies published for readers on other threads.
    mutable std::mutex state_mutex_;
    Conversation published_;
    CostLedger published_ledger_;
    std::string phase_ = "idle";
    std::string last_run_phase_;
    bool busy_ = false;

    mutable std::mutex approval_mutex_;
    std::condition_variable approval_cv_;
    std::map<std::string, ApprovalRequest> pending_;
    std::map<std::string, ApprovalDecision> decided_;

    std::mutex queue_mutex_;
    std::condition_variable queue_cv_;
    std::deque<std::function<void()>> queue_;
    bool stopping_ = false;
    std::thread worker_;
};

} // namespace r2ai
