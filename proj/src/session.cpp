// SPDX-License-Identifier: Apache-2.0

#include "r2ai/session.hpp"

#include <spdlog/spdlog.h>

namespace r2ai {

using nlohmann::json;

std::string_view to_string(EventKind k) {
    switch (k) {
    case EventKind::message_appended: return "message_appended";
    case EventKind::approval_requested: return "approval_requested";
    case EventKind::approval_resolved: return "approval_resolved";
    case EventKind::tool_executed: return "tool_executed";
    case EventKind::status_updated: return "status_updated";
    case EventKind::run_finished: return "run_finished";
    case EventKind::error: return "error";
    }
    return "error";
}

json SessionEvent::to_json() const {
    return json{{"seq", seq}, {"kind", to_string(kind)}, {"payload", payload}};
}

EventLog::EventLog(std::size_t retention) : retention_(retention == 0 ? 1 : retention) {}

std::uint64_t EventLog::append(EventKind kind, json payload) {
    std::uint64_t seq = 0;
    {
        std::lock_guard lock(mutex_);
        seq = next_seq_++;
        events_.push_back(SessionEvent{seq, kind, std::move(payload)});
        while (events_.size() > retention_) {
            events_.pop_front();
        }
    }
    cv_.notify_all();
    return seq;
}

std::vector<SessionEvent> EventLog::since(std::uint64_t from_seq) const {
    std::lock_guard lock(mutex_);
    if (!events_.empty() && from_seq + 1 < events_.front().seq) {
        throw Error(ErrorCode::seq_expired, "events after " + std::to_string(from_seq) +
                                                " are no longer retained; oldest is " +
                                                std::to_string(events_.front().seq));
    }
    std::vector<SessionEvent> out;
    for (const auto& e : events_) {
        if (e.seq > from_seq) {
            out.push_back(e);
        }
    }
    return out;
}

bool EventLog::wait_for(std::uint64_t from_seq, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    return cv_.wait_for(lock, timeout, [&] { return next_seq_ - 1 > from_seq; });
}

std::uint64_t EventLog::last_seq() const {
    std::lock_guard lock(mutex_);
    return next_seq_ - 1;
}

std::uint64_t EventLog::first_retained_seq() const {
    std::lock_guard lock(mutex_);
    return events_.empty() ? next_seq_ : events_.front().seq;
}

void EventLog::notify_all() const { cv_.notify_all(); }

json ledger_to_json(const CostLedger& l) {
    return json{{"total_cost", l.total_cost.to_string()},
                {"run_cost", l.run_cost.to_string()},
                {"run_count", l.run_count},
                {"max_runs", l.max_runs},
                {"run_elapsed_s", l.run_elapsed.count()},
                {"total_elapsed_s", l.total_elapsed.count()},
                {"input_tokens", l.input_tokens},
                {"output_tokens", l.output_tokens},
                {"estimated", l.estimated}};
}

json approval_to_json(const ApprovalRequest& r) {
    return json{{"id", r.id()}, {"tool", r.call.name}, {"args", r.call.args}, {"payload", r.payload},
                {"danger", r.danger}};
}

Session::Session(SessionOptions options)
    : settings_(options.settings ? std::move(options.settings) : std::make_shared<SettingsRegistry>()),
      transport_(options.transport ? std::move(options.transport) : make_http_transport()),
      env_(std::move(options.env)),
      sleeper_(std::move(options.sleeper)),
      disasm_(std::move(options.disasm)),
      dispatcher_(std::move(options.dispatcher)),
      prices_(std::move(options.prices)),
      templates_(std::move(options.templates)),
      approver_(std::move(options.approver)),
      on_event_(std::move(options.on_event)) {
    worker_ = std::thread([this] { worker_loop(); });
}

Session::~Session() {
    {
        std::lock_guard lock(queue_mutex_);
        stopping_ = true;
    }
    queue_cv_.notify_all();
    {
        std::lock_guard lock(approval_mutex_);
    }
    approval_cv_.notify_all();
    if (worker_.joinable()) {
        worker_.join();
    }
    events_.notify_all();
}

void Session::worker_loop() {
    for (;;) {
        std::function<void()> task;
        {
            std::unique_lock lock(queue_mutex_);
            queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (queue_.empty()) {
                return;
            }
            task = std::move(queue_.front());
            queue_.pop_front();
        }
        task();
    }
}

std::future<void> Session::post(std::function<void()> fn) {
    auto task = std::make_shared<std::packaged_task<void()>>(std::move(fn));
    auto fut = task->get_future();
    {
        std::lock_guard lock(queue_mutex_);
        if (stopping_) {
            throw Error(ErrorCode::session_dead, "session is shutting down");
        }
        queue_.emplace_back([task] { (*task)(); });
    }
    queue_cv_.notify_one();
    return fut;
}

std::future<QueryOutcome> Session::submit(QueryRequest request) {
    auto task = std::make_shared<std::packaged_task<QueryOutcome()>>(
        [this, request = std::move(request)] { return execute(request); });
    auto fut = task->get_future();
    {
        std::lock_guard lock(queue_mutex_);
        if (stopping_) {
            throw Error(ErrorCode::session_dead, "session is shutting down");
        }
        queue_.emplace_back([task] { (*task)(); });
    }
    queue_cv_.notify_one();
    return fut;
}

void Session::emit(EventKind kind, json payload) {
    const auto seq = events_.append(kind, payload);
    if (on_event_) {
        on_event_(SessionEvent{seq, kind, std::move(payload)});
    }
}

void Session::set_phase(std::string phase) {
    std::lock_guard lock(state_mutex_);
    phase_ = std::move(phase);
}

void Session::sync_messages() {
    if (conversation_.size() < announced_messages_) {
        announced_messages_ = conversation_.size();
    }
    {
        std::lock_guard lock(state_mutex_);
        published_ = conversation_;
        published_ledger_ = meter_.ledger();
    }
    while (announced_messages_ < conversation_.size()) {
        const auto i = announced_messages_++;
        emit(EventKind::message_appended, json{{"index", i}, {"message", to_json(conversation_.messages()[i])}});
    }
}

ApprovalDecision Session::await_decision(const ApprovalRequest& request) {
    std::unique_lock lock(approval_mutex_);
    approval_cv_.wait(lock, [&] {
        std::lock_guard qlock(queue_mutex_);
        return stopping_ || decided_.count(request.id()) > 0;
    });
    const auto it = decided_.find(request.id());
    if (it == decided_.end()) {
        pending_.erase(request.id());
        throw Error(ErrorCode::session_dead, "session closed while waiting for approval");
    }
    auto decision = std::move(it->second);
    decided_.erase(it);
    return decision;
}

void Session::deliver_decision(const std::string& call_id, ApprovalDecision decision) {
    {
        std::lock_guard lock(approval_mutex_);
        if (pending_.erase(call_id) == 0) {
            throw Error(ErrorCode::not_pending, "no pending approval with id '" + call_id + "'");
        }
        decided_[call_id] = std::move(decision);
    }
    approval_cv_.notify_all();
}

std::vector<ApprovalRequest> Session::pending_approvals() const {
    std::lock_guard lock(approval_mutex_);
    std::vector<ApprovalRequest> out;
    for (const auto& [id, req] : pending_) {
        out.push_back(req);
    }
    return out;
}

void Session::reset_conversation() {
    post([this] {
        conversation_.reset();
        sync_messages();
        emit(EventKind::status_updated, json{{"messages", 0}, {"reset", true}});
    }).get();
}

void Session::drop_last(std::size_t n) {
    post([this, n] {
        conversation_.drop_last(n);
        sync_messages();
        emit(EventKind::status_updated, json{{"messages", conversation_.size()}});
    }).get();
}

void Session::load_conversation(Conversation conv) {
    post([this, conv = std::move(conv)]() mutable {
        conversation_ = std::move(conv);
        announced_messages_ = 0;
        sync_messages();
    }).get();
}

CostLedger Session::ledger() const {
    std::lock_guard lock(state_mutex_);
    return published_ledger_;
}

std::string Session::status_line() const { return render_status(ledger(), settings_->model()); }

json Session::state() const {
    std::lock_guard lock(state_mutex_);
    json j{{"version", 1},
           {"phase", phase_},
           {"busy", busy_},
           {"model", settings_->model().display()},
           {"ledger", ledger_to_json(published_ledger_)},
           {"status_line", render_status(published_ledger_, settings_->model())},
           {"messages", published_.size()},
           {"pending_approvals", pending_approvals().size()},
           {"last_seq", events_.last_seq()}};
    j["last_run_phase"] = last_run_phase_.empty() ? json(nullptr) : json(last_run_phase_);
    j["binary"] = disasm_ ? json(disasm_->binary_path().string()) : json(nullptr);
    return j;
}

json Session::transcript() const {
    std::lock_guard lock(state_mutex_);
    return json::parse(published_.render_log(LogFormat::structured));
}

std::string Session::render_log(LogFormat format) const {
    std::lock_guard lock(state_mutex_);
    return published_.render_log(format);
}

QueryOutcome Session::execute(const QueryRequest& request) {
    const auto settings = settings_->snapshot();
    Gateway gateway(transport_, env_, sleeper_);
    {
        std::lock_guard lock(state_mutex_);
        busy_ = true;
        phase_ = "awaiting_model";
    }
    QueryOutcome outcome;
    try {
        switch (request.mode) {
        case QueryMode::direct:
        case QueryMode::file: {
            DirectContext ctx{disasm_.get(), &conversation_, &gateway, &meter_, &prices_, &templates_};
            meter_.begin_run(1);
            auto r = request.mode == QueryMode::file ? file_query(request.path, request.text, settings, ctx)
                                                     : run_direct(request.kind, request.text, settings, ctx);
            meter_.tick();
            sync_messages();
            emit(EventKind::status_updated, json{{"status_line", render_status(meter_.ledger(), settings.model_ref())},
                                                 {"ledger", ledger_to_json(meter_.ledger())}});
            outcome.ok = true;
            outcome.answer = std::move(r.answer);
            break;
        }
        case QueryMode::automatic: {
            std::shared_ptr<ToolDispatcher> dispatcher = dispatcher_;
            if (!dispatcher) {
                dispatcher = std::make_shared<ToolRunner>(disasm_.get(), settings);
            }
            AutoContext ctx;
            ctx.session = disasm_.get();
            ctx.conversation = &conversation_;
            ctx.gateway = &gateway;
            ctx.dispatcher = dispatcher.get();
            ctx.meter = &meter_;
            ctx.prices = &prices_;
            ctx.templates = &templates_;
            ctx.approver = [this](const ApprovalRequest& req) {
                set_phase("awaiting_approval");
                auto decision = approver_ ? approver_(req) : await_decision(req);
                set_phase("executing_tool");
                return decision;
            };
            ctx.observer = [this](const AgentEvent& ev) {
                switch (ev.kind) {
                case AgentEvent::Kind::model_reply: sync_messages(); break;
                case AgentEvent::Kind::status:
                    emit(EventKind::status_updated,
                         json{{"status_line", ev.text}, {"ledger", ledger_to_json(meter_.ledger())}});
                    break;
                case AgentEvent::Kind::approval_requested:
                    sync_messages();
                    set_phase("awaiting_approval");
                    if (!approver_) {
                        std::lock_guard lock(approval_mutex_);
                        pending_[ev.request->id()] = *ev.request;
                    }
                    emit(EventKind::approval_requested, approval_to_json(*ev.request));
                    break;
                case AgentEvent::Kind::approval_resolved: {
                    json p{{"id", ev.request->id()}, {"decision", ev.text}};
                    if (ev.decision->kind == ApprovalDecision::Kind::approve_edited) {
                        p["payload"] = ev.decision->payload;
                    }
                    if (ev.decision->kind == ApprovalDecision::Kind::deny) {
                        p["reason"] = ev.decision->reason;
                    }
                    emit(EventKind::approval_resolved, std::move(p));
                    break;
                }
                case AgentEvent::Kind::tool_executed:
                    sync_messages();
                    set_phase("awaiting_model");
                    emit(EventKind::tool_executed,
                         json{{"id", ev.request->id()}, {"tool", ev.request->call.name}, {"output", ev.text}});
                    break;
                case AgentEvent::Kind::finished: sync_messages(); break;
                }
            };
            const auto result = run_auto(request.text, settings, ctx);
            outcome.phase = result.state.phase;
            if (result.state.phase == Phase::done) {
                outcome.ok = true;
                outcome.answer = result.state.final_answer.value_or("");
            } else {
                outcome.error = result.state.abort_reason;
                outcome.exit_code = 3;
            }
            break;
        }
        }
    } catch (const ProviderError& e) {
        outcome.ok = false;
        outcome.error = e.what();
        outcome.remediation = e.remediation();
        outcome.exit_code = 2;
        sync_messages();
        emit(EventKind::error, json{{"code", to_string(e.code())},
                                    {"class", to_string(e.kind())},
                                    {"message", e.what()},
                                    {"remediation", e.remediation()}});
    } catch (const Error& e) {
        outcome.ok = false;
        outcome.error = e.what();
        outcome.exit_code = 1;
        sync_messages();
        emit(EventKind::error, json{{"code", to_string(e.code())}, {"message", e.what()}});
    } catch (const std::exception& e) {
        outcome.ok = false;
        outcome.error = e.what();
        outcome.exit_code = 1;
        sync_messages();
        emit(EventKind::error, json{{"code", "unknown"}, {"message", e.what()}});
    }
    const std::string final_phase =
        outcome.phase ? std::string(to_string(*outcome.phase)) : (outcome.ok ? "done" : "failed");
    {
        std::lock_guard lock(state_mutex_);
        busy_ = false;
        phase_ = "idle";
        last_run_phase_ = final_phase;
    }
    emit(EventKind::run_finished,
         json{{"phase", final_phase}, {"answer", outcome.answer}, {"exit_code", outcome.exit_code}});
    return outcome;
}

} // namespace r2ai
