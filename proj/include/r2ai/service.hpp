// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "r2ai/session.hpp"

#include <atomic>
#include <memory>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace r2ai {

struct ServiceOptions {
    std::string host = "127.0.0.1";
    /// 0 picks a free port.
    int port = 0;
};

/// Local HTTP API over one Session. All routes live under /api/v1:
///
///   GET  /state                 phase, busy flag, ledger, status line
///   GET  /transcript            structured conversation log
///   POST /query                 {"mode": "direct"|"auto"|"file", "kind", "text", "path"}
///   GET  /approvals             pending approvals with full payloads
///   POST /approvals/{id}        {"decision": "approve"|"approve_edited"|"deny", "payload", "reason"}
///   POST /settings              {"key": "value", ...}
///   GET  /events?from=N         events with seq > N (410 once expired)
///   GET  /events/stream?from=N  the same as server-sent events, then the live tail
///
/// Errors are {"error": "<code>", "message": "..."}.
class Service {
public:
    Service(Session& session, ServiceOptions options = {});
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds and serves on a background thread. Throws Error{bind_failure}.
    void start();
    void stop();
    /// Blocks until stop() is called from elsewhere.
    void wait();

    int port() const { return port_; }
    const std::string& host() const { return options_.host; }

private:
    void install_routes();

    Session& session_;
    ServiceOptions options_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    std::atomic<bool> stopping_{false};
    int port_ = 0;
};

} // namespace r2ai
