// SPDX-License-Identifier: Apache-2.0

#include "r2ai/service.hpp"

#include <httplib.h>
#include <sys/socket.h>
#include <spdlog/spdlog.h>

namespace r2ai {

using nlohmann::json;

namespace {

constexpr auto kJson = "application/json";

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

void reply_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    reply(res, status, json{{"error", code}, {"message", message}});
}

int status_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::not_pending:
    case ErrorCode::not_found: return 404;
    case ErrorCode::seq_expired: return 410;
    case ErrorCode::session_dead: return 503;
    default: return 400;
    }
}

std::uint64_t from_param(const httplib::Request& req) {
    std::string from = req.has_param("from") ? req.get_param_value("from") : std::string{};
    if (from.empty() && req.has_header("Last-Event-ID")) {
        from = req.get_header_value("Last-Event-ID");
    }
    if (from.empty()) {
        return 0;
    }
    try {
        return std::stoull(from);
    } catch (const std::exception&) {
        throw Error(ErrorCode::parse_failure, "'from' must be a non-negative integer");
    }
}

json body_of(const httplib::Request& req) {
    auto j = json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw Error(ErrorCode::parse_failure, "request body must be a JSON object");
    }
    return j;
}

QueryRequest query_from_json(const json& j) {
    QueryRequest q;
    const auto mode = j.value("mode", "direct");
    q.text = j.value("text", "");
    q.path = j.value("path", "");
    if (mode == "auto") {
        q.mode = QueryMode::automatic;
    } else if (mode == "file") {
        q.mode = QueryMode::file;
    } else if (mode == "direct") {
        q.mode = QueryMode::direct;
        const auto kind = parse_direct_kind(j.value("kind", "free_query"));
        if (!kind || *kind == DirectKind::file_query) {
            throw Error(ErrorCode::parse_failure, "unknown direct kind '" + j.value("kind", "") + "'");
        }
        q.kind = *kind;
    } else {
        throw Error(ErrorCode::parse_failure, "mode must be direct, auto or file");
    }
    return q;
}

ApprovalDecision decision_from_json(const json& j) {
    const auto kind = j.value("decision", "");
    if (kind == "approve") {
        return ApprovalDecision::approve();
    }
    if (kind == "approve_edited") {
        if (!j.contains("payload") || !j["payload"].is_string()) {
            throw Error(ErrorCode::parse_failure, "approve_edited needs a string payload");
        }
        return ApprovalDecision::edited(j["payload"].get<std::string>());
    }
    if (kind == "deny") {
        return ApprovalDecision::deny(j.value("reason", ""));
    }
    throw Error(ErrorCode::parse_failure, "decision must be approve, approve_edited or deny");
}

std::string sse_frame(const SessionEvent& e) {
    return "id: " + std::to_string(e.seq) + "\nevent: " + std::string(to_string(e.kind)) +
           "\ndata: " + e.to_json().dump() + "\n\n";
}

template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        reply_error(res, status_for(e.code()), to_string(e.code()), e.what());
    } catch (const std::exception& e) {
        reply_error(res, 500, "unknown", e.what());
    }
}

} // namespace

Service::Service(Session& session, ServiceOptions options)
    : session_(session), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
    // SO_REUSEPORT (the library default) would let a second server share the port.
    server_->set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    install_routes();
}

Service::~Service() { stop(); }

void Service::install_routes() {
    auto& s = *server_;
    s.Get("/api/v1/state", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { reply(res, 200, session_.state()); });
    });
    s.Get("/api/v1/transcript", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { reply(res, 200, session_.transcript()); });
    });
    s.Post("/api/v1/query", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto query = query_from_json(body_of(req));
            const auto seq = session_.events().last_seq();
            session_.submit(std::move(query));
            reply(res, 202, json{{"accepted", true}, {"after_seq", seq}});
        });
    });
    s.Get("/api/v1/approvals", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            json out = json::array();
            for (const auto& r : session_.pending_approvals()) {
                out.push_back(approval_to_json(r));
            }
            reply(res, 200, json{{"approvals", out}});
        });
    });
    s.Post(R"(/api/v1/approvals/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            session_.deliver_decision(id, decision_from_json(body_of(req)));
            reply(res, 200, json{{"delivered", id}});
        });
    });
    s.Post("/api/v1/settings", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = body_of(req);
            for (const auto& [key, value] : body.items()) {
                session_.settings().set(key, value.is_string() ? value.get<std::string>() : value.dump());
            }
            json applied = json::object();
            for (const auto& [key, value] : body.items()) {
                applied[key] = session_.settings().get(key);
            }
            reply(res, 200, json{{"settings", applied}});
        });
    });
    s.Get("/api/v1/events", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto from = from_param(req);
            if (req.has_param("wait_ms")) {
                const auto wait = std::chrono::milliseconds(std::stoll(req.get_param_value("wait_ms")));
                session_.events().wait_for(from, std::min(wait, std::chrono::milliseconds(30'000)));
            }
            json out = json::array();
            for (const auto& e : session_.events().since(from)) {
                out.push_back(e.to_json());
            }
            reply(res, 200, json{{"events", out}, {"last_seq", session_.events().last_seq()}});
        });
    });
    s.Get("/api/v1/events/stream", [this](const httplib::Request& req, httplib::Response& res) {
        std::uint64_t from = 0;
        try {
            from = from_param(req);
            session_.events().since(from);
        } catch (const Error& e) {
            reply_error(res, status_for(e.code()), to_string(e.code()), e.what());
            return;
        }
        auto cursor = std::make_shared<std::uint64_t>(from);
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider("text/event-stream", [this, cursor](std::size_t, httplib::DataSink& sink) {
            if (stopping_) {
                sink.done();
                return true;
            }
            session_.events().wait_for(*cursor, std::chrono::milliseconds(250));
            std::vector<SessionEvent> batch;
            try {
                batch = session_.events().since(*cursor);
            } catch (const Error& e) {
                const auto frame = "event: error\ndata: " +
                                   json{{"error", to_string(e.code())}, {"message", e.what()}}.dump() + "\n\n";
                sink.write(frame.data(), frame.size());
                sink.done();
                return true;
            }
            if (batch.empty()) {
                static constexpr std::string_view keepalive = ": keepalive\n\n";
                return sink.write(keepalive.data(), keepalive.size());
            }
            for (const auto& e : batch) {
                const auto frame = sse_frame(e);
                if (!sink.write(frame.data(), frame.size())) {
                    return false;
                }
                *cursor = e.seq;
            }
            return true;
        });
    });
}

void Service::start() {
    if (options_.port == 0) {
        port_ = server_->bind_to_any_port(options_.host);
    } else {
        port_ = server_->bind_to_port(options_.host, options_.port) ? options_.port : -1;
    }
    if (port_ <= 0) {
        throw Error(ErrorCode::bind_failure,
                    "cannot bind " + options_.host + ":" + std::to_string(options_.port));
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    spdlog::info("serving on http://{}:{}/api/v1", options_.host, port_);
}

void Service::stop() {
    stopping_ = true;
    if (server_) {
        server_->stop();
    }
    if (thread_.joinable()) {
        thread_.join();
    }
}

void Service::wait() {
    if (thread_.joinable()) {
        thread_.join();
    }
}

} // namespace r2ai
