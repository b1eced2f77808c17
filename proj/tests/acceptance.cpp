// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when any
// criterion fails.

#include "r2ai/agent.hpp"
#include "r2ai/conversation.hpp"
#include "r2ai/cost.hpp"
#include "r2ai/direct.hpp"
#include "r2ai/provider.hpp"
#include "r2ai/text.hpp"
#include "r2ai/tools.hpp"

#include "generators.hpp"
#include "support.hpp"

#include <chrono>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace r2ai;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Pinned tolerances.
constexpr auto kAgentLoopLimit = std::chrono::seconds(5);
constexpr int kApprovalRuns = 1000;
constexpr int kTruncationCases = 10'000;
constexpr int kFuzzCases = 1000;
constexpr std::int64_t kMaxRuns = 15;

struct Verdict {
    bool pass = false;
    std::string measure;
};

const ModelRef kClaude{Provider::anthropic, "claude-3-7-sonnet-20250219"};

class RecordingDispatcher : public ToolDispatcher {
public:
    ToolOutcome dispatch(const ToolCall& call) override {
        calls.push_back(call.id);
        return {"ok", false};
    }
    std::vector<std::string> calls;
};

struct Rig {
    std::shared_ptr<test::ScriptedTransport> transport;
    Gateway gateway;
    DisasmSession session;
    Conversation conversation;
    CostMeter meter;
    PriceTable prices = PriceTable::load(bundled_pricing_path());
    TemplateStore templates;
    Settings settings;

    Rig(std::shared_ptr<test::ScriptedTransport> t, MockFixture fixture)
        : transport(std::move(t)),
          gateway(transport, test::fake_env(), [](std::chrono::milliseconds) {}),
          session(DisasmSession::open_mock(std::move(fixture))) {}

    explicit Rig(std::shared_ptr<test::ScriptedTransport> t)
        : Rig(std::move(t), MockFixture::load(test::fixture("mock_r2.json"))) {}

    AutoContext auto_context(ToolDispatcher& d, Approver a) {
        return AutoContext{&session, &conversation, &gateway, &d, &meter, &prices, &templates, std::move(a), {}};
    }
    DirectContext direct_context() {
        return DirectContext{&session, &conversation, &gateway, &meter, &prices, &templates};
    }
};

RawResponse tool_call(const std::string& id, const std::string& name, json input) {
    return test::anthropic_tools({{id, name, std::move(input)}});
}

Verdict status_line_golden() {
    std::chrono::steady_clock::time_point now{};
    CostMeter meter([&] { return now; });
    PriceTable prices = PriceTable::load(bundled_pricing_path());
    meter.begin_run(100);
    now += std::chrono::milliseconds(7000);
    meter.record_usage({4118, 200, false}, kClaude, prices);
    const auto line = render_status(meter.ledger(), kClaude);
    const std::string expected =
        "anthropic/claude-3-7-sonnet-20250219 | total: $0.0153540000 | run: $0.0153540000 | 1 / 100 | 7s / 7s";
    return {line == expected, "byte-exact: \"" + line + "\""};
}

Verdict direct_request_golden() {
    Settings s;
    Conversation c;
    c.append(ChatMessage::user("Explain prctl in 1 line"));
    const auto req = encode_request(c, kClaude, s, std::nullopt, Secret("sk-ant-test-secret")).redacted();
    const auto expected = ordered_json::parse(test::slurp(test::fixture("direct_request_body.json")));
    const bool body_ok = req.body.dump() == expected.dump();
    const std::vector<std::string> order{"anthropic-version", "x-api-key", "accept", "content-type"};
    bool headers_ok = req.headers.size() == order.size();
    for (std::size_t i = 0; headers_ok && i < order.size(); ++i) {
        headers_ok = req.headers[i].first == order[i] && req.headers[i].second == "*****";
    }
    return {body_ok && headers_ok, std::string("body ") + (body_ok ? "equal" : "differs") + ", headers " +
                                       (headers_ok ? "ordered+redacted" : "wrong")};
}

Verdict tool_schema() {
    const auto expected = ordered_json::parse(test::slurp(test::fixture("r2cmd_tool.json")));
    const auto* tool = find_tool("r2cmd");
    const bool ok = tool && tool->to_anthropic() == expected;
    return {ok, ok ? "r2cmd definition equals reference" : "mismatch"};
}

Verdict context_length_classification() {
    const auto err =
        classify_error({400, test::slurp(test::fixture("context_length_error.json")), {}}, Provider::openai);
    const bool ok = err.kind() == ErrorClass::context_length && err.limit_tokens == 8192 &&
                    err.requested_tokens == 11219 && !err.retriable();
    std::ostringstream m;
    m << "class=" << to_string(err.kind()) << " limit=" << err.limit_tokens.value_or(-1)
      << " requested=" << err.requested_tokens.value_or(-1) << " retriable=" << err.retriable();
    return {ok, m.str()};
}

Verdict agent_loop() {
    const auto start = std::chrono::steady_clock::now();
    Rig two(std::make_shared<test::ScriptedTransport>(std::vector<RawResponse>{
        tool_call("t1", "r2cmd", {{"command", "iI"}}), tool_call("t2", "r2cmd", {{"command", "afl"}}),
        test::anthropic_text("final")}));
    ToolRunner runner(&two.session, two.settings);
    auto ctx = two.auto_context(runner, [](const ApprovalRequest&) { return ApprovalDecision::approve(); });
    const auto a = run_auto("q", two.settings, ctx);

    Rig loop(std::make_shared<test::ScriptedTransport>([](const WireRequest&, std::size_t i) {
        return tool_call("c" + std::to_string(i), "r2cmd", {{"command", "afl"}});
    }));
    RecordingDispatcher d;
    auto ctx2 = loop.auto_context(d, [](const ApprovalRequest&) { return ApprovalDecision::approve(); });
    const auto b = run_auto("q", loop.settings, ctx2);
    const auto elapsed = std::chrono::steady_clock::now() - start;
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();

    const bool ok = a.state.phase == Phase::done && a.ledger.run_count == 3 && b.state.phase == Phase::aborted &&
                    b.ledger.run_count == kMaxRuns && loop.transport->count() == kMaxRuns && elapsed < kAgentLoopLimit;
    std::ostringstream m;
    m << "run_count=" << a.ledger.run_count << ", always-tool halted at " << b.ledger.run_count << " phase="
      << to_string(b.state.phase) << ", " << ms << "ms < " << kAgentLoopLimit.count() << "s";
    return {ok, m.str()};
}

Verdict approval_safety() {
    std::mt19937 rng(4242);
    int violations = 0;
    std::size_t executed = 0;
    std::size_t denied_total = 0;
    for (int run = 0; run < kApprovalRuns; ++run) {
        std::mt19937 script_rng(rng());
        int next = 0;
        auto transport = std::make_shared<test::ScriptedTransport>([&](const WireRequest&, std::size_t) {
            const auto k = script_rng() % 4;
            if (k == 0) {
                return test::anthropic_text("done");
            }
            std::vector<test::ScriptedCall> calls;
            for (unsigned i = 0; i < k; ++i) {
                calls.push_back({"c" + std::to_string(next++), "r2cmd", {{"command", "wx 90"}}});
            }
            return test::anthropic_tools(calls);
        });
        Rig rig(transport);
        rig.settings.auto_max_runs = 1 + static_cast<std::int64_t>(rng() % kMaxRuns);
        RecordingDispatcher d;
        std::set<std::string> approved;
        std::set<std::string> denied;
        auto ctx = rig.auto_context(d, [&](const ApprovalRequest& r) {
            // Nothing may run before the decision is made.
            if (std::find(d.calls.begin(), d.calls.end(), r.id()) != d.calls.end()) {
                ++violations;
            }
            if (rng() % 2) {
                approved.insert(r.id());
                return ApprovalDecision::approve();
            }
            denied.insert(r.id());
            return ApprovalDecision::deny("no");
        });
        run_auto("q", rig.settings, ctx);
        for (const auto& id : d.calls) {
            if (!approved.count(id) || denied.count(id)) {
                ++violations;
            }
        }
        executed += d.calls.size();
        denied_total += denied.size();
    }
    return {violations == 0, std::to_string(kApprovalRuns) + " runs, " + std::to_string(executed) + " executed, " +
                                 std::to_string(denied_total) + " denied, " + std::to_string(violations) +
                                 " violations"};
}

std::string last_user_text(const Conversation& c) {
    for (auto it = c.messages().rbegin(); it != c.messages().rend(); ++it) {
        if (it->role == Role::user) {
            return it->text();
        }
    }
    return {};
}

Verdict truncation_property() {
    std::mt19937 rng(8675309);
    const TokenEstimator est = [](std::string_view s) { return estimate_tokens(s); };
    int failures = 0;
    for (int i = 0; i < kTruncationCases; ++i) {
        const auto conv = test::random_conversation(rng);
        const bool has_system = conv.messages().front().role == Role::system;
        std::size_t floor = has_system ? estimate_message(conv.messages().front(), est) : 0;
        for (auto it = conv.messages().rbegin(); it != conv.messages().rend(); ++it) {
            if (it->role == Role::user) {
                floor += estimate_message(*it, est);
                break;
            }
        }
        const auto total = conv.estimate(est);
        const auto budget = floor + (total > floor ? rng() % (total - floor + 1) : 0);
        try {
            const auto r = conv.truncate_to_budget(budget, est);
            const bool ok = r.conversation.estimate(est) <= budget &&
                            (!has_system || r.conversation.messages().front().text() == conv.messages().front().text()) &&
                            last_user_text(r.conversation) == last_user_text(conv);
            failures += ok ? 0 : 1;
        } catch (const std::exception&) {
            ++failures;
        }
    }
    return {failures == 0, std::to_string(kTruncationCases) + " cases, " + std::to_string(failures) + " failures"};
}

Verdict context_piling() {
    Rig rig(std::make_shared<test::ScriptedTransport>());
    auto ctx = rig.direct_context();
    for (const auto* q : {"q1", "q2", "q3"}) {
        run_direct(DirectKind::free_query, q, rig.settings, ctx);
    }
    std::vector<std::string> users;
    const auto third = rig.transport->requests().back().body["messages"];
    for (const auto& m : third) {
        if (m["role"] == "user") {
            users.push_back(m["content"][0]["text"]);
        }
    }
    rig.conversation.reset();
    run_direct(DirectKind::free_query, "q4", rig.settings, ctx);
    const auto after = rig.transport->requests().back().body["messages"].size();
    const bool ok = users == std::vector<std::string>{"q1", "q2", "q3"} && after == 1;
    return {ok, "3rd request users=" + std::to_string(users.size()) + " in order, after reset=" + std::to_string(after)};
}

Verdict binary_guard() {
    std::mt19937 rng(99);
    std::uniform_int_distribution<int> byte(0, 255);
    const auto random_bytes = [&](std::size_t n) {
        std::string s(n, '\0');
        for (auto& c : s) {
            c = static_cast<char>(byte(rng));
        }
        return s;
    };
    int invalid = 0;
    std::size_t payloads = 0;
    for (int i = 0; i < kFuzzCases; ++i) {
        auto fixture = MockFixture::load(test::fixture("mock_r2.json"));
        fixture.outputs["pdc"] = random_bytes(1 + rng() % 512);
        fixture.outputs["px"] = random_bytes(1 + rng() % 512);
        fixture.outputs["iI"] = random_bytes(1 + rng() % 64);
        auto transport = std::make_shared<test::ScriptedTransport>(std::vector<RawResponse>{
            test::anthropic_text("decompiled"), tool_call("t1", "r2cmd", {{"command", "px"}}),
            test::anthropic_text(text::escape_binary(random_bytes(32)))});
        Rig rig(transport, fixture);
        auto dctx = rig.direct_context();
        run_direct(DirectKind::decompile, {}, rig.settings, dctx);
        ToolRunner runner(&rig.session, rig.settings);
        auto actx = rig.auto_context(runner, [](const ApprovalRequest&) { return ApprovalDecision::approve(); });
        run_auto("dump it", rig.settings, actx);
        for (const auto& req : transport->requests()) {
            ++payloads;
            std::string wire;
            try {
                wire = req.body.dump();
            } catch (const std::exception&) {
                ++invalid;
                continue;
            }
            if (!text::is_valid_text(wire)) {
                ++invalid;
            }
        }
    }
    return {invalid == 0, std::to_string(payloads) + " payloads, " + std::to_string(invalid) + " invalid"};
}

Verdict python_self_repair() {
    Settings s;
    ToolRunner probe(nullptr, s);
    if (!probe.python()) {
        return {false, "no python interpreter found"};
    }
    Rig rig(std::make_shared<test::ScriptedTransport>(std::vector<RawResponse>{
        tool_call("p1", "run_python", {{"script", "print(1 +)"}}),
        tool_call("p2", "run_python", {{"script", "print(1 + 1)"}}), test::anthropic_text("2")}));
    ToolRunner runner(&rig.session, rig.settings);
    auto ctx = rig.auto_context(runner, [](const ApprovalRequest&) { return ApprovalDecision::approve(); });
    const auto r = run_auto("compute", rig.settings, ctx);
    std::map<std::string, ToolResultBlock> results;
    for (const auto& m : rig.conversation.messages()) {
        for (const auto& b : m.blocks) {
            if (const auto* tr = std::get_if<ToolResultBlock>(&b)) {
                results[tr->tool_use_id] = *tr;
            }
        }
    }
    const bool error_returned = results.count("p1") && results["p1"].is_error &&
                                results["p1"].content.find("Error") != std::string::npos &&
                                rig.transport->requests().size() >= 2 &&
                                rig.transport->requests()[1].body.dump().find("SyntaxError") != std::string::npos;
    const bool fixed = results.count("p2") && !results["p2"].is_error && results["p2"].content == "2\n";
    return {error_returned && fixed && r.state.phase == Phase::done,
            std::string("error fed back: ") + (error_returned ? "yes" : "no") + ", corrected output: " +
                (results.count("p2") ? "\"" + std::string(text::trim(results["p2"].content)) + "\"" : "none")};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"status-line golden", status_line_golden},
        {"direct-request golden", direct_request_golden},
        {"tool-schema conformance", tool_schema},
        {"context-length classification", context_length_classification},
        {"agent loop termination", agent_loop},
        {"approval safety", approval_safety},
        {"truncation property", truncation_property},
        {"context piling", context_piling},
        {"binary guard fuzz", binary_guard},
        {"run_python self-repair", python_self_repair},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += v.pass ? 0 : 1;
        std::cout << (v.pass ? "PASS " : "FAIL ") << name << " (" << v.measure << ")\n" << std::flush;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
