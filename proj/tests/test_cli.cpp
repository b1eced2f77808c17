// SPDX-License-Identifier: Apache-2.0

#include "r2ai/cli.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace r2ai;

namespace {

ErrorCode parse_error(const std::vector<std::string>& args) {
    try {
        parse_invocation(args);
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::provider;
}

struct CliRun {
    std::istringstream in;
    std::ostringstream out;
    std::ostringstream err;
    std::shared_ptr<test::ScriptedTransport> transport;
    CliIO io;

    explicit CliRun(std::vector<RawResponse> script, std::string input = {})
        : in(std::move(input)),
          transport(std::make_shared<test::ScriptedTransport>(std::move(script))),
          io{in, out, err, test::fake_env(), transport, {}, {}} {}

    int run(std::vector<std::string> args) {
        std::vector<std::string> full{"--mock", test::fixture("mock_r2.json").string()};
        full.insert(full.end(), args.begin(), args.end());
        return run_cli(full, io);
    }
};

ApprovalRequest request(const std::string& cmd) {
    ToolCall call{"t1", "r2cmd", {{"command", cmd}}, ""};
    return {call, cmd, danger_flags(call)};
}

} // namespace

TEST(ParseInvocation, CommandFlags) {
    EXPECT_EQ(parse_invocation({"-d"}).command.kind, CommandKind::decompile);
    EXPECT_EQ(parse_invocation({"-dr"}).command.kind, CommandKind::decompile_recursive);
    const auto a = parse_invocation({"-a", "what", "does", "main", "do"}).command;
    EXPECT_EQ(a.kind, CommandKind::auto_query);
    EXPECT_EQ(a.text, "what does main do");
    const auto i = parse_invocation({"-i", "notes.txt", "summarize", "this"}).command;
    EXPECT_EQ(i.kind, CommandKind::file_query);
    EXPECT_EQ(i.path, "notes.txt");
    EXPECT_EQ(i.text, "summarize this");
    EXPECT_EQ(parse_invocation({"-L-"}).command.count, 1u);
    const auto drop = parse_invocation({"-L-2"}).command;
    EXPECT_EQ(drop.kind, CommandKind::drop_last);
    EXPECT_EQ(drop.count, 2u);
    EXPECT_EQ(parse_invocation({"-Lj"}).command.kind, CommandKind::log_json);
    EXPECT_EQ(parse_invocation({"-R"}).command.kind, CommandKind::reset);
    EXPECT_EQ(parse_invocation({"-Rq", "x"}).command.kind, CommandKind::embeddings);
    EXPECT_EQ(parse_invocation({"-V"}).command.kind, CommandKind::find_vulns);
    EXPECT_EQ(parse_invocation({"-Vr"}).command.kind, CommandKind::find_vulns_recursive);
    EXPECT_EQ(parse_invocation({"-e", "r2ai.model"}).command.text, "r2ai.model");
    const auto free = parse_invocation({"Explain", "prctl", "in", "1", "line"}).command;
    EXPECT_EQ(free.kind, CommandKind::free_query);
    EXPECT_EQ(free.text, "Explain prctl in 1 line");
    EXPECT_EQ(parse_invocation({"--", "-d", "means?"}).command.text, "-d means?");
}

TEST(ParseInvocation, GlobalOptions) {
    const auto inv = parse_invocation({"--bin", "/bin/ls", "--set", "max_tokens=10", "--set=concise=true",
                                       "--seek", "main", "--verbose", "-x"});
    EXPECT_EQ(inv.options.binary, "/bin/ls");
    EXPECT_EQ(inv.options.set, (std::vector<std::string>{"max_tokens=10", "concise=true"}));
    EXPECT_EQ(inv.options.seek, "main");
    EXPECT_TRUE(inv.options.verbose);
    EXPECT_EQ(inv.command.kind, CommandKind::explain);
    EXPECT_EQ(parse_invocation({"--serve"}).options.serve, "127.0.0.1:8421");
    EXPECT_EQ(parse_invocation({"--serve", "9000"}).options.serve, "9000");
}

TEST(ParseInvocation, Errors) {
    EXPECT_EQ(parse_error({"-z"}), ErrorCode::unknown_flag);
    EXPECT_EQ(parse_error({"--frobnicate"}), ErrorCode::unknown_flag);
    EXPECT_EQ(parse_error({}), ErrorCode::parse_failure);
    EXPECT_EQ(parse_error({"-a"}), ErrorCode::parse_failure);
    EXPECT_EQ(parse_error({"-d", "extra"}), ErrorCode::parse_failure);
    EXPECT_EQ(parse_error({"-L-x"}), ErrorCode::parse_failure);
    EXPECT_EQ(parse_error({"-i", "file-only"}), ErrorCode::parse_failure);
    EXPECT_EQ(parse_error({"--bin"}), ErrorCode::parse_failure);
}

TEST(ParseCommandLine, ReplSyntax) {
    EXPECT_EQ(parse_command_line("r2ai -d").kind, CommandKind::decompile);
    EXPECT_EQ(parse_command_line("-x").kind, CommandKind::explain);
    const auto q = parse_command_line("r2ai what is 'this'?");
    EXPECT_EQ(q.kind, CommandKind::free_query);
    EXPECT_EQ(q.text, "what is 'this'?");
    EXPECT_EQ(parse_command_line("r2ai -a \"find the key\"").text, "find the key");
    EXPECT_THROW(parse_command_line("r2ai"), Error);
}

TEST(Help, ListsEveryCommand) {
    const auto h = help_text();
    EXPECT_EQ(h.rfind("Usage: r2ai   [-args] [...]\n", 0), 0u);
    for (const char* line : {"| r2ai -d                 Decompile current function\n",
                             "| r2ai -a [query]         Resolve question using auto mode\n",
                             "| r2ai -L-[N]             delete the last (or N last messages from the chat history)\n",
                             "| r2ai -R                 reset the chat conversation context\n",
                             "| r2ai -V[r]              find vulnerabilities in the decompiled code (-Vr uses -dr)\n",
                             "| r2ai [arg]              send a post request to talk to r2ai and print the output\n"}) {
        EXPECT_NE(h.find(line), std::string::npos) << line;
    }
}

TEST(TerminalApprover, ApproveEditDenyAndEof) {
    std::ostringstream out;
    {
        std::istringstream in("a\n");
        TerminalApprover t(in, out, {});
        EXPECT_EQ(t(request("afl")).kind, ApprovalDecision::Kind::approve);
    }
    {
        std::istringstream in("what\ne\n");
        TerminalApprover t(in, out, [](const std::string& p) { return std::optional<std::string>(p + "~main"); });
        const auto d = t(request("afl"));
        EXPECT_EQ(d.kind, ApprovalDecision::Kind::approve_edited);
        EXPECT_EQ(d.payload, "afl~main");
    }
    {
        std::istringstream in("d\nnot now\n");
        TerminalApprover t(in, out, {});
        const auto d = t(request("dc"));
        EXPECT_EQ(d.kind, ApprovalDecision::Kind::deny);
        EXPECT_EQ(d.reason, "not now");
    }
    {
        std::istringstream in("");
        TerminalApprover t(in, out, {});
        EXPECT_EQ(t(request("afl")).kind, ApprovalDecision::Kind::deny);
    }
    EXPECT_NE(out.str().find("DANGER(debugger)"), std::string::npos);
    EXPECT_NE(out.str().find("answer a, e or d"), std::string::npos);
}

TEST(EditInEditor, UsesVisualThenEditor) {
    const auto env = test::fake_env({{"VISUAL", "sed -i s/afl/afl~main/"}});
    EXPECT_EQ(edit_in_editor("afl", env), "afl~main");
    EXPECT_FALSE(edit_in_editor("afl", test::fake_env({{"EDITOR", "false"}})));
}

TEST(RunCli, FreeQuery) {
    CliRun r({test::anthropic_text("prctl manipulates process attributes")});
    EXPECT_EQ(r.run({"Explain", "prctl", "in", "1", "line"}), 0);
    EXPECT_EQ(r.out.str(), "prctl manipulates process attributes\n");
    EXPECT_EQ(r.transport->requests()[0].body["messages"][0]["content"][0]["text"], "Explain prctl in 1 line");
}

TEST(RunCli, SetOverridesReachTheRequest) {
    CliRun r({test::anthropic_text("x")});
    EXPECT_EQ(r.run({"--set", "max_tokens=128", "--set", "concise=true", "-x"}), 0);
    const auto body = r.transport->requests()[0].body;
    EXPECT_EQ(body["max_tokens"], 128);
    const std::string sent = body["messages"][0]["content"][0]["text"];
    EXPECT_NE(sent.find("answer in 1 or 2 lines at most"), std::string::npos);
}

TEST(RunCli, AutoWithApprovalPromptPrintsStatus) {
    CliRun r({test::anthropic_tools({{"t1", "r2cmd", {{"command", "afl"}}}}), test::anthropic_text("four functions")},
             "a\n");
    EXPECT_EQ(r.run({"-a", "how", "many", "functions?"}), 0);
    const auto out = r.out.str();
    EXPECT_NE(out.find("(a)pprove / (e)dit / (d)eny > "), std::string::npos);
    EXPECT_NE(out.find("fcn.00400780"), std::string::npos);
    EXPECT_NE(out.find("anthropic/claude-3-7-sonnet-20250219 | total: $"), std::string::npos);
    EXPECT_NE(out.find("| 2 / 15 |"), std::string::npos);
    EXPECT_NE(out.find("four functions\n"), std::string::npos);
}

TEST(RunCli, ProviderErrorExitsTwoWithHint) {
    CliRun r({{400, test::slurp(test::fixture("context_length_error.json")), {}}});
    EXPECT_EQ(r.run({"hello"}), 2);
    EXPECT_NE(r.err.str().find("error: context_length: This model's maximum context length is 8192 tokens"), std::string::npos);
    EXPECT_NE(r.err.str().find("hint: "), std::string::npos);
}

TEST(RunCli, UsageErrors) {
    CliRun r({});
    EXPECT_EQ(r.run({"-q"}), 1);
    EXPECT_NE(r.err.str().find("error: unknown flag '-q'"), std::string::npos);
    EXPECT_NE(r.err.str().find("Usage: r2ai"), std::string::npos);
    CliRun e({});
    EXPECT_EQ(e.run({"-Rq", "anything"}), 1);
    EXPECT_NE(e.err.str().find("out of scope: embeddings"), std::string::npos);
    EXPECT_EQ(e.transport->count(), 0u);
}

TEST(RunCli, SettingsAndModel) {
    CliRun r({});
    EXPECT_EQ(r.run({"--set", "temperature=0.5", "-e", "r2ai.temperature"}), 0);
    EXPECT_EQ(r.out.str(), "r2ai.temperature = 0.5\n");
    CliRun m({});
    EXPECT_EQ(m.run({"-m", "openai:gpt-4o-mini"}), 0);
    EXPECT_EQ(m.out.str(), "openai/gpt-4o-mini\n");
    CliRun bad({});
    EXPECT_EQ(bad.run({"-e", "r2ai.nope"}), 1);
}

TEST(RunCli, ReplPilesAndResets) {
    CliRun r({test::anthropic_text("a1"), test::anthropic_text("a2"), test::anthropic_text("a3")},
             "first\nr2ai second\n-L\n-R\nthird\nq\n");
    EXPECT_EQ(r.run({"-r"}), 0);
    const auto reqs = r.transport->requests();
    ASSERT_EQ(reqs.size(), 3u);
    EXPECT_EQ(reqs[1].body["messages"].size(), 3u);
    EXPECT_EQ(reqs[2].body["messages"].size(), 1u);
    EXPECT_NE(r.out.str().find("[user] first\n[assistant] a1\n[user] second\n[assistant] a2\n"), std::string::npos);
}

TEST(RunCli, HistoryPersistsAcrossInvocations) {
    const auto path = std::filesystem::temp_directory_path() / "r2ai_cli_history.json";
    std::filesystem::remove(path);
    {
        CliRun r({test::anthropic_text("a1")});
        EXPECT_EQ(r.run({"--history", path.string(), "first"}), 0);
    }
    {
        CliRun r({test::anthropic_text("a2")});
        EXPECT_EQ(r.run({"--history", path.string(), "second"}), 0);
        EXPECT_EQ(r.transport->requests()[0].body["messages"].size(), 3u);
    }
    {
        CliRun r({});
        EXPECT_EQ(r.run({"--history", path.string(), "-L-2"}), 0);
        CliRun l({});
        EXPECT_EQ(l.run({"--history", path.string(), "-L"}), 0);
        EXPECT_EQ(l.out.str(), "[user] first\n[assistant] a1\n");
    }
    std::filesystem::remove(path);
}
