// SPDX-License-Identifier: Apache-2.0

#include "r2ai/direct.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace r2ai;

namespace {

struct Harness {
    std::shared_ptr<test::ScriptedTransport> transport;
    Gateway gateway;
    DisasmSession session;
    Conversation conversation;
    CostMeter meter;
    PriceTable prices = PriceTable::load(bundled_pricing_path());
    TemplateStore templates;
    DirectContext ctx;
    Settings settings;

    explicit Harness(std::vector<RawResponse> script = {})
        : transport(std::make_shared<test::ScriptedTransport>(std::move(script))),
          gateway(transport, test::fake_env(), [](std::chrono::milliseconds) {}),
          session(DisasmSession::open_mock(MockFixture::load(test::fixture("mock_r2.json")))) {
        ctx = DirectContext{&session, &conversation, &gateway, &meter, &prices, &templates};
        meter.begin_run(1);
    }

    std::string sent_text(std::size_t request, std::size_t message) const {
        return transport->requests().at(request).body["messages"].at(message)["content"][0]["text"];
    }
};

} // namespace

TEST(Templates, DecompileInstruction) {
    TemplateStore t;
    const auto& d = t.get("decompile");
    for (const char* phrase : {"respond ONLY with code", "NO explanations", "NO markdown",
                               "Change 'goto' into if/else/for/while", "Simplify as much as possible",
                               "use better variable names", "take function arguments and strings from comments like 'string:'",
                               "Translate this code into {language} programming language", "Output of pdc:", "[BEGIN]"}) {
        EXPECT_NE(d.find(phrase), std::string::npos) << phrase;
    }
    EXPECT_NE(t.get("auto_system").rfind("You are a reverse engineer and you are using radare2 to analyze a binary.", 0),
              std::string::npos);
    EXPECT_THROW(t.get("nope"), Error);
}

TEST(Templates, ExpandIsSinglePass) {
    EXPECT_EQ(TemplateStore::expand("a {code} b {other}", {{"code", "{code}"}}), "a {code} b {other}");
    EXPECT_EQ(TemplateStore::expand("{language}/{language}", {{"language", "C"}}), "C/C");
}

TEST(Templates, OverrideFromFile) {
    const auto path = std::filesystem::temp_directory_path() / "r2ai_templates_test.json";
    std::ofstream(path) << R"({"explain": "What is {code}?"})";
    const auto t = TemplateStore::load(path);
    EXPECT_EQ(t.get("explain"), "What is {code}?");
    EXPECT_EQ(t.get("decompile"), TemplateStore().get("decompile"));
    std::filesystem::remove(path);
}

TEST(Prompt, DecompileCarriesCodeAndLanguage) {
    Settings s;
    s.output_language = "Rust";
    s.concise = true;
    const auto b = build_direct_prompt(DirectKind::decompile, "CODE", s, TemplateStore{});
    EXPECT_NE(b.message.find("into Rust programming language"), std::string::npos);
    EXPECT_NE(b.message.find("[BEGIN]\nCODE\n[END]"), std::string::npos);
    EXPECT_EQ(b.message.find(kConciseSuffix), std::string::npos);
    EXPECT_EQ(b.code_context, "CODE");
    EXPECT_EQ(b.language_hint, "Rust");
    EXPECT_GT(b.estimated_tokens, 0u);
}

TEST(Prompt, ConciseSuffix) {
    Settings s;
    s.concise = true;
    const auto b = build_direct_prompt(DirectKind::explain, "CODE", s, TemplateStore{});
    EXPECT_NE(b.message.find(kConciseSuffix), std::string::npos);
    const auto q = build_direct_prompt(DirectKind::free_query, {}, s, TemplateStore{}, "Explain prctl");
    EXPECT_EQ(q.message, std::string("Explain prctl\n") + std::string(kConciseSuffix));
}

TEST(Prompt, FreeQueryUnchanged) {
    Settings s;
    const auto b = build_direct_prompt(DirectKind::free_query, {}, s, TemplateStore{}, "Explain prctl in 1 line");
    EXPECT_EQ(b.message, "Explain prctl in 1 line");
}

TEST(CodeContext, RecursiveAppendsEachCalleeOnce) {
    auto session = DisasmSession::open_mock(MockFixture::load(test::fixture("mock_r2.json")));
    const auto plain = gather_code_context(session, DirectKind::decompile);
    EXPECT_EQ(plain.find("// callee"), std::string::npos);
    const auto rec = gather_code_context(session, DirectKind::decompile_recursive);
    EXPECT_NE(rec.find("// callee 0x400600\nint main"), std::string::npos);
    EXPECT_NE(rec.find("// callee 0x400780\n"), std::string::npos);
    EXPECT_EQ(rec.find("// callee 0x400600"), rec.rfind("// callee 0x400600"));
    EXPECT_EQ(rec.find("0x400540"), std::string::npos);
}

TEST(CodeContext, NoFunctionHere) {
    auto fixture = MockFixture::load(test::fixture("mock_r2.json"));
    fixture.outputs["afi."] = "";
    auto session = DisasmSession::open_mock(fixture);
    try {
        gather_code_context(session, DirectKind::explain);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::no_function_here);
    }
}

TEST(RunDirect, DecompileStripsFences) {
    Harness h({test::anthropic_text("```c\nint entry0(void) { return main(); }\n```")});
    const auto r = run_direct(DirectKind::decompile, {}, h.settings, h.ctx);
    EXPECT_EQ(r.answer, "int entry0(void) { return main(); }");
    ASSERT_EQ(h.conversation.size(), 2u);
    EXPECT_EQ(h.conversation.messages()[0].origin, Origin::direct_template);
    EXPECT_NE(h.sent_text(0, 0).find("goto loc_0x400530"), std::string::npos);
    EXPECT_EQ(h.meter.ledger().run_count, 1);
}

TEST(RunDirect, QueriesPileUpAndResetClears) {
    Harness h;
    for (const auto* q : {"first", "second", "third"}) {
        run_direct(DirectKind::free_query, q, h.settings, h.ctx);
    }
    const auto last = h.transport->requests().back().body["messages"];
    ASSERT_EQ(last.size(), 5u);
    std::vector<std::string> users;
    for (const auto& m : last) {
        if (m["role"] == "user") {
            users.push_back(m["content"][0]["text"]);
        }
    }
    EXPECT_EQ(users, (std::vector<std::string>{"first", "second", "third"}));

    h.conversation.reset();
    run_direct(DirectKind::free_query, "fourth", h.settings, h.ctx);
    const auto after = h.transport->requests().back().body["messages"];
    ASSERT_EQ(after.size(), 1u);
    EXPECT_EQ(after[0]["content"][0]["text"], "fourth");
}

TEST(RunDirect, FailureRollsBackPrompt) {
    Harness h({test::anthropic_text("one"),
               RawResponse{400, test::slurp(test::fixture("context_length_error.json")), {}}});
    run_direct(DirectKind::free_query, "a", h.settings, h.ctx);
    EXPECT_THROW(run_direct(DirectKind::free_query, "b", h.settings, h.ctx), ProviderError);
    EXPECT_EQ(h.conversation.size(), 2u);
    EXPECT_EQ(h.conversation.messages().back().text(), "one");
}

TEST(RunDirect, FindVulnsDecompilesFirst) {
    Harness h({test::anthropic_text("```c\nint f(char *s) { strcpy(buf, s); }\n```", 100, 20),
               test::anthropic_text("strcpy overflow", 200, 30)});
    const auto r = run_direct(DirectKind::find_vulns, {}, h.settings, h.ctx);
    EXPECT_EQ(r.answer, "strcpy overflow");
    EXPECT_EQ(r.usage.input_tokens, 300);
    EXPECT_EQ(r.usage.output_tokens, 50);
    ASSERT_EQ(h.transport->count(), 2u);
    EXPECT_NE(h.sent_text(1, 2).find("int f(char *s) { strcpy(buf, s); }"), std::string::npos);
    EXPECT_EQ(h.sent_text(1, 2).find("```"), std::string::npos);
    EXPECT_EQ(h.conversation.size(), 4u);
}

TEST(RunDirect, EmptyQueryRejected) {
    Harness h;
    EXPECT_THROW(run_direct(DirectKind::free_query, "  ", h.settings, h.ctx), Error);
    EXPECT_EQ(h.transport->count(), 0u);
}

TEST(FileQuery, TextBinaryAndMissing) {
    Harness h({test::anthropic_text("it prints hi")});
    const auto dir = std::filesystem::temp_directory_path();
    const auto text_file = dir / "r2ai_fq.txt";
    const auto bin_file = dir / "r2ai_fq.bin";
    std::ofstream(text_file) << "echo hi\n";
    {
        std::ofstream b(bin_file, std::ios::binary);
        b.write("\x7f" "ELF\0\0\x01", 7);
    }
    const auto r = file_query(text_file, "what does it do?", h.settings, h.ctx);
    EXPECT_EQ(r.answer, "it prints hi");
    EXPECT_NE(h.sent_text(0, 0).find("what does it do?"), std::string::npos);
    EXPECT_NE(h.sent_text(0, 0).find("echo hi"), std::string::npos);

    const auto code_of = [&](const std::filesystem::path& p) {
        try {
            file_query(p, "q", h.settings, h.ctx);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::provider;
    };
    EXPECT_EQ(code_of(bin_file), ErrorCode::binary_file);
    EXPECT_EQ(code_of(dir / "r2ai_does_not_exist"), ErrorCode::not_found);
    EXPECT_EQ(h.transport->count(), 1u);
    std::filesystem::remove(text_file);
    std::filesystem::remove(bin_file);
}
