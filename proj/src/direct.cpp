// SPDX-License-Identifier: Apache-2.0

#include "r2ai/direct.hpp"

#include "r2ai/text.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace r2ai {

namespace {

constexpr std::string_view kDecompileTemplate =
    "Rewrite this function and respond ONLY with code, NO explanations, NO markdown, Change 'goto' into "
    "if/else/for/while, Simplify as much as possible, use better variable names, take function arguments and "
    "strings from comments like 'string:'. Translate this code into {language} programming language. Do not "
    "explain anything:\nOutput of pdc:\n[BEGIN]\n{code}\n[END]";

constexpr std::string_view kAutoSystemTemplate =
    "You are a reverse engineer and you are using radare2 to analyze a binary. The user will ask questions about "
    "the binary and you will answer them. Use the r2cmd tool to run radare2 commands and read their output. "
    "Python, JavaScript and the binary itself can be run with the other tools when radare2 alone is not enough. "
    "The user reviews every tool call and may edit or deny it; when a call is denied, choose another approach. "
    "Base your answer on the tool outputs and do not invent addresses, strings or behaviour. When you have the "
    "answer, reply without calling any tool.";

std::map<std::string, std::string, std::less<>> default_templates() {
    return {
        {"decompile", std::string(kDecompileTemplate)},
        {"explain",
         "Explain what this function does. Output of pdc:\n[BEGIN]\n{code}\n[END]"},
        {"suggest_name",
         "Suggest a better name for this function. Respond with the name only. Output of pdc:\n[BEGIN]\n{code}\n[END]"},
        {"suggest_vars",
         "Suggest better names and {language} types for the arguments and local variables of this function, one "
         "per line as 'old: type new'. Output of pdc:\n[BEGIN]\n{code}\n[END]"},
        {"signature",
         "Give the {language} signature of this function on a single line, nothing else. Output of pdc:\n[BEGIN]\n"
         "{code}\n[END]"},
        {"find_vulns",
         "Find vulnerabilities in this {language} code. For each one give the affected line, the weakness and how "
         "it could be triggered:\n[BEGIN]\n{code}\n[END]"},
        {"file_query", "{query}\nContents of the file:\n[BEGIN]\n{code}\n[END]"},
        {"auto_system", std::string(kAutoSystemTemplate)},
    };
}

std::string_view template_name(DirectKind k) {
    switch (k) {
    case DirectKind::decompile:
    case DirectKind::decompile_recursive: return "decompile";
    case DirectKind::explain: return "explain";
    case DirectKind::suggest_name: return "suggest_name";
    case DirectKind::suggest_vars: return "suggest_vars";
    case DirectKind::signature: return "signature";
    case DirectKind::find_vulns:
    case DirectKind::find_vulns_recursive: return "find_vulns";
    case DirectKind::file_query: return "file_query";
    case DirectKind::free_query: return "";
    }
    return "";
}

bool is_decompile(DirectKind k) { return k == DirectKind::decompile || k == DirectKind::decompile_recursive; }

std::size_t token_estimate(std::string_view s) { return estimate_tokens(s); }

std::vector<std::uint64_t> callee_addresses(const std::string& afij) {
    std::vector<std::uint64_t> out;
    const auto j = nlohmann::json::parse(afij, nullptr, false);
    if (!j.is_array() || j.empty() || !j[0].is_object()) {
        return out;
    }
    std::set<std::uint64_t> seen;
    for (const auto& ref : j[0].value("callrefs", nlohmann::json::array())) {
        if (ref.value("type", "") != "CALL" || !ref.contains("addr") || !ref["addr"].is_number_unsigned()) {
            continue;
        }
        const auto addr = ref["addr"].get<std::uint64_t>();
        if (seen.insert(addr).second) {
            out.push_back(addr);
        }
    }
    return out;
}

std::string hex(std::uint64_t v) {
    std::ostringstream ss;
    ss << "0x" << std::hex << v;
    return ss.str();
}

// One prompt/answer exchange appended to the conversation.
DirectResult exchange(PromptBundle bundle, Origin origin, bool strip_fences, const Settings& settings,
                      DirectContext& ctx) {
    if (ctx.conversation == nullptr || ctx.gateway == nullptr) {
        throw Error(ErrorCode::precondition, "direct command needs a conversation and a gateway");
    }
    auto& conv = *ctx.conversation;
    conv.append(ChatMessage::user(bundle.message, origin));

    DirectResult result;
    try {
        const auto system_tokens = estimate_tokens(settings.system_prompt);
        const auto limit = static_cast<std::size_t>(std::max<std::int64_t>(settings.max_input_tokens, 0));
        if (limit <= system_tokens) {
            throw Error(ErrorCode::budget_too_small, "max_input_tokens does not even cover the system prompt");
        }
        auto truncated = conv.truncate_to_budget(limit - system_tokens, token_estimate);
        if (!truncated.report.empty()) {
            spdlog::info("context truncated from ~{} to ~{} tokens", truncated.report.tokens_before,
                         truncated.report.tokens_after);
        }
        spdlog::debug("sending ~{} tokens", truncated.report.tokens_after + system_tokens);
        auto response = ctx.gateway->complete(truncated.conversation, settings.model_ref(), settings);
        result.truncation = std::move(truncated.report);
        result.usage = response.usage;
        result.answer = response.text();
        if (strip_fences) {
            result.answer = text::strip_code_fences(result.answer);
        }
        conv.append(ChatMessage::assistant(result.answer.empty() ? std::string{} : result.answer, origin));
    } catch (...) {
        conv.drop_last(1);
        throw;
    }
    if (ctx.meter != nullptr) {
        static const PriceTable empty;
        result.cost_warning =
            ctx.meter->record_usage(result.usage, settings.model_ref(), ctx.prices ? *ctx.prices : empty);
    }
    result.bundle = std::move(bundle);
    return result;
}

const TemplateStore& templates_of(const DirectContext& ctx) {
    static const TemplateStore defaults;
    return ctx.templates != nullptr ? *ctx.templates : defaults;
}

} // namespace

std::string_view to_string(DirectKind k) {
    switch (k) {
    case DirectKind::decompile: return "decompile";
    case DirectKind::decompile_recursive: return "decompile_recursive";
    case DirectKind::explain: return "explain";
    case DirectKind::suggest_name: return "suggest_name";
    case DirectKind::suggest_vars: return "suggest_vars";
    case DirectKind::signature: return "signature";
    case DirectKind::find_vulns: return "find_vulns";
    case DirectKind::find_vulns_recursive: return "find_vulns_recursive";
    case DirectKind::file_query: return "file_query";
    case DirectKind::free_query: return "free_query";
    }
    return "unknown";
}

std::optional<DirectKind> parse_direct_kind(std::string_view name) {
    for (auto k : {DirectKind::decompile, DirectKind::decompile_recursive, DirectKind::explain,
                   DirectKind::suggest_name, DirectKind::suggest_vars, DirectKind::signature, DirectKind::find_vulns,
                   DirectKind::find_vulns_recursive, DirectKind::file_query, DirectKind::free_query}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    return std::nullopt;
}

bool needs_function(DirectKind k) { return k != DirectKind::file_query && k != DirectKind::free_query; }

bool is_recursive(DirectKind k) {
    return k == DirectKind::decompile_recursive || k == DirectKind::find_vulns_recursive;
}

TemplateStore::TemplateStore() : templates_(default_templates()) {}

TemplateStore TemplateStore::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::not_found, "cannot read template file " + path.string());
    }
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (!j.is_object()) {
        throw Error(ErrorCode::parse_failure, "template file must hold a JSON object: " + path.string());
    }
    TemplateStore store;
    for (const auto& [name, value] : j.items()) {
        if (!value.is_string()) {
            throw Error(ErrorCode::parse_failure, "template '" + name + "' must be a string");
        }
        store.set(name, value.get<std::string>());
    }
    return store;
}

TemplateStore TemplateStore::from_settings(const Settings& settings) {
    return settings.templates_path.empty() ? TemplateStore{} : load(settings.templates_path);
}

const std::string& TemplateStore::get(std::string_view name) const {
    const auto it = templates_.find(name);
    if (it == templates_.end()) {
        throw Error(ErrorCode::not_found, "no template named '" + std::string(name) + "'");
    }
    return it->second;
}

void TemplateStore::set(std::string name, std::string text) { templates_[std::move(name)] = std::move(text); }

std::string TemplateStore::expand(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            const auto close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                const auto it = vars.find(std::string(tmpl.substr(i + 1, close - i - 1)));
                if (it != vars.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += tmpl[i++];
    }
    return out;
}

std::string gather_code_context(DisasmSession& session, DirectKind kind) {
    if (text::trim(session.exec("afi.").output).empty()) {
        throw Error(ErrorCode::no_function_here, "no function at the current address");
    }
    std::string code = session.exec("pdc").output;
    if (text::trim(code).empty()) {
        throw Error(ErrorCode::no_function_here, "no pseudo-code for the current function");
    }
    if (!is_recursive(kind)) {
        return code;
    }
    for (const auto addr : callee_addresses(session.exec("afij").output)) {
        const auto callee = session.exec("pdc @ " + hex(addr)).output;
        if (text::trim(callee).empty()) {
            continue;
        }
        if (code.back() != '\n') {
            code += '\n';
        }
        code += "// callee " + hex(addr) + "\n" + callee;
    }
    return code;
}

PromptBundle build_direct_prompt(DirectKind kind, const std::string& code, const Settings& settings,
                                 const TemplateStore& templates, const std::string& query) {
    PromptBundle b;
    b.language_hint = settings.output_language;
    b.code_context = kind == DirectKind::free_query ? std::string{} : code;
    if (kind == DirectKind::free_query) {
        b.instruction_text = query;
    } else {
        b.instruction_text =
            TemplateStore::expand(templates.get(template_name(kind)), {{"language", b.language_hint}, {"query", query}});
    }
    if (settings.concise && !is_decompile(kind)) {
        if (!b.instruction_text.empty() && b.instruction_text.back() != '\n') {
            b.instruction_text += '\n';
        }
        b.instruction_text += kConciseSuffix;
    }
    b.message = kind == DirectKind::free_query ? b.instruction_text
                                               : TemplateStore::expand(b.instruction_text, {{"code", b.code_context}});
    b.estimated_tokens = estimate_tokens(b.message);
    return b;
}

DirectResult run_direct(DirectKind kind, const std::string& query, const Settings& settings, DirectContext& ctx) {
    const auto& templates = templates_of(ctx);
    if (kind == DirectKind::file_query) {
        throw Error(ErrorCode::precondition, "file queries go through file_query()");
    }
    if (kind == DirectKind::free_query) {
        if (text::trim(query).empty()) {
            throw Error(ErrorCode::invalid_message, "empty query");
        }
        return exchange(build_direct_prompt(kind, {}, settings, templates, query), Origin::human, false, settings,
                        ctx);
    }
    if (ctx.session == nullptr) {
        throw Error(ErrorCode::precondition, "this command needs an open binary");
    }
    auto code = gather_code_context(*ctx.session, kind);
    if (kind == DirectKind::find_vulns || kind == DirectKind::find_vulns_recursive) {
        const auto decompile_kind = is_recursive(kind) ? DirectKind::decompile_recursive : DirectKind::decompile;
        auto first = exchange(build_direct_prompt(decompile_kind, code, settings, templates), Origin::direct_template,
                              true, settings, ctx);
        auto second = exchange(build_direct_prompt(kind, first.answer, settings, templates), Origin::direct_template,
                               false, settings, ctx);
        second.usage.input_tokens += first.usage.input_tokens;
        second.usage.output_tokens += first.usage.output_tokens;
        second.usage.estimated = second.usage.estimated || first.usage.estimated;
        if (!second.cost_warning) {
            second.cost_warning = first.cost_warning;
        }
        return second;
    }
    return exchange(build_direct_prompt(kind, code, settings, templates), Origin::direct_template, is_decompile(kind),
                    settings, ctx);
}

DirectResult file_query(const std::filesystem::path& path, const std::string& query, const Settings& settings,
                        DirectContext& ctx) {
    std::ifstream in(path, std::ios::binary);
    if (!in || !std::filesystem::is_regular_file(path)) {
        throw Error(ErrorCode::not_found, "no such file: " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    const auto content = ss.str();
    if (text::looks_binary(content)) {
        throw Error(ErrorCode::binary_file,
                    path.string() + " is a binary file; open it with the disassembler instead of sending it");
    }
    return exchange(build_direct_prompt(DirectKind::file_query, content, settings, templates_of(ctx), query),
                    Origin::human, false, settings, ctx);
}

} // namespace r2ai
