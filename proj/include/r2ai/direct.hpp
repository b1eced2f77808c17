// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "r2ai/config.hpp"
#include "r2ai/conversation.hpp"
#include "r2ai/cost.hpp"
#include "r2ai/disasm.hpp"
#include "r2ai/provider.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace r2ai {

enum class DirectKind {
    decompile,
    decompile_recursive,
    explain,
    suggest_name,
    suggest_vars,
    signature,
    find_vulns,
    find_vulns_recursive,
    file_query,
    free_query,
};

std::string_view to_string(DirectKind k);
std::optional<DirectKind> parse_direct_kind(std::string_view name);
bool needs_function(DirectKind k);
bool is_recursive(DirectKind k);

inline constexpr std::string_view kConciseSuffix = "answer in 1 or 2 lines at most";

/// Prompt templates keyed by name: decompile, explain, suggest_name,
/// suggest_vars, signature, find_vulns, file_query and auto_system.
/// Placeholders: {code}, {language}, {query}.
class TemplateStore {
public:
    TemplateStore();

    /// Defaults overlaid with the entries of a JSON object file.
    static TemplateStore load(const std::filesystem::path& path);
    /// Bundled defaults, or `path` when non-empty.
    static TemplateStore from_settings(const Settings& settings);

    const std::string& get(std::string_view name) const;
    void set(std::string name, std::string text);

    /// Single-pass substitution; substituted text is never re-expanded and
    /// unknown placeholders are left as they are.
    static std::string expand(std::string_view tmpl, const std::map<std::string, std::string>& vars);

private:
    std::map<std::string, std::string, std::less<>> templates_;
};

struct PromptBundle {
    std::string instruction_text;
    std::string code_context;
    std::string language_hint;
    /// The user message that is sent.
    std::string message;
    std::size_t estimated_tokens = 0;
};

/// The current function's pseudo-code; recursive kinds append each direct
/// callee under a "// callee" delimiter. Throws Error{no_function_here}.
std::string gather_code_context(DisasmSession& session, DirectKind kind);

PromptBundle build_direct_prompt(DirectKind kind, const std::string& code, const Settings& settings,
                                 const TemplateStore& templates, const std::string& query = {});

struct DirectContext {
    DisasmSession* session = nullptr;
    Conversation* conversation = nullptr;
    Gateway* gateway = nullptr;
    CostMeter* meter = nullptr;
    const PriceTable* prices = nullptr;
    const TemplateStore* templates = nullptr;
};

struct DirectResult {
    std::string answer;
    PromptBundle bundle;
    TokenUsage usage;
    TruncationReport truncation;
    std::optional<std::string> cost_warning;
};

/// Appends the prompt and the answer to the conversation. On failure the
/// prompt is rolled back and the error rethrown.
DirectResult run_direct(DirectKind kind, const std::string& query, const Settings& settings, DirectContext& ctx);

/// Sends the file content and the query as one user message. Throws
/// Error{not_found} and Error{binary_file}.
DirectResult file_query(const std::filesystem::path& path, const std::string& query, const Settings& settings,
                        DirectContext& ctx);

} // namespace r2ai
