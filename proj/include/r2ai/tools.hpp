// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace r2ai {

/// The tool names are protocol identifiers seen by the model.
enum class ToolName { r2cmd, execute_binary, run_python, execute_js };

std::string_view to_string(ToolName t);
std::optional<ToolName> parse_tool_name(std::string_view name);

struct ToolDefinition {
    std::string name;
    nlohmann::ordered_json input_schema;
    std::string description;

    /// {"name", "input_schema", "description"}, the Anthropic tools entry.
    nlohmann::ordered_json to_anthropic() const;
    /// {"type": "function", "function": {...}}, the chat-completions form.
    nlohmann::ordered_json to_function() const;
};

/// r2cmd, execute_binary, run_python and execute_js, in that order.
const std::vector<ToolDefinition>& tool_catalog();
const ToolDefinition* find_tool(std::string_view name);

/// A model's request to run one tool.
struct ToolCall {
    std::string id;
    std::string name;
    nlohmann::json args = nlohmann::json::object();
    /// The provider's original encoding of the call, kept for inspection.
    std::string raw;
};

/// Checks `args` against the subset of JSON Schema the catalog uses (object,
/// required, string, array of strings). Returns a description of the first
/// problem, or nullopt when the arguments are acceptable.
std::optional<std::string> validate_args(const nlohmann::ordered_json& schema, const nlohmann::json& args);

/// The text an analyst reviews and may edit: the command for r2cmd, the
/// script for run_python / execute_js, the command line for execute_binary.
std::string editable_payload(const ToolCall& call);

/// Rebuilds the arguments after the analyst edited the payload text.
nlohmann::json args_from_payload(const ToolCall& call, const std::string& payload);

} // namespace r2ai
