// SPDX-License-Identifier: Apache-2.0

#include "r2ai/tools.hpp"

#include "r2ai/text.hpp"

namespace r2ai {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ordered_json string_property_schema(const char* property) {
    ordered_json schema;
    schema["type"] = "object";
    schema["properties"][property] = {{"type", "string"}};
    schema["required"] = ordered_json::array({property});
    return schema;
}

std::vector<ToolDefinition> build_catalog() {
    std::vector<ToolDefinition> tools;
    tools.push_back({"r2cmd", string_property_schema("command"), "Run a r2 command and return the output"});

    ordered_json binary_schema;
    binary_schema["type"] = "object";
    binary_schema["properties"]["path"] = {{"type", "string"}};
    binary_schema["properties"]["args"] = {{"type", "array"}, {"items", {{"type", "string"}}}};
    binary_schema["required"] = ordered_json::array({"path"});
    tools.push_back({"execute_binary", binary_schema,
                     "Execute a binary on the analyst's host with optional arguments and return its output"});

    tools.push_back({"run_python", string_property_schema("script"),
                     "Run a Python program on the analyst's host and return its output"});
    tools.push_back({"execute_js", string_property_schema("script"),
                     "Run a JavaScript program and return its output"});
    return tools;
}

std::string quote_word(const std::string& w) {
    if (!w.empty() && w.find_first_of(" \t\n'\"") == std::string::npos) {
        return w;
    }
    if (w.find('\'') == std::string::npos) {
        return "'" + w + "'";
    }
    return "\"" + w + "\"";
}

} // namespace

std::string_view to_string(ToolName t) {
    switch (t) {
    case ToolName::r2cmd: return "r2cmd";
    case ToolName::execute_binary: return "execute_binary";
    case ToolName::run_python: return "run_python";
    case ToolName::execute_js: return "execute_js";
    }
    return "unknown";
}

std::optional<ToolName> parse_tool_name(std::string_view name) {
    for (const auto t : {ToolName::r2cmd, ToolName::execute_binary, ToolName::run_python, ToolName::execute_js}) {
        if (to_string(t) == name) {
            return t;
        }
    }
    return std::nullopt;
}

ordered_json ToolDefinition::to_anthropic() const {
    ordered_json j;
    j["name"] = name;
    j["input_schema"] = input_schema;
    j["description"] = description;
    return j;
}

ordered_json ToolDefinition::to_function() const {
    ordered_json fn;
    fn["name"] = name;
    fn["description"] = description;
    fn["parameters"] = input_schema;
    ordered_json j;
    j["type"] = "function";
    j["function"] = std::move(fn);
    return j;
}

const std::vector<ToolDefinition>& tool_catalog() {
    static const std::vector<ToolDefinition> catalog = build_catalog();
    return catalog;
}

const ToolDefinition* find_tool(std::string_view name) {
    for (const auto& t : tool_catalog()) {
        if (t.name == name) {
            return &t;
        }
    }
    return nullptr;
}

std::optional<std::string> validate_args(const ordered_json& schema, const json& args) {
    if (!args.is_object()) {
        return "arguments must be a JSON object";
    }
    if (const auto it = schema.find("required"); it != schema.end()) {
        for (const auto& req : *it) {
            if (!args.contains(req.get<std::string>())) {
                return "missing required argument '" + req.get<std::string>() + "'";
            }
        }
    }
    const auto props = schema.value("properties", ordered_json::object());
    for (const auto& [key, value] : args.items()) {
        const auto p = props.find(key);
        if (p == props.end()) {
            return "unexpected argument '" + key + "'";
        }
        const auto type = p->value("type", "");
        if (type == "string" && !value.is_string()) {
            return "argument '" + key + "' must be a string";
        }
        if (type == "array") {
            if (!value.is_array()) {
                return "argument '" + key + "' must be an array";
            }
            for (const auto& item : value) {
                if (!item.is_string()) {
                    return "argument '" + key + "' must contain only strings";
                }
            }
        }
    }
    return std::nullopt;
}

std::string editable_payload(const ToolCall& call) {
    const auto tool = parse_tool_name(call.name);
    if (!tool || !call.args.is_object()) {
        return call.args.dump();
    }
    switch (*tool) {
    case ToolName::r2cmd: return call.args.value("command", "");
    case ToolName::run_python:
    case ToolName::execute_js: return call.args.value("script", "");
    case ToolName::execute_binary: {
        std::string line = quote_word(call.args.value("path", ""));
        for (const auto& a : call.args.value("args", json::array())) {
            if (a.is_string()) {
                line += " " + quote_word(a.get<std::string>());
            }
        }
        return line;
    }
    }
    return call.args.dump();
}

json args_from_payload(const ToolCall& call, const std::string& payload) {
    const auto tool = parse_tool_name(call.name);
    if (!tool) {
        return json::parse(payload, nullptr, false);
    }
    switch (*tool) {
    case ToolName::r2cmd: return json{{"command", payload}};
    case ToolName::run_python:
    case ToolName::execute_js: return json{{"script", payload}};
    case ToolName::execute_binary: {
        auto words = text::split_words(payload);
        json out = json::object();
        out["path"] = words.empty() ? "" : words.front();
        if (words.size() > 1) {
            out["args"] = json(std::vector<std::string>(words.begin() + 1, words.end()));
        }
        return out;
    }
    }
    return json::object();
}

} // namespace r2ai
