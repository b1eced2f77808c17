// SPDX-License-Identifier: Apache-2.0

#include "r2ai/config.hpp"

#include "r2ai/error.hpp"
#include "r2ai/text.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>

namespace r2ai {

namespace {

constexpr std::array<Provider, 7> kProviders = {
    Provider::anthropic, Provider::openai, Provider::mistral, Provider::gemini,
    Provider::groq,      Provider::xai,    Provider::ollama,
};

const std::vector<SuggestedModel>& default_suggestions() {
    static const std::vector<SuggestedModel> models = {
        {Provider::anthropic, "claude-3-7-sonnet-20250219"},
        {Provider::anthropic, "claude-3-5-sonnet-20241022"},
        {Provider::anthropic, "claude-3-haiku-20240307"},
        {Provider::gemini, "gemini-1.5-flash"},
        {Provider::gemini, "gemini-1.0-pro"},
        {Provider::groq, "deepseek-r1-distill-llama-70b"},
        {Provider::groq, "deepseek-r1-distill-qwen-32b"},
        {Provider::groq, "llama-3.3-70b-versatile"},
        {Provider::mistral, "mistral-large-latest"},
        {Provider::openai, "gpt-4"},
        {Provider::openai, "gpt-4o-mini"},
        {Provider::openai, "gpt-3.5-turbo"},
        {Provider::xai, "grok-2-1212"},
    };
    return models;
}

std::string_view strip_prefix(std::string_view key) {
    constexpr std::string_view prefix = "r2ai.";
    if (key.substr(0, prefix.size()) == prefix) {
        key.remove_prefix(prefix.size());
    }
    return key;
}

std::string format_real(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

[[noreturn]] void parse_fail(std::string_view key, std::string_view value, std::string_view expected) {
    throw Error(ErrorCode::parse_failure, "invalid value '" + std::string(value) + "' for " +
                                              std::string(key) + ": expected " + std::string(expected));
}

double parse_unit_real(std::string_view key, std::string_view value) {
    const auto v = text::trim(value);
    double out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size() || !(out >= 0.0 && out <= 1.0)) {
        parse_fail(key, value, "a real number in [0,1]");
    }
    return out;
}

std::int64_t parse_int(std::string_view key, std::string_view value, std::int64_t min) {
    const auto v = text::trim(value);
    std::int64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size() || out < min) {
        parse_fail(key, value, min >= 1 ? "a positive integer" : "a non-negative integer");
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
    const auto v = text::to_lower(text::trim(value));
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        return false;
    }
    parse_fail(key, value, "a boolean (true/false)");
}

struct KeySpec {
    SettingInfo info;
    std::function<void(Settings&, std::string_view)> set;
    std::function<SettingValue(const Settings&)> get;
};

KeySpec string_key(std::string key, std::string def, std::string doc, std::string Settings::*field) {
    return {{key, "string", std::move(def), std::move(doc)},
            [field](Settings& s, std::string_view v) { s.*field = std::string(v); },
            [field](const Settings& s) -> SettingValue { return s.*field; }};
}

KeySpec int_key(std::string key, std::string def, std::string doc, std::int64_t Settings::*field,
                std::int64_t min) {
    return {{key, min >= 1 ? "positive integer" : "integer", std::move(def), std::move(doc)},
            [field, key, min](Settings& s, std::string_view v) { s.*field = parse_int(key, v, min); },
            [field](const Settings& s) -> SettingValue { return s.*field; }};
}

KeySpec real_key(std::string key, std::string def, std::string doc, double Settings::*field) {
    return {{key, "real in [0,1]", std::move(def), std::move(doc)},
            [field, key](Settings& s, std::string_view v) { s.*field = parse_unit_real(key, v); },
            [field](const Settings& s) -> SettingValue { return s.*field; }};
}

KeySpec bool_key(std::string key, std::string def, std::string doc, bool Settings::*field) {
    return {{key, "boolean", std::move(def), std::move(doc)},
            [field, key](Settings& s, std::string_view v) { s.*field = parse_bool(key, v); },
            [field](const Settings& s) -> SettingValue { return s.*field; }};
}

const std::vector<KeySpec>& key_specs() {
    static const std::vector<KeySpec> specs = [] {
        std::vector<KeySpec> v;
        v.push_back({{"api", "provider", "anthropic", "provider dialect used for requests"},
                     [](Settings& s, std::string_view value) {
                         const auto p = parse_provider(text::trim(value));
                         if (!p) {
                             throw Error(ErrorCode::unknown_provider,
                                         "unknown provider '" + std::string(value) + "'");
                         }
                         s.api = *p;
                     },
                     [](const Settings& s) -> SettingValue { return s.api; }});
        v.push_back({{"model", "string", "claude-3-7-sonnet-20250219", "provider-specific model name"},
                     [](Settings& s, std::string_view value) {
                         const auto t = text::trim(value);
                         if (t.empty()) {
                             parse_fail("model", value, "a non-empty model name");
                         }
                         s.model = std::string(t);
                     },
                     [](const Settings& s) -> SettingValue { return s.model; }});
        v.push_back(real_key("temperature", "0.002", "sampling temperature", &Settings::temperature));
        v.push_back(real_key("top_p", "0.95", "nucleus sampling mass", &Settings::top_p));
        v.push_back(int_key("max_tokens", "4096", "completion token limit sent with each request",
                            &Settings::max_tokens, 1));
        v.push_back(int_key("max_input_tokens", "32000",
                            "context budget; older messages are truncated beyond it",
                            &Settings::max_input_tokens, 1));
        v.push_back(int_key("auto.max_runs", "15", "maximum model interactions per auto query",
                            &Settings::auto_max_runs, 1));
        v.push_back(string_key("auto.init_commands", "aaa;iI;afl",
                               "r2 commands whose output is sent with auto queries",
                               &Settings::auto_init_commands));
        v.push_back(bool_key("auto.resend_init", "true",
                             "capture the init commands again for every auto query",
                             &Settings::auto_resend_init));
        v.push_back(string_key("auto.system_prompt", "", "system prompt for auto mode (empty: template)",
                               &Settings::auto_system_prompt));
        v.push_back(int_key("auto.tool_timeout", "60", "seconds a tool execution may run",
                            &Settings::auto_tool_timeout, 1));
        v.push_back(string_key("system_prompt", "", "system prompt for direct queries",
                               &Settings::system_prompt));
        v.push_back(string_key("output_language", "C", "programming language for decompiled output",
                               &Settings::output_language));
        v.push_back(bool_key("concise", "false", "ask for answers of 1 or 2 lines", &Settings::concise));
        v.push_back(string_key("pricing_path", "", "pricing table file (empty: bundled table)",
                               &Settings::pricing_path));
        v.push_back(string_key("templates_path", "", "prompt template override file",
                               &Settings::templates_path));
        v.push_back(string_key("endpoint", "", "override the provider endpoint URL", &Settings::endpoint));
        v.push_back(int_key("timeout", "120", "HTTP request timeout in seconds", &Settings::request_timeout, 1));
        v.push_back(int_key("retry.max", "3", "retries on rate limit errors", &Settings::retry_max, 0));
        v.push_back(int_key("retry.base_ms", "1000", "initial backoff delay in milliseconds",
                            &Settings::retry_base_ms, 0));
        v.push_back(string_key("r2.bin", "radare2", "disassembler executable", &Settings::r2_bin));
        v.push_back(int_key("r2.timeout", "30", "seconds a disassembler command may run", &Settings::r2_timeout, 1));
        v.push_back(int_key("r2.output_cap", "65536", "maximum bytes kept from one command output",
                            &Settings::r2_output_cap, 1));
        v.push_back(string_key("interpreter.python", "", "python executable (empty: search PATH)",
                               &Settings::python_interpreter));
        v.push_back(string_key("interpreter.js", "", "javascript engine (empty: search PATH)",
                               &Settings::js_interpreter));
        v.push_back(string_key("scratch_dir", "", "working directory for tool execution",
                               &Settings::scratch_dir));
        return v;
    }();
    return specs;
}

const KeySpec& find_key(std::string_view key) {
    const auto k = strip_prefix(text::trim(key));
    for (const auto& spec : key_specs()) {
        if (spec.info.key == k) {
            return spec;
        }
    }
    std::string valid;
    for (const auto& spec : key_specs()) {
        valid += valid.empty() ? "" : ", ";
        valid += spec.info.key;
    }
    throw Error(ErrorCode::unknown_key, "unknown key '" + std::string(k) + "'; valid keys: " + valid);
}

std::string render(const SettingValue& v) {
    struct Visitor {
        std::string operator()(const std::string& s) const { return s; }
        std::string operator()(double d) const { return format_real(d); }
        std::string operator()(std::int64_t i) const { return std::to_string(i); }
        std::string operator()(bool b) const { return b ? "true" : "false"; }
        std::string operator()(Provider p) const { return std::string(to_string(p)); }
    };
    return std::visit(Visitor{}, v);
}

} // namespace

std::string_view to_string(Provider p) {
    switch (p) {
    case Provider::anthropic: return "anthropic";
    case Provider::openai: return "openai";
    case Provider::mistral: return "mistral";
    case Provider::gemini: return "gemini";
    case Provider::groq: return "groq";
    case Provider::xai: return "xai";
    case Provider::ollama: return "ollama";
    }
    return "unknown";
}

std::optional<Provider> parse_provider(std::string_view name) {
    const auto lowered = text::to_lower(name);
    if (lowered == "ollama-compatible" || lowered == "ollama_compatible") {
        return Provider::ollama;
    }
    for (const auto p : kProviders) {
        if (to_string(p) == lowered) {
            return p;
        }
    }
    return std::nullopt;
}

std::span<const Provider> all_providers() { return kProviders; }

std::string ModelRef::to_string() const { return std::string(r2ai::to_string(provider)) + ":" + name; }

std::string ModelRef::display() const { return std::string(r2ai::to_string(provider)) + "/" + name; }

ModelRef ModelRef::parse(std::string_view spec) {
    const auto colon = spec.find(':');
    if (colon == std::string_view::npos) {
        throw Error(ErrorCode::parse_failure, "model reference must be provider:name");
    }
    const auto provider = parse_provider(spec.substr(0, colon));
    if (!provider) {
        throw Error(ErrorCode::unknown_provider, "unknown provider '" + std::string(spec.substr(0, colon)) + "'");
    }
    const auto name = text::trim(spec.substr(colon + 1));
    if (name.empty()) {
        throw Error(ErrorCode::parse_failure, "model name must not be empty");
    }
    return ModelRef{*provider, std::string(name)};
}

std::span<const SuggestedModel> suggested_models() { return default_suggestions(); }

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name.c_str()); v != nullptr) {
            return std::string(v);
        }
        return std::nullopt;
    };
}

std::string api_key_variable(Provider p) {
    std::string name(to_string(p));
    for (auto& c : name) {
        c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    return name + "_API_KEY";
}

bool requires_api_key(Provider p) { return p != Provider::ollama; }

std::optional<Secret> resolve_api_key(Provider p, const EnvLookup& env) {
    auto value = env(api_key_variable(p));
    if (!value || value->empty()) {
        return std::nullopt;
    }
    return Secret(std::move(*value));
}

SettingsRegistry::SettingsRegistry() : SettingsRegistry(default_suggestions()) {}

SettingsRegistry::SettingsRegistry(std::vector<SuggestedModel> suggestions)
    : suggestions_(std::move(suggestions)) {}

void SettingsRegistry::set(std::string_view key, std::string_view value) {
    const auto& spec = find_key(key);
    std::lock_guard lock(mutex_);
    Settings next = settings_;
    spec.set(next, value);
    settings_ = std::move(next);
}

std::string SettingsRegistry::get(std::string_view key) const { return render(value(key)); }

SettingValue SettingsRegistry::value(std::string_view key) const {
    const auto& spec = find_key(key);
    std::lock_guard lock(mutex_);
    return spec.get(settings_);
}

Settings SettingsRegistry::snapshot() const {
    std::lock_guard lock(mutex_);
    return settings_;
}

ModelRef SettingsRegistry::model() const {
    std::lock_guard lock(mutex_);
    return settings_.model_ref();
}

ModelRef SettingsRegistry::select_model(std::string_view spec) {
    const auto trimmed = text::trim(spec);
    if (trimmed.empty()) {
        throw Error(ErrorCode::parse_failure, "model name must not be empty");
    }
    ModelRef ref;
    if (trimmed.find(':') != std::string_view::npos) {
        ref = ModelRef::parse(trimmed);
    } else {
        std::vector<Provider> matches;
        for (const auto& m : suggestions_) {
            if (m.name == trimmed) {
                matches.push_back(m.provider);
            }
        }
        if (matches.size() > 1) {
            std::string list;
            for (const auto p : matches) {
                list += list.empty() ? "" : ", ";
                list += std::string(to_string(p)) + ":" + std::string(trimmed);
            }
            throw Error(ErrorCode::ambiguous_model,
                        "model '" + std::string(trimmed) + "' is offered by several providers: " + list);
        }
        std::lock_guard lock(mutex_);
        ref = ModelRef{matches.empty() ? settings_.api : matches.front(), std::string(trimmed)};
    }
    std::lock_guard lock(mutex_);
    settings_.api = ref.provider;
    settings_.model = ref.name;
    return ref;
}

void SettingsRegistry::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::not_found, "cannot read config file " + path.string());
    }
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = text::trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorCode::parse_failure,
                        path.string() + ":" + std::to_string(lineno) + ": expected key=value");
        }
        set(text::trim(t.substr(0, eq)), text::trim(t.substr(eq + 1)));
    }
}

std::span<const SettingInfo> SettingsRegistry::describe() {
    static const std::vector<SettingInfo> infos = [] {
        std::vector<SettingInfo> out;
        for (const auto& spec : key_specs()) {
            out.push_back(spec.info);
        }
        return out;
    }();
    return infos;
}

std::vector<std::string> SettingsRegistry::keys() {
    std::vector<std::string> out;
    for (const auto& spec : key_specs()) {
        out.push_back(spec.info.key);
    }
    return out;
}

} // namespace r2ai
