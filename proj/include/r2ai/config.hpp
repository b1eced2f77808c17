// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace r2ai {

enum class Provider { anthropic, openai, mistral, gemini, groq, xai, ollama };

std::string_view to_string(Provider p);
std::optional<Provider> parse_provider(std::string_view name);
std::span<const Provider> all_providers();

/// A model is referenced by its provider plus the provider's own model name.
struct ModelRef {
    Provider provider = Provider::anthropic;
    std::string name;

    /// "provider:model_name"
    std::string to_string() const;
    /// "provider/model_name", the form shown in the status line.
    std::string display() const;
    /// Parses "provider:model_name". Throws Error{unknown_provider} or
    /// Error{parse_failure}.
    static ModelRef parse(std::string_view spec);

    friend bool operator==(const ModelRef&, const ModelRef&) = default;
};

struct SuggestedModel {
    Provider provider;
    std::string name;
};

/// Models offered by `-m` when no argument is given.
std::span<const SuggestedModel> suggested_models();

/// Opaque wrapper so API keys never reach a stream by accident.
class Secret {
public:
    explicit Secret(std::string value) : value_(std::move(value)) {}
    const std::string& reveal() const { return value_; }

private:
    std::string value_;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the process environment.
EnvLookup process_env();

/// Name of the environment variable holding the key for `p`.
std::string api_key_variable(Provider p);

/// True for providers that reject requests without a key.
bool requires_api_key(Provider p);

/// Looks up the provider key. Keyless providers yield nullopt without
/// complaint; a missing key is only an error once a request is built.
std::optional<Secret> resolve_api_key(Provider p, const EnvLookup& env = process_env());

struct Settings {
    Provider api = Provider::anthropic;
    std::string model = "claude-3-7-sonnet-20250219";
    double temperature = 0.002;
    double top_p = 0.95;
    std::int64_t max_tokens = 4096;
    std::int64_t max_input_tokens = 32000;
    std::int64_t auto_max_runs = 15;
    std::string auto_init_commands = "aaa;iI;afl";
    bool auto_resend_init = true;
    std::string auto_system_prompt;
    std::int64_t auto_tool_timeout = 60;
    std::string system_prompt;
    std::string output_language = "C";
    bool concise = false;
    std::string pricing_path;
    std::string templates_path;
    std::string endpoint;
    std::int64_t request_timeout = 120;
    std::int64_t retry_max = 3;
    std::int64_t retry_base_ms = 1000;
    std::string r2_bin = "radare2";
    std::int64_t r2_timeout = 30;
    std::int64_t r2_output_cap = 65536;
    std::string python_interpreter;
    std::string js_interpreter;
    std::string scratch_dir;

    ModelRef model_ref() const { return ModelRef{api, model}; }
};

using SettingValue = std::variant<std::string, double, std::int64_t, bool, Provider>;

struct SettingInfo {
    std::string key;
    std::string type;
    std::string default_value;
    std::string description;
};

/// Registry of every `r2ai.*` key. Mutations are serialized; readers take
/// a snapshot copy.
class SettingsRegistry {
public:
    SettingsRegistry();
    explicit SettingsRegistry(std::vector<SuggestedModel> suggestions);

    /// Keys may carry an optional "r2ai." prefix.
    void set(std::string_view key, std::string_view value);
    std::string get(std::string_view key) const;
    SettingValue value(std::string_view key) const;

    Settings snapshot() const;
    ModelRef model() const;

    /// Accepts "provider:name" or a bare name. Bare names found in the
    /// suggestion list take that provider; unknown bare names keep the
    /// current provider. The conversation is not touched.
    ModelRef select_model(std::string_view spec);

    /// Applies `key=value` lines; blank lines and '#' comments are skipped.
    void load_file(const std::filesystem::path& path);

    static std::span<const SettingInfo> describe();
    static std::vector<std::string> keys();

private:
    mutable std::mutex mutex_;
    Settings settings_;
    std::vector<SuggestedModel> suggestions_;
};

} // namespace r2ai
