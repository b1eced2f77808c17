// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "r2ai/config.hpp"
#include "r2ai/conversation.hpp"
#include "r2ai/cost.hpp"
#include "r2ai/error.hpp"
#include "r2ai/tools.hpp"

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace r2ai {

/// Wire formats. chat_completions covers openai, mistral, groq and xai.
enum class Dialect { anthropic, chat_completions, ollama };

/// Throws Error{unsupported_dialect} for providers without an encoder.
Dialect dialect_of(Provider p);
bool supports_tools(Provider p);
std::string default_endpoint(Provider p);

/// Version header sent to the Anthropic messages endpoint.
inline constexpr std::string_view kAnthropicVersion = "2023-06-01";

struct WireRequest {
    Provider provider = Provider::anthropic;
    std::string url;
    std::vector<std::pair<std::string, std::string>> headers;
    nlohmann::ordered_json body;

    /// Copy with every header value replaced by "*****".
    WireRequest redacted() const;
    std::optional<std::string> header(std::string_view name) const;
};

/// Builds the provider-specific request. The system prompt is the leading
/// system message of `conv` if there is one, else settings.system_prompt.
/// All strings are passed through text::escape_binary. Throws
/// Error{precondition} for an empty conversation, Error{tools_unsupported},
/// Error{unsupported_dialect} and Error{missing_key}.
WireRequest encode_request(const Conversation& conv, const ModelRef& model, const Settings& settings,
                           std::optional<std::span<const ToolDefinition>> tools, const std::optional<Secret>& key);

struct RawResponse {
    int status = 0;
    std::string body;
    std::map<std::string, std::string> headers;
};

enum class StopReason { end_turn, tool_use, length, other };

std::string_view to_string(StopReason s);

struct ProviderResponse {
    std::vector<ContentBlock> assistant_blocks;
    std::vector<ToolCall> tool_calls;
    TokenUsage usage;
    StopReason stop_reason = StopReason::other;

    std::string text() const;
    /// The assistant message to append to the conversation.
    ChatMessage to_message(Origin origin) const;
};

/// Throws ProviderError{malformed} when `raw` is not a response of the
/// provider's dialect. Missing usage is estimated from the reply text and
/// flagged.
ProviderResponse decode_response(const RawResponse& raw, Provider provider);

enum class ErrorClass { rate_limit, context_length, auth, transport, malformed, out_of_credit };

std::string_view to_string(ErrorClass c);

class ProviderError : public Error {
public:
    ProviderError(ErrorClass kind, const std::string& message, int http_status = 0);

    ErrorClass kind() const { return kind_; }
    bool retriable() const { return kind_ == ErrorClass::rate_limit; }
    int http_status() const { return http_status_; }

    std::optional<std::int64_t> limit_tokens;
    std::optional<std::int64_t> requested_tokens;
    std::optional<std::int64_t> prompt_tokens;
    std::optional<std::int64_t> completion_tokens;
    std::optional<double> retry_after_seconds;

    /// Advice printed next to the error.
    std::string remediation() const;

private:
    ErrorClass kind_;
    int http_status_;
};

/// Maps a non-2xx reply to the error taxonomy. Total: anything unrecognised
/// becomes malformed.
ProviderError classify_error(const RawResponse& raw, Provider provider);

/// Moves a request over the network.
class Transport {
public:
    virtual ~Transport() = default;
    /// Returns whatever status the server produced. Throws
    /// ProviderError{transport} when no HTTP exchange happened.
    virtual RawResponse post(const WireRequest& request, std::chrono::seconds timeout) = 0;
};

/// HTTP(S) transport backed by cpp-httplib.
std::shared_ptr<Transport> make_http_transport();

/// Encodes, sends with retry on rate limits, and decodes.
class Gateway {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit Gateway(std::shared_ptr<Transport> transport, EnvLookup env = process_env(), Sleeper sleeper = {});

    /// Delivers a 2xx reply or throws the classified ProviderError.
    RawResponse send(const WireRequest& request, std::chrono::seconds timeout);

    ProviderResponse complete(const Conversation& conv, const ModelRef& model, const Settings& settings,
                              std::optional<std::span<const ToolDefinition>> tools = std::nullopt);

    std::optional<Secret> key_for(Provider p) const { return resolve_api_key(p, env_); }

private:
    std::shared_ptr<Transport> transport_;
    EnvLookup env_;
    Sleeper sleeper_;
};

} // namespace r2ai
