// SPDX-License-Identifier: Apache-2.0

#include "r2ai/provider.hpp"

#include "r2ai/text.hpp"

#include <algorithm>
#include <atomic>
#include <regex>
#include <thread>

#include <spdlog/spdlog.h>

namespace r2ai {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void sanitize(ordered_json& j) {
    if (j.is_string()) {
        auto& s = j.get_ref<std::string&>();
        if (!text::is_valid_text(s)) {
            s = text::escape_binary(s);
        }
    } else if (j.is_structured()) {
        for (auto& v : j) {
            sanitize(v);
        }
    }
}

std::string system_prompt_of(const Conversation& conv, const Settings& settings) {
    if (!conv.empty() && conv.messages().front().role == Role::system) {
        return conv.messages().front().text();
    }
    return settings.system_prompt;
}

ordered_json anthropic_messages(const Conversation& conv) {
    ordered_json messages = ordered_json::array();
    bool last_was_tool_result = false;
    for (const auto& m : conv.messages()) {
        if (m.role == Role::system) {
            continue;
        }
        ordered_json content = ordered_json::array();
        for (const auto& block : m.blocks) {
            std::visit(overloaded{
                           [&](const TextBlock& b) {
                               if (!b.text.empty() || m.role == Role::user) {
                                   ordered_json t;
                                   t["type"] = "text";
                                   t["text"] = b.text;
                                   content.push_back(std::move(t));
                               }
                           },
                           [&](const ToolUseBlock& b) {
                               ordered_json t;
                               t["type"] = "tool_use";
                               t["id"] = b.id;
                               t["name"] = b.name;
                               t["input"] = b.input;
                               content.push_back(std::move(t));
                           },
                           [&](const ToolResultBlock& b) {
                               ordered_json t;
                               t["type"] = "tool_result";
                               t["tool_use_id"] = b.tool_use_id;
                               t["content"] = b.content;
                               if (b.is_error) {
                                   t["is_error"] = true;
                               }
                               content.push_back(std::move(t));
                           },
                       },
                       block);
        }
        const bool is_tool_result = m.role == Role::tool_result;
        // Results answering one assistant turn travel in a single user message.
        if (is_tool_result && last_was_tool_result) {
            for (auto& c : content) {
                messages.back()["content"].push_back(std::move(c));
            }
            continue;
        }
        ordered_json msg;
        msg["role"] = m.role == Role::assistant ? "assistant" : "user";
        msg["content"] = std::move(content);
        messages.push_back(std::move(msg));
        last_was_tool_result = is_tool_result;
    }
    return messages;
}

ordered_json openai_style_messages(const Conversation& conv, const std::string& system_prompt, Dialect dialect) {
    ordered_json messages = ordered_json::array();
    if (!system_prompt.empty()) {
        ordered_json sys;
        sys["role"] = "system";
        sys["content"] = system_prompt;
        messages.push_back(std::move(sys));
    }
    for (const auto& m : conv.messages()) {
        switch (m.role) {
        case Role::system: break;
        case Role::user: {
            ordered_json msg;
            msg["role"] = "user";
            msg["content"] = m.text();
            messages.push_back(std::move(msg));
            break;
        }
        case Role::assistant: {
            ordered_json msg;
            msg["role"] = "assistant";
            const auto text = m.text();
            const auto uses = m.tool_uses();
            if (text.empty() && !uses.empty() && dialect == Dialect::chat_completions) {
                msg["content"] = nullptr;
            } else {
                msg["content"] = text;
            }
            if (!uses.empty()) {
                ordered_json calls = ordered_json::array();
                for (const auto& u : uses) {
                    ordered_json fn;
                    fn["name"] = u.name;
                    if (dialect == Dialect::ollama) {
                        fn["arguments"] = u.input;
                    } else {
                        fn["arguments"] = u.input.dump();
                    }
                    ordered_json call;
                    if (dialect == Dialect::chat_completions) {
                        call["id"] = u.id;
                        call["type"] = "function";
                    }
                    call["function"] = std::move(fn);
                    calls.push_back(std::move(call));
                }
                msg["tool_calls"] = std::move(calls);
            }
            messages.push_back(std::move(msg));
            break;
        }
        case Role::tool_result:
            for (const auto& block : m.blocks) {
                if (const auto* r = std::get_if<ToolResultBlock>(&block)) {
                    ordered_json msg;
                    msg["role"] = "tool";
                    if (dialect == Dialect::chat_completions) {
                        msg["tool_call_id"] = r->tool_use_id;
                    }
                    msg["content"] = r->content;
                    messages.push_back(std::move(msg));
                }
            }
            break;
        }
    }
    return messages;
}

StopReason normalize_stop(StopReason reported, bool has_calls) {
    if (has_calls) {
        return StopReason::tool_use;
    }
    return reported == StopReason::tool_use ? StopReason::other : reported;
}

[[noreturn]] void malformed(const std::string& why) { throw ProviderError(ErrorClass::malformed, why); }

json parse_body(const RawResponse& raw) {
    auto j = json::parse(raw.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        malformed("response body is not a JSON object");
    }
    return j;
}

std::int64_t int_field(const json& j, const char* key) {
    if (const auto it = j.find(key); it != j.end() && it->is_number_integer()) {
        return it->get<std::int64_t>();
    }
    return -1;
}

void fill_usage(ProviderResponse& r, std::int64_t in, std::int64_t out) {
    if (in >= 0 && out >= 0) {
        r.usage = TokenUsage{in, out, false};
        return;
    }
    std::size_t est = estimate_tokens(r.text());
    for (const auto& c : r.tool_calls) {
        est += estimate_tokens(c.name + " " + c.args.dump());
    }
    r.usage = TokenUsage{std::max<std::int64_t>(in, 0), out >= 0 ? out : static_cast<std::int64_t>(est), true};
}

ProviderResponse decode_anthropic(const json& j) {
    const auto content = j.find("content");
    if (content == j.end() || !content->is_array()) {
        malformed("anthropic response has no content array");
    }
    ProviderResponse r;
    for (const auto& block : *content) {
        const auto type = block.value("type", "");
        if (type == "text") {
            r.assistant_blocks.emplace_back(TextBlock{block.value("text", "")});
        } else if (type == "tool_use") {
            if (!block.contains("id") || !block.contains("name")) {
                malformed("tool_use block without id or name");
            }
            ToolCall call{block.at("id").get<std::string>(), block.at("name").get<std::string>(),
                          block.value("input", json::object()), block.dump()};
            r.assistant_blocks.emplace_back(ToolUseBlock{call.id, call.name, call.args});
            r.tool_calls.push_back(std::move(call));
        }
    }
    const auto stop = j.value("stop_reason", "");
    StopReason reported = StopReason::other;
    if (stop == "end_turn" || stop == "stop_sequence") {
        reported = StopReason::end_turn;
    } else if (stop == "tool_use") {
        reported = StopReason::tool_use;
    } else if (stop == "max_tokens") {
        reported = StopReason::length;
    }
    r.stop_reason = normalize_stop(reported, !r.tool_calls.empty());
    const auto usage = j.value("usage", json::object());
    fill_usage(r, int_field(usage, "input_tokens"), int_field(usage, "output_tokens"));
    return r;
}

json parse_arguments(const json& args) {
    if (args.is_object()) {
        return args;
    }
    if (args.is_string()) {
        const auto& s = args.get_ref<const std::string&>();
        if (text::trim(s).empty()) {
            return json::object();
        }
        auto parsed = json::parse(s, nullptr, false);
        if (!parsed.is_discarded()) {
            return parsed;
        }
    }
    malformed("tool call arguments are not valid JSON");
}

ProviderResponse decode_openai_style(const json& j, Dialect dialect) {
    const json* message = nullptr;
    std::string finish;
    if (dialect == Dialect::chat_completions) {
        const auto choices = j.find("choices");
        if (choices == j.end() || !choices->is_array() || choices->empty() || !(*choices)[0].contains("message")) {
            malformed("chat completion response has no choices");
        }
        message = &(*choices)[0].at("message");
        finish = (*choices)[0].value("finish_reason", "");
    } else {
        const auto it = j.find("message");
        if (it == j.end() || !it->is_object()) {
            malformed("ollama response has no message");
        }
        message = &*it;
        finish = j.value("done_reason", "stop");
    }
    ProviderResponse r;
    if (const auto c = message->find("content"); c != message->end() && c->is_string() && !c->get<std::string>().empty()) {
        r.assistant_blocks.emplace_back(TextBlock{c->get<std::string>()});
    }
    if (const auto calls = message->find("tool_calls"); calls != message->end() && calls->is_array()) {
        for (const auto& call : *calls) {
            const auto fn = call.find("function");
            if (fn == call.end() || !fn->contains("name")) {
                malformed("tool call without a function name");
            }
            ToolCall tc;
            if (call.contains("id") && call.at("id").is_string()) {
                tc.id = call.at("id").get<std::string>();
            } else {
                static std::atomic<std::uint64_t> next_id{0};
                tc.id = "call_" + std::to_string(next_id++);
            }
            tc.name = fn->at("name").get<std::string>();
            tc.args = parse_arguments(fn->value("arguments", json::object()));
            tc.raw = call.dump();
            r.assistant_blocks.emplace_back(ToolUseBlock{tc.id, tc.name, tc.args});
            r.tool_calls.push_back(std::move(tc));
        }
    }
    StopReason reported = StopReason::other;
    if (finish == "stop") {
        reported = StopReason::end_turn;
    } else if (finish == "tool_calls") {
        reported = StopReason::tool_use;
    } else if (finish == "length") {
        reported = StopReason::length;
    }
    r.stop_reason = normalize_stop(reported, !r.tool_calls.empty());
    if (dialect == Dialect::chat_completions) {
        const auto usage = j.value("usage", json::object());
        fill_usage(r, int_field(usage, "prompt_tokens"), int_field(usage, "completion_tokens"));
    } else {
        fill_usage(r, int_field(j, "prompt_eval_count"), int_field(j, "eval_count"));
    }
    return r;
}

std::optional<std::int64_t> capture_int(const std::string& s, const std::regex& re, std::size_t group = 1) {
    std::smatch m;
    if (std::regex_search(s, m, re) && m.size() > group) {
        return std::stoll(m[group].str());
    }
    return std::nullopt;
}

std::string json_text(const json& e, const char* key) {
    if (const auto it = e.find(key); it != e.end()) {
        if (it->is_string()) {
            return it->get<std::string>();
        }
        if (!it->is_null()) {
            return it->dump();
        }
    }
    return {};
}

} // namespace

Dialect dialect_of(Provider p) {
    switch (p) {
    case Provider::anthropic: return Dialect::anthropic;
    case Provider::openai:
    case Provider::mistral:
    case Provider::groq:
    case Provider::xai: return Dialect::chat_completions;
    case Provider::ollama: return Dialect::ollama;
    case Provider::gemini: break;
    }
    throw Error(ErrorCode::unsupported_dialect, "provider '" + std::string(to_string(p)) + "' has no request encoder");
}

bool supports_tools(Provider p) { return p != Provider::gemini; }

std::string default_endpoint(Provider p) {
    switch (p) {
    case Provider::anthropic: return "https://api.anthropic.com/v1/messages";
    case Provider::openai: return "https://api.openai.com/v1/chat/completions";
    case Provider::mistral: return "https://api.mistral.ai/v1/chat/completions";
    case Provider::groq: return "https://api.groq.com/openai/v1/chat/completions";
    case Provider::xai: return "https://api.x.ai/v1/chat/completions";
    case Provider::ollama: return "http://localhost:11434/api/chat";
    case Provider::gemini: return "https://generativelanguage.googleapis.com/v1beta";
    }
    return {};
}

WireRequest WireRequest::redacted() const {
    WireRequest copy = *this;
    for (auto& [name, value] : copy.headers) {
        value = "*****";
    }
    return copy;
}

std::optional<std::string> WireRequest::header(std::string_view name) const {
    const auto lowered = text::to_lower(name);
    for (const auto& [k, v] : headers) {
        if (text::to_lower(k) == lowered) {
            return v;
        }
    }
    return std::nullopt;
}

WireRequest encode_request(const Conversation& conv, const ModelRef& model, const Settings& settings,
                           std::optional<std::span<const ToolDefinition>> tools, const std::optional<Secret>& key) {
    const bool has_content = std::any_of(conv.messages().begin(), conv.messages().end(),
                                         [](const ChatMessage& m) { return m.role != Role::system; });
    if (!has_content) {
        throw Error(ErrorCode::precondition, "cannot send an empty conversation");
    }
    if (tools && !tools->empty() && !supports_tools(model.provider)) {
        throw Error(ErrorCode::tools_unsupported,
                    "provider '" + std::string(to_string(model.provider)) + "' has no native tool calling");
    }
    const Dialect dialect = dialect_of(model.provider);
    if (requires_api_key(model.provider) && !key) {
        throw Error(ErrorCode::missing_key, "no API key for " + std::string(to_string(model.provider)) +
                                                "; set the " + api_key_variable(model.provider) +
                                                " environment variable");
    }

    WireRequest req;
    req.provider = model.provider;
    req.url = settings.endpoint.empty() ? default_endpoint(model.provider) : settings.endpoint;
    const auto system_prompt = system_prompt_of(conv, settings);
    const bool with_tools = tools && !tools->empty();

    ordered_json body;
    switch (dialect) {
    case Dialect::anthropic:
        req.headers = {{"anthropic-version", std::string(kAnthropicVersion)},
                       {"x-api-key", key->reveal()},
                       {"accept", "application/json"},
                       {"content-type", "application/json"}};
        body["model"] = model.name;
        if (!system_prompt.empty()) {
            body["system"] = system_prompt;
        }
        body["messages"] = anthropic_messages(conv);
        body["temperature"] = settings.temperature;
        body["top_p"] = settings.top_p;
        body["max_tokens"] = settings.max_tokens;
        if (with_tools) {
            body["tools"] = ordered_json::array();
            for (const auto& t : *tools) {
                body["tools"].push_back(t.to_anthropic());
            }
        }
        break;
    case Dialect::chat_completions:
        req.headers = {{"Authorization", "Bearer " + key->reveal()}, {"Content-Type", "application/json"}};
        body["stream"] = false;
        body["model"] = model.name;
        body["messages"] = openai_style_messages(conv, system_prompt, dialect);
        body["temperature"] = settings.temperature;
        body["top_p"] = settings.top_p;
        body["max_tokens"] = settings.max_tokens;
        if (with_tools) {
            body["tools"] = ordered_json::array();
            for (const auto& t : *tools) {
                body["tools"].push_back(t.to_function());
            }
        }
        break;
    case Dialect::ollama:
        req.headers = {{"Content-Type", "application/json"}};
        if (key) {
            req.headers.emplace_back("Authorization", "Bearer " + key->reveal());
        }
        body["stream"] = false;
        body["model"] = model.name;
        body["messages"] = openai_style_messages(conv, system_prompt, dialect);
        body["options"] = {{"temperature", settings.temperature},
                           {"top_p", settings.top_p},
                           {"num_predict", settings.max_tokens}};
        if (with_tools) {
            body["tools"] = ordered_json::array();
            for (const auto& t : *tools) {
                body["tools"].push_back(t.to_function());
            }
        }
        break;
    }
    sanitize(body);
    req.body = std::move(body);
    return req;
}

std::string_view to_string(StopReason s) {
    switch (s) {
    case StopReason::end_turn: return "end_turn";
    case StopReason::tool_use: return "tool_use";
    case StopReason::length: return "length";
    case StopReason::other: return "other";
    }
    return "other";
}

std::string ProviderResponse::text() const {
    std::string out;
    for (const auto& b : assistant_blocks) {
        if (const auto* t = std::get_if<TextBlock>(&b)) {
            if (!out.empty() && !t->text.empty()) {
                out += '\n';
            }
            out += t->text;
        }
    }
    return out;
}

ChatMessage ProviderResponse::to_message(Origin origin) const {
    ChatMessage msg;
    msg.role = Role::assistant;
    msg.origin = origin;
    for (const auto& b : assistant_blocks) {
        if (const auto* t = std::get_if<TextBlock>(&b)) {
            msg.blocks.emplace_back(TextBlock{text::escape_binary(t->text)});
        } else {
            msg.blocks.push_back(b);
        }
    }
    if (msg.blocks.empty()) {
        msg.blocks.emplace_back(TextBlock{""});
    }
    return msg;
}

ProviderResponse decode_response(const RawResponse& raw, Provider provider) {
    const auto j = parse_body(raw);
    switch (dialect_of(provider)) {
    case Dialect::anthropic: return decode_anthropic(j);
    case Dialect::chat_completions: return decode_openai_style(j, Dialect::chat_completions);
    case Dialect::ollama: return decode_openai_style(j, Dialect::ollama);
    }
    malformed("unknown dialect");
}

std::string_view to_string(ErrorClass c) {
    switch (c) {
    case ErrorClass::rate_limit: return "rate_limit";
    case ErrorClass::context_length: return "context_length";
    case ErrorClass::auth: return "auth";
    case ErrorClass::transport: return "transport";
    case ErrorClass::malformed: return "malformed";
    case ErrorClass::out_of_credit: return "out_of_credit";
    }
    return "malformed";
}

ProviderError::ProviderError(ErrorClass kind, const std::string& message, int http_status)
    : Error(ErrorCode::provider, std::string(to_string(kind)) + ": " + message), kind_(kind), http_status_(http_status) {}

std::string ProviderError::remediation() const {
    switch (kind_) {
    case ErrorClass::context_length:
        return "reduce the length of the messages: reset the context (-R), drop messages (-L-N), narrow "
               "auto.init_commands (e.g. aaa;afl~main) or lower max_input_tokens";
    case ErrorClass::rate_limit: return "rate limited; wait a moment and retry";
    case ErrorClass::out_of_credit: return "the account has no credit left; top it up or switch provider";
    case ErrorClass::auth: return "the provider rejected the API key";
    case ErrorClass::transport: return "could not reach the provider; check the endpoint and network";
    case ErrorClass::malformed: return "unexpected reply from the provider";
    }
    return {};
}

ProviderError classify_error(const RawResponse& raw, Provider provider) {
    (void)provider;
    const auto j = json::parse(raw.body, nullptr, false);
    json e = json::object();
    if (j.is_object()) {
        if (const auto it = j.find("error"); it != j.end()) {
            if (it->is_object()) {
                e = *it;
            } else if (it->is_string()) {
                e["message"] = *it;
            }
        } else {
            e = j;
        }
    }
    const std::string message = e.is_object() ? json_text(e, "message") : std::string{};
    const std::string type = e.is_object() ? json_text(e, "type") : std::string{};
    const std::string code = e.is_object() ? json_text(e, "code") : std::string{};
    const std::string lower = text::to_lower(message);
    const std::string detail = message.empty() ? "HTTP " + std::to_string(raw.status) : message;
    const int status = raw.status;

    const auto has = [&](std::string_view needle) { return lower.find(needle) != std::string::npos; };

    if (code == "context_length_exceeded" || has("maximum context length") || has("prompt is too long") ||
        has("context window") || has("context length")) {
        ProviderError err(ErrorClass::context_length, detail, status);
        static const std::regex limit_re(R"(maximum context length is (\d+))");
        static const std::regex requested_re(R"((?:requested|resulted in) (\d+) tokens)");
        static const std::regex split_re(R"((\d+) in the messages, (\d+) in the completion)");
        static const std::regex too_long_re(R"((\d+) tokens > (\d+) maximum)");
        err.limit_tokens = capture_int(message, limit_re);
        err.requested_tokens = capture_int(message, requested_re);
        err.prompt_tokens = capture_int(message, split_re, 1);
        err.completion_tokens = capture_int(message, split_re, 2);
        if (!err.requested_tokens) {
            err.requested_tokens = capture_int(message, too_long_re, 1);
        }
        if (!err.limit_tokens) {
            err.limit_tokens = capture_int(message, too_long_re, 2);
        }
        if (!err.requested_tokens && err.prompt_tokens && err.completion_tokens) {
            err.requested_tokens = *err.prompt_tokens + *err.completion_tokens;
        }
        return err;
    }
    if (code == "insufficient_quota" || code == "billing_hard_limit_reached" || code == "billing_not_active" ||
        type == "insufficient_quota" || status == 402 || has("credit balance") || has("exceeded your current quota") ||
        has("insufficient credit")) {
        return ProviderError(ErrorClass::out_of_credit, detail, status);
    }
    if (status == 401 || status == 403 || type == "authentication_error" || type == "permission_error" ||
        code == "invalid_api_key") {
        return ProviderError(ErrorClass::auth, detail, status);
    }
    if (status == 429 || status == 529 || type == "rate_limit_error" || type == "overloaded_error" ||
        code == "rate_limit_exceeded" || has("rate limit")) {
        ProviderError err(ErrorClass::rate_limit, detail, status);
        for (const auto& [k, v] : raw.headers) {
            if (text::to_lower(k) == "retry-after") {
                try {
                    err.retry_after_seconds = std::stod(v);
                } catch (const std::exception&) {
                }
            }
        }
        if (!err.retry_after_seconds) {
            static const std::regex hint_re(R"(try again in ([0-9.]+)\s*(ms|s))");
            std::smatch m;
            if (std::regex_search(lower, m, hint_re)) {
                const double v = std::stod(m[1].str());
                err.retry_after_seconds = m[2].str() == "ms" ? v / 1000.0 : v;
            }
        }
        return err;
    }
    if (status >= 500) {
        return ProviderError(ErrorClass::transport, "server error: " + detail, status);
    }
    return ProviderError(ErrorClass::malformed, detail, status);
}

Gateway::Gateway(std::shared_ptr<Transport> transport, EnvLookup env, Sleeper sleeper)
    : transport_(std::move(transport)), env_(std::move(env)), sleeper_(std::move(sleeper)) {
    if (!sleeper_) {
        sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    }
}

RawResponse Gateway::send(const WireRequest& request, std::chrono::seconds timeout) {
    auto raw = transport_->post(request, timeout);
    if (raw.status < 200 || raw.status >= 300) {
        throw classify_error(raw, request.provider);
    }
    return raw;
}

ProviderResponse Gateway::complete(const Conversation& conv, const ModelRef& model, const Settings& settings,
                                   std::optional<std::span<const ToolDefinition>> tools) {
    const auto request = encode_request(conv, model, settings, tools, key_for(model.provider));
    spdlog::debug("request to {} ({}), {} messages", request.url, model.display(), conv.size());
    const auto timeout = std::chrono::seconds(settings.request_timeout);
    RawResponse raw;
    for (std::int64_t attempt = 0;; ++attempt) {
        try {
            raw = send(request, timeout);
            break;
        } catch (const ProviderError& e) {
            if (!e.retriable() || attempt >= settings.retry_max) {
                spdlog::debug("request failed: {}", e.what());
                throw;
            }
            auto delay = std::chrono::milliseconds(settings.retry_base_ms << std::min<std::int64_t>(attempt, 20));
            if (e.retry_after_seconds) {
                delay = std::max(delay, std::chrono::milliseconds(static_cast<long long>(*e.retry_after_seconds * 1000)));
            }
            spdlog::debug("rate limited, retrying in {} ms", delay.count());
            sleeper_(delay);
        }
    }
    auto response = decode_response(raw, model.provider);
    if (response.usage.estimated && response.usage.input_tokens == 0) {
        response.usage.input_tokens = static_cast<std::int64_t>(estimate_tokens(request.body.dump()));
    }
    return response;
}

} // namespace r2ai
