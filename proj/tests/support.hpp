// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "r2ai/config.hpp"
#include "r2ai/provider.hpp"

#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace r2ai::test {

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(R2AI_TEST_FIXTURES) / name;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline EnvLookup fake_env(std::map<std::string, std::string> vars = {{"ANTHROPIC_API_KEY", "sk-ant-test-secret"},
                                                                     {"OPENAI_API_KEY", "sk-openai-test-secret"},
                                                                     {"MISTRAL_API_KEY", "mistral-test-secret"}}) {
    return [vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
        if (const auto it = vars.find(name); it != vars.end()) {
            return it->second;
        }
        return std::nullopt;
    };
}

struct ScriptedCall {
    std::string id;
    std::string name;
    nlohmann::json input;
};

inline RawResponse anthropic_text(const std::string& text, int in = 100, int out = 20) {
    nlohmann::json body{{"id", "msg_1"},
                        {"type", "message"},
                        {"role", "assistant"},
                        {"content", nlohmann::json::array({{{"type", "text"}, {"text", text}}})},
                        {"stop_reason", "end_turn"},
                        {"usage", {{"input_tokens", in}, {"output_tokens", out}}}};
    return RawResponse{200, body.dump(), {}};
}

inline RawResponse anthropic_tools(const std::vector<ScriptedCall>& calls, int in = 100, int out = 20) {
    nlohmann::json content = nlohmann::json::array();
    for (const auto& c : calls) {
        content.push_back({{"type", "tool_use"}, {"id", c.id}, {"name", c.name}, {"input", c.input}});
    }
    nlohmann::json body{{"id", "msg_1"},
                        {"type", "message"},
                        {"role", "assistant"},
                        {"content", content},
                        {"stop_reason", "tool_use"},
                        {"usage", {{"input_tokens", in}, {"output_tokens", out}}}};
    return RawResponse{200, body.dump(), {}};
}

/// Transport replaying canned responses (or computing them) and keeping
/// every request it saw.
class ScriptedTransport : public Transport {
public:
    using Responder = std::function<RawResponse(const WireRequest&, std::size_t index)>;

    ScriptedTransport() = default;
    explicit ScriptedTransport(std::vector<RawResponse> script) : script_(script.begin(), script.end()) {}
    explicit ScriptedTransport(Responder responder) : responder_(std::move(responder)) {}

    RawResponse post(const WireRequest& request, std::chrono::seconds) override {
        std::lock_guard lock(mutex_);
        requests_.push_back(request);
        if (responder_) {
            return responder_(request, requests_.size() - 1);
        }
        if (script_.empty()) {
            return anthropic_text("(script exhausted)");
        }
        auto r = script_.front();
        script_.pop_front();
        return r;
    }

    std::vector<WireRequest> requests() const {
        std::lock_guard lock(mutex_);
        return requests_;
    }

    std::size_t count() const {
        std::lock_guard lock(mutex_);
        return requests_.size();
    }

private:
    mutable std::mutex mutex_;
    std::deque<RawResponse> script_;
    Responder responder_;
    std::vector<WireRequest> requests_;
};

} // namespace r2ai::test
