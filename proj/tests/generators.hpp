// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "r2ai/conversation.hpp"

#include <random>
#include <string>

namespace r2ai::test {

inline std::string random_text(std::mt19937& rng, std::size_t max_len) {
    static constexpr std::string_view alphabet = "abcdefghijklmnopqrstuvwxyz0123456789 \n{}();=";
    std::uniform_int_distribution<std::size_t> len(1, std::max<std::size_t>(1, max_len));
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    std::string s(len(rng), ' ');
    for (auto& c : s) {
        c = alphabet[pick(rng)];
    }
    if (rng() % 8 == 0) {
        s += "\xc3\xa9\xe2\x82\xac";
    }
    return s;
}

/// A valid conversation: optional system prompt, then a mix of user turns,
/// plain answers and tool exchanges. Always holds at least one user message.
inline Conversation random_conversation(std::mt19937& rng) {
    Conversation conv("prop");
    if (rng() % 2 == 0) {
        conv.append(ChatMessage::system(random_text(rng, 400)));
    }
    const auto turns = 1 + rng() % 12;
    int next_id = 0;
    for (std::size_t t = 0; t < turns; ++t) {
        conv.append(ChatMessage::user(random_text(rng, 300)));
        const auto steps = rng() % 4;
        for (std::size_t s = 0; s < steps; ++s) {
            if (rng() % 3 == 0) {
                conv.append(ChatMessage::assistant(random_text(rng, 200)));
                continue;
            }
            ChatMessage call;
            call.role = Role::assistant;
            call.origin = Origin::auto_loop;
            const auto n = 1 + rng() % 2;
            std::vector<std::string> ids;
            for (std::size_t k = 0; k < n; ++k) {
                ids.push_back("call_" + std::to_string(next_id++));
                call.blocks.emplace_back(ToolUseBlock{ids.back(), "r2cmd", {{"command", random_text(rng, 20)}}});
            }
            conv.append(std::move(call));
            for (const auto& id : ids) {
                conv.append(ChatMessage::tool_result(id, random_text(rng, 3000)));
            }
        }
    }
    if (rng() % 3 == 0) {
        conv.append(ChatMessage::user(random_text(rng, 300)));
    }
    return conv;
}

} // namespace r2ai::test
