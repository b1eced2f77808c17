// SPDX-License-Identifier: Apache-2.0

#include "r2ai/conversation.hpp"

#include "r2ai/error.hpp"
#include "r2ai/text.hpp"

#include <algorithm>
#include <optional>
#include <random>
#include <set>
#include <sstream>

namespace r2ai {

using nlohmann::json;

namespace {

constexpr int kLogVersion = 1;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string random_id() {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    std::ostringstream os;
    os << std::hex << rng();
    return os.str();
}

bool json_strings_valid(const json& j) {
    switch (j.type()) {
    case json::value_t::string: return text::is_valid_text(j.get_ref<const std::string&>());
    case json::value_t::object:
        for (const auto& [k, v] : j.items()) {
            if (!text::is_valid_text(k) || !json_strings_valid(v)) {
                return false;
            }
        }
        return true;
    case json::value_t::array:
        return std::all_of(j.begin(), j.end(), [](const json& v) { return json_strings_valid(v); });
    default: return true;
    }
}

[[noreturn]] void invalid(const std::string& why) { throw Error(ErrorCode::invalid_message, why); }

Role parse_role(std::string_view s) {
    for (const auto r : {Role::system, Role::user, Role::assistant, Role::tool_result}) {
        if (to_string(r) == s) {
            return r;
        }
    }
    throw Error(ErrorCode::parse_failure, "unknown role '" + std::string(s) + "'");
}

Origin parse_origin(std::string_view s) {
    for (const auto o : {Origin::human, Origin::direct_template, Origin::auto_loop, Origin::tool_output}) {
        if (to_string(o) == s) {
            return o;
        }
    }
    throw Error(ErrorCode::parse_failure, "unknown origin '" + std::string(s) + "'");
}

// Index ranges [first, last) of message groups: a message followed by the
// tool_result messages that answer it.
std::vector<std::pair<std::size_t, std::size_t>> group_ranges(const std::vector<ChatMessage>& msgs) {
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    for (std::size_t i = 0; i < msgs.size(); ++i) {
        if (msgs[i].role == Role::tool_result && !groups.empty() && msgs[i - 1].role != Role::system) {
            groups.back().second = i + 1;
        } else {
            groups.emplace_back(i, i + 1);
        }
    }
    return groups;
}

} // namespace

std::string_view to_string(Role r) {
    switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    case Role::tool_result: return "tool_result";
    }
    return "unknown";
}

std::string_view to_string(Origin o) {
    switch (o) {
    case Origin::human: return "human";
    case Origin::direct_template: return "direct_template";
    case Origin::auto_loop: return "auto_loop";
    case Origin::tool_output: return "tool_output";
    }
    return "unknown";
}

std::string estimation_text(const ContentBlock& block) {
    return std::visit(overloaded{
                          [](const TextBlock& b) { return b.text; },
                          [](const ToolUseBlock& b) { return b.name + " " + b.input.dump(); },
                          [](const ToolResultBlock& b) { return b.content; },
                      },
                      block);
}

ChatMessage ChatMessage::user(std::string text, Origin origin) {
    return ChatMessage{Role::user, {TextBlock{std::move(text)}}, origin};
}

ChatMessage ChatMessage::assistant(std::string text, Origin origin) {
    return ChatMessage{Role::assistant, {TextBlock{std::move(text)}}, origin};
}

ChatMessage ChatMessage::system(std::string text) {
    return ChatMessage{Role::system, {TextBlock{std::move(text)}}, Origin::direct_template};
}

ChatMessage ChatMessage::tool_result(std::string tool_use_id, std::string content, bool is_error) {
    return ChatMessage{Role::tool_result,
                       {ToolResultBlock{std::move(tool_use_id), std::move(content), is_error}},
                       Origin::tool_output};
}

std::string ChatMessage::text() const {
    std::string out;
    for (const auto& b : blocks) {
        if (const auto* t = std::get_if<TextBlock>(&b)) {
            if (!out.empty() && !t->text.empty()) {
                out += '\n';
            }
            out += t->text;
        }
    }
    return out;
}

std::vector<ToolUseBlock> ChatMessage::tool_uses() const {
    std::vector<ToolUseBlock> out;
    for (const auto& b : blocks) {
        if (const auto* t = std::get_if<ToolUseBlock>(&b)) {
            out.push_back(*t);
        }
    }
    return out;
}

Conversation::Conversation() : id_(random_id()) {}

Conversation::Conversation(std::string id) : id_(std::move(id)) {}

void Conversation::append(ChatMessage msg) {
    if (msg.blocks.empty()) {
        invalid("message has no content blocks");
    }
    if (msg.role == Role::system && !messages_.empty()) {
        invalid("a system message may only be the first message");
    }
    for (const auto& block : msg.blocks) {
        std::visit(overloaded{
                       [&](const TextBlock& b) {
                           if (msg.role == Role::tool_result) {
                               invalid("tool_result messages carry only tool_result blocks");
                           }
                           if (!text::is_valid_text(b.text)) {
                               invalid("text block contains binary data");
                           }
                       },
                       [&](const ToolUseBlock& b) {
                           if (msg.role != Role::assistant) {
                               invalid("tool_use blocks belong to assistant messages");
                           }
                           if (b.id.empty() || b.name.empty()) {
                               invalid("tool_use block needs an id and a name");
                           }
                           if (!text::is_valid_text(b.id) || !text::is_valid_text(b.name) ||
                               !json_strings_valid(b.input)) {
                               invalid("tool_use block contains binary data");
                           }
                       },
                       [&](const ToolResultBlock& b) {
                           if (msg.role != Role::tool_result) {
                               invalid("tool_result blocks belong to tool_result messages");
                           }
                           if (!text::is_valid_text(b.content)) {
                               invalid("tool result contains binary data");
                           }
                           const bool known = std::any_of(messages_.begin(), messages_.end(), [&](const ChatMessage& m) {
                               const auto uses = m.tool_uses();
                               return std::any_of(uses.begin(), uses.end(),
                                                  [&](const ToolUseBlock& u) { return u.id == b.tool_use_id; });
                           });
                           if (!known) {
                               invalid("tool result references unknown tool call '" + b.tool_use_id + "'");
                           }
                       },
                   },
                   block);
    }
    messages_.push_back(std::move(msg));
}

void Conversation::reset() { messages_.clear(); }

void Conversation::drop_last(std::size_t n) {
    messages_.resize(messages_.size() - std::min(n, messages_.size()));
}

json to_json(const ChatMessage& msg) {
    json blocks = json::array();
    for (const auto& block : msg.blocks) {
        blocks.push_back(std::visit(overloaded{
                                        [](const TextBlock& b) { return json{{"type", "text"}, {"text", b.text}}; },
                                        [](const ToolUseBlock& b) {
                                            return json{{"type", "tool_use"}, {"id", b.id}, {"name", b.name}, {"input", b.input}};
                                        },
                                        [](const ToolResultBlock& b) {
                                            return json{{"type", "tool_result"},
                                                        {"tool_use_id", b.tool_use_id},
                                                        {"content", b.content},
                                                        {"is_error", b.is_error}};
                                        },
                                    },
                                    block));
    }
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(msg.timestamp.time_since_epoch()).count();
    return json{{"role", to_string(msg.role)},
                {"origin", to_string(msg.origin)},
                {"blocks", std::move(blocks)},
                {"timestamp", ms}};
}

ChatMessage message_from_json(const json& j) {
    ChatMessage msg;
    msg.role = parse_role(j.at("role").get<std::string>());
    msg.origin = parse_origin(j.value("origin", "human"));
    msg.timestamp = std::chrono::system_clock::time_point(std::chrono::milliseconds(j.value("timestamp", std::int64_t{0})));
    for (const auto& b : j.at("blocks")) {
        const auto type = b.at("type").get<std::string>();
        if (type == "text") {
            msg.blocks.emplace_back(TextBlock{b.at("text").get<std::string>()});
        } else if (type == "tool_use") {
            msg.blocks.emplace_back(ToolUseBlock{b.at("id").get<std::string>(), b.at("name").get<std::string>(),
                                                 b.value("input", json::object())});
        } else if (type == "tool_result") {
            msg.blocks.emplace_back(ToolResultBlock{b.at("tool_use_id").get<std::string>(),
                                                    b.at("content").get<std::string>(), b.value("is_error", false)});
        } else {
            throw Error(ErrorCode::parse_failure, "unknown block type '" + type + "'");
        }
    }
    return msg;
}

std::string Conversation::render_log(LogFormat format) const {
    if (format == LogFormat::structured) {
        json messages = json::array();
        for (const auto& m : messages_) {
            messages.push_back(to_json(m));
        }
        return json{{"version", kLogVersion}, {"id", id_}, {"messages", std::move(messages)}}.dump(2);
    }
    std::string out;
    for (const auto& m : messages_) {
        for (const auto& block : m.blocks) {
            out += "[" + std::string(to_string(m.role)) + "] ";
            out += std::visit(overloaded{
                                  [](const TextBlock& b) { return b.text; },
                                  [](const ToolUseBlock& b) { return "<" + b.name + "> " + b.input.dump(); },
                                  [](const ToolResultBlock& b) {
                                      return "(" + b.tool_use_id + (b.is_error ? ", error" : "") + ") " + b.content;
                                  },
                              },
                              block);
            out += '\n';
        }
    }
    return out;
}

Conversation Conversation::parse_log(std::string_view structured) {
    json j;
    try {
        j = json::parse(structured);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse_failure, std::string("conversation log is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || j.value("version", 0) != kLogVersion || !j.contains("messages")) {
        throw Error(ErrorCode::parse_failure, "unsupported conversation log version");
    }
    Conversation conv(j.value("id", random_id()));
    for (const auto& m : j.at("messages")) {
        conv.append(message_from_json(m));
    }
    return conv;
}

std::size_t estimate_message(const ChatMessage& msg, const TokenEstimator& estimator) {
    std::size_t total = 0;
    for (const auto& b : msg.blocks) {
        total += estimator(estimation_text(b));
    }
    return total;
}

std::size_t Conversation::estimate(const TokenEstimator& estimator) const {
    std::size_t total = 0;
    for (const auto& m : messages_) {
        total += estimate_message(m, estimator);
    }
    return total;
}

std::string elide_middle(std::string_view s, std::size_t target, const TokenEstimator& estimator) {
    const std::string marker = "\n" + std::string(kTruncationMarker) + "\n";
    const auto build = [&](std::size_t keep) {
        const auto head_len = text::utf8_floor(s, keep / 2);
        const auto tail_start = text::utf8_ceil(s, s.size() - (keep - keep / 2));
        return std::string(s.substr(0, head_len)) + marker + std::string(s.substr(tail_start));
    };
    if (estimator(build(0)) > target) {
        return std::string(kTruncationMarker);
    }
    // Largest number of kept bytes whose rendering still fits.
    std::size_t lo = 0;
    std::size_t hi = s.size();
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo + 1) / 2;
        if (estimator(build(mid)) <= target) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    return build(lo);
}

TruncationResult Conversation::truncate_to_budget(std::size_t budget, const TokenEstimator& estimator) const {
    const auto& msgs = messages_;
    std::vector<std::size_t> cost(msgs.size());
    std::size_t total = 0;
    for (std::size_t i = 0; i < msgs.size(); ++i) {
        cost[i] = estimate_message(msgs[i], estimator);
        total += cost[i];
    }

    std::optional<std::size_t> system_idx;
    if (!msgs.empty() && msgs.front().role == Role::system) {
        system_idx = 0;
    }
    std::optional<std::size_t> last_user;
    for (std::size_t i = msgs.size(); i-- > 0;) {
        if (msgs[i].role == Role::user) {
            last_user = i;
            break;
        }
    }
    const std::size_t floor = (system_idx ? cost[*system_idx] : 0) + (last_user ? cost[*last_user] : 0);
    if (floor > budget) {
        throw Error(ErrorCode::budget_too_small,
                    "budget of " + std::to_string(budget) + " tokens is below the " + std::to_string(floor) +
                        " needed for the system prompt and latest user message");
    }

    TruncationReport report;
    report.tokens_before = total;
    if (total <= budget) {
        report.tokens_after = total;
        return {*this, std::move(report)};
    }

    std::vector<bool> keep(msgs.size(), true);
    std::vector<ChatMessage> work = msgs;
    const auto is_core = [&](std::size_t i) { return i == system_idx || i == last_user; };
    const auto groups = group_ranges(msgs);
    const auto group_has_core = [&](const std::pair<std::size_t, std::size_t>& g) {
        for (std::size_t i = g.first; i < g.second; ++i) {
            if (is_core(i)) {
                return true;
            }
        }
        return false;
    };
    const auto drop_group = [&](const std::pair<std::size_t, std::size_t>& g) {
        for (std::size_t i = g.first; i < g.second; ++i) {
            if (keep[i]) {
                keep[i] = false;
                total -= cost[i];
            }
        }
    };

    // Oldest groups first, sparing the most recent exchange.
    for (std::size_t g = 0; g + 1 < groups.size() && total > budget; ++g) {
        if (!group_has_core(groups[g])) {
            drop_group(groups[g]);
        }
    }

    // Shrink the largest surviving tool output.
    std::set<std::pair<std::size_t, std::size_t>> exhausted;
    while (total > budget) {
        std::size_t best_msg = 0;
        std::size_t best_block = 0;
        std::size_t best_tokens = 0;
        bool found = false;
        for (std::size_t i = 0; i < work.size(); ++i) {
            if (!keep[i]) {
                continue;
            }
            for (std::size_t b = 0; b < work[i].blocks.size(); ++b) {
                const auto* r = std::get_if<ToolResultBlock>(&work[i].blocks[b]);
                if (r == nullptr || exhausted.contains({i, b})) {
                    continue;
                }
                const auto t = estimator(r->content);
                if (!found || t > best_tokens) {
                    best_msg = i;
                    best_block = b;
                    best_tokens = t;
                    found = true;
                }
            }
        }
        if (!found) {
            break;
        }
        auto& block = std::get<ToolResultBlock>(work[best_msg].blocks[best_block]);
        const std::size_t excess = total - budget;
        const std::size_t target = best_tokens > excess ? best_tokens - excess : 0;
        block.content = elide_middle(block.content, target, estimator);
        exhausted.insert({best_msg, best_block});
        const auto new_cost = estimate_message(work[best_msg], estimator);
        total = total - cost[best_msg] + new_cost;
        cost[best_msg] = new_cost;
        if (std::find(report.shortened.begin(), report.shortened.end(), best_msg) == report.shortened.end()) {
            report.shortened.push_back(best_msg);
        }
    }

    // Still over: give up everything except the protected pair.
    for (const auto& g : groups) {
        if (total <= budget) {
            break;
        }
        if (!group_has_core(g)) {
            drop_group(g);
        }
    }
    for (std::size_t i = 0; i < work.size() && total > budget; ++i) {
        if (keep[i] && !is_core(i)) {
            keep[i] = false;
            total -= cost[i];
        }
    }

    Conversation out(id_);
    for (std::size_t i = 0; i < work.size(); ++i) {
        if (keep[i]) {
            out.messages_.push_back(std::move(work[i]));
        } else {
            report.dropped.push_back(i);
        }
    }
    std::erase_if(report.shortened, [&](std::size_t i) { return !keep[i]; });
    report.tokens_after = total;
    return {std::move(out), std::move(report)};
}

} // namespace r2ai
