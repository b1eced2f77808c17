// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace r2ai {

enum class Role { system, user, assistant, tool_result };
enum class Origin { human, direct_template, auto_loop, tool_output };

std::string_view to_string(Role r);
std::string_view to_string(Origin o);

struct TextBlock {
    std::string text;
};

struct ToolUseBlock {
    std::string id;
    std::string name;
    nlohmann::json input = nlohmann::json::object();
};

struct ToolResultBlock {
    std::string tool_use_id;
    std::string content;
    bool is_error = false;
};

using ContentBlock = std::variant<TextBlock, ToolUseBlock, ToolResultBlock>;

/// Text an estimator is applied to for one block.
std::string estimation_text(const ContentBlock& block);

struct ChatMessage {
    Role role = Role::user;
    std::vector<ContentBlock> blocks;
    Origin origin = Origin::human;
    std::chrono::system_clock::time_point timestamp = std::chrono::system_clock::now();

    static ChatMessage user(std::string text, Origin origin = Origin::human);
    static ChatMessage assistant(std::string text, Origin origin = Origin::auto_loop);
    static ChatMessage system(std::string text);
    static ChatMessage tool_result(std::string tool_use_id, std::string content, bool is_error = false);

    /// Concatenation of the text blocks.
    std::string text() const;
    std::vector<ToolUseBlock> tool_uses() const;
};

using TokenEstimator = std::function<std::size_t(std::string_view)>;

enum class LogFormat { plain, structured };

struct TruncationReport {
    std::vector<std::size_t> dropped;
    std::vector<std::size_t> shortened;
    std::size_t tokens_before = 0;
    std::size_t tokens_after = 0;

    bool empty() const { return dropped.empty() && shortened.empty(); }
};

class Conversation;

struct TruncationResult;

/// Marker inserted where the middle of an oversized tool output was cut.
inline constexpr std::string_view kTruncationMarker = "[...truncated...]";

/// Ordered message store. Messages are appended; removal only happens via
/// reset(), drop_last() or a truncated copy.
class Conversation {
public:
    Conversation();
    explicit Conversation(std::string id);

    const std::string& id() const { return id_; }
    const std::vector<ChatMessage>& messages() const { return messages_; }
    std::size_t size() const { return messages_.size(); }
    bool empty() const { return messages_.empty(); }

    /// Throws Error{invalid_message} when the message breaks an invariant:
    /// no blocks, malformed text, a misplaced system message, block kinds
    /// that do not fit the role, or a tool result with no matching call.
    void append(ChatMessage msg);

    void reset();

    /// Removes the last min(n, size()) messages. Each message counts as one,
    /// so a tool call and its result are two.
    void drop_last(std::size_t n);

    std::string render_log(LogFormat format) const;

    /// Inverse of render_log(structured).
    static Conversation parse_log(std::string_view structured);

    std::size_t estimate(const TokenEstimator& estimator) const;

    /// Returns a copy whose estimated size fits `budget`. The system message
    /// and the latest user message always survive. Oldest groups (a message
    /// plus the tool results answering it) go first, keeping the most recent
    /// group; then the largest tool output loses its middle; then anything
    /// else but the protected pair. Throws Error{budget_too_small} when the
    /// protected pair alone exceeds the budget.
    TruncationResult truncate_to_budget(std::size_t budget, const TokenEstimator& estimator) const;

private:
    std::string id_;
    std::vector<ChatMessage> messages_;
};

struct TruncationResult {
    Conversation conversation;
    TruncationReport report;
};

std::size_t estimate_message(const ChatMessage& msg, const TokenEstimator& estimator);

/// Keeps the head and tail of `s` around kTruncationMarker so the estimate
/// is at most `target`. Returns the marker alone if even that is too big.
std::string elide_middle(std::string_view s, std::size_t target, const TokenEstimator& estimator);

nlohmann::json to_json(const ChatMessage& msg);
ChatMessage message_from_json(const nlohmann::json& j);

} // namespace r2ai
