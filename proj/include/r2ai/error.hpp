// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace r2ai {

enum class ErrorCode {
    unknown_key,
    parse_failure,
    unknown_provider,
    ambiguous_model,
    missing_key,
    invalid_message,
    budget_too_small,
    precondition,
    tools_unsupported,
    unsupported_dialect,
    provider,
    not_found,
    spawn_failure,
    timeout,
    session_dead,
    no_function_here,
    binary_file,
    interpreter_missing,
    seq_expired,
    not_pending,
    bind_failure,
    unknown_flag,
};

std::string_view to_string(ErrorCode code);

/// Base error for everything the library throws on a contract violation.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace r2ai
