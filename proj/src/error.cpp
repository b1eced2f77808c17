// SPDX-License-Identifier: Apache-2.0

#include "r2ai/error.hpp"

namespace r2ai {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::unknown_key: return "unknown-key";
    case ErrorCode::parse_failure: return "parse-failure";
    case ErrorCode::unknown_provider: return "unknown-provider";
    case ErrorCode::ambiguous_model: return "ambiguous-model";
    case ErrorCode::missing_key: return "missing-key";
    case ErrorCode::invalid_message: return "invalid-message";
    case ErrorCode::budget_too_small: return "budget-too-small";
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::tools_unsupported: return "tools-unsupported";
    case ErrorCode::unsupported_dialect: return "unsupported-dialect";
    case ErrorCode::provider: return "provider";
    case ErrorCode::not_found: return "not-found";
    case ErrorCode::spawn_failure: return "spawn-failure";
    case ErrorCode::timeout: return "timeout";
    case ErrorCode::session_dead: return "session-dead";
    case ErrorCode::no_function_here: return "no-function-here";
    case ErrorCode::binary_file: return "binary-file";
    case ErrorCode::interpreter_missing: return "interpreter-missing";
    case ErrorCode::seq_expired: return "seq-expired";
    case ErrorCode::not_pending: return "not-pending";
    case ErrorCode::bind_failure: return "bind-failure";
    case ErrorCode::unknown_flag: return "unknown-flag";
    }
    return "unknown";
}

} // namespace r2ai
