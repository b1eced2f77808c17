// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace r2ai::text {

/// True when `s` is well-formed UTF-8 with no control bytes other than
/// tab, newline and carriage return. This is the predicate every piece of
/// content must satisfy before it may be placed in a model request.
bool is_valid_text(std::string_view s);

/// Returns `s` unchanged when it is valid text; otherwise every offending
/// byte (malformed UTF-8, NUL, other C0 controls, DEL) becomes `\xNN`.
/// The result always satisfies is_valid_text().
std::string escape_binary(std::string_view s);

/// Heuristic used to refuse whole files: a NUL byte in the first 8 KiB or
/// any malformed UTF-8 means the input is binary.
bool looks_binary(std::string_view s);

/// Largest index <= pos that does not split a UTF-8 sequence.
std::size_t utf8_floor(std::string_view s, std::size_t pos);

/// Smallest index >= pos that does not split a UTF-8 sequence.
std::size_t utf8_ceil(std::string_view s, std::size_t pos);

std::string_view trim(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);

/// Removes a surrounding ``` fence (with optional language tag) when the
/// whole answer is wrapped in one.
std::string strip_code_fences(std::string_view s);

std::string to_lower(std::string_view s);

/// Shell-style word split honouring single and double quotes.
std::vector<std::string> split_words(std::string_view s);

} // namespace r2ai::text
