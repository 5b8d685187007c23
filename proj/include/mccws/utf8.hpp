#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace mccws::utf8 {

// Byte offset of the first malformed sequence, or nullopt when `text` is
// well-formed UTF-8 (overlongs and surrogates count as malformed).
std::optional<std::size_t> find_invalid(std::string_view text);

// Throws DataError on malformed input.
std::u32string decode(std::string_view text);

std::string encode(std::u32string_view text);
void append(std::string& out, char32_t cp);

}  // namespace mccws::utf8
