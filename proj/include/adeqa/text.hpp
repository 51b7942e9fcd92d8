#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace adeqa::text {

// ASCII whitespace only; corpus text is UTF-8 and multi-byte sequences are
// never treated as separators.
bool is_space(char c);

std::string_view trim(std::string_view s);

// Trims and collapses every internal whitespace run to one ' '. Case is kept.
std::string collapse_whitespace(std::string_view s);

std::string ascii_lower(std::string_view s);

std::vector<std::string> split(std::string_view s, std::string_view delim);

// Whitespace-separated tokens.
std::vector<std::string_view> tokens(std::string_view s);

bool starts_with(std::string_view s, std::string_view prefix);

// Decodes UTF-8 into code points. Invalid bytes decode to themselves so that
// arbitrary byte strings still yield a usable sequence.
std::u32string utf8_decode(std::string_view s);

// 64-bit FNV-1a. Stable across platforms; used for ids, digests and seeds.
std::uint64_t fnv1a64(std::string_view s, std::uint64_t basis = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t v);

}  // namespace adeqa::text
