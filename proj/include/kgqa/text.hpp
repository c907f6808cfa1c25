#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace kgqa {

// Lowercases and splits text into tokens. Words are split on whitespace
// (ASCII whitespace plus the common Unicode space code points), and every
// ASCII punctuation character becomes its own token, so
// "David J. Ryder" -> ["david", "j", ".", "ryder"].
// Multi-byte UTF-8 sequences that are not spaces are kept inside word tokens
// unchanged; only ASCII letters are lowercased.
std::vector<std::string> tokenize(std::string_view text);

// Inverse-ish of tokenize for presenting extracted spans: joins tokens with
// single spaces.
std::string detokenize(const std::vector<std::string>& tokens,
                       std::size_t begin, std::size_t end);
std::string detokenize(const std::vector<std::string>& tokens);

// FNV-1a, used to bucket tokens into the hashed embedding table. std::hash is
// not stable across implementations; this is.
std::uint64_t fnv1a64(std::string_view s);

}  // namespace kgqa
