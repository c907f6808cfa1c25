#include "kgqa/text.hpp"

#include <cctype>

namespace kgqa {

namespace {

// Byte length of a Unicode space character starting at s[i], or 0.
// Covers NBSP, OGHAM SPACE MARK, the U+2000..U+200A range, LINE/PARAGRAPH
// SEPARATOR, NARROW NBSP, MEDIUM MATHEMATICAL SPACE, and IDEOGRAPHIC SPACE.
std::size_t unicode_space_len(std::string_view s, std::size_t i) {
  auto byte = [&](std::size_t k) -> unsigned char {
    return k < s.size() ? static_cast<unsigned char>(s[k]) : 0;
  };
  const unsigned char b0 = byte(i);
  if (b0 == 0xC2 && byte(i + 1) == 0xA0) return 2;
  if (b0 == 0xE1 && byte(i + 1) == 0x9A && byte(i + 2) == 0x80) return 3;
  if (b0 == 0xE2 && byte(i + 1) == 0x80) {
    const unsigned char b2 = byte(i + 2);
    if ((b2 >= 0x80 && b2 <= 0x8A) || b2 == 0xA8 || b2 == 0xA9 || b2 == 0xAF)
      return 3;
  }
  if (b0 == 0xE2 && byte(i + 1) == 0x81 && byte(i + 2) == 0x9F) return 3;
  if (b0 == 0xE3 && byte(i + 1) == 0x80 && byte(i + 2) == 0x80) return 3;
  return 0;
}

bool ascii_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\v' || c == '\f' ||
         c == '\r';
}

bool ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      tokens.push_back(word);
      word.clear();
    }
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (ascii_space(c)) {
      flush();
      ++i;
      continue;
    }
    if (std::size_t n = unicode_space_len(text, i); n > 0) {
      flush();
      i += n;
      continue;
    }
    if (ascii_punct(c)) {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
      ++i;
      continue;
    }
    word.push_back(c < 0x80 ? static_cast<char>(std::tolower(c))
                            : static_cast<char>(c));
    ++i;
  }
  flush();
  return tokens;
}

std::string detokenize(const std::vector<std::string>& tokens,
                       std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end && i < tokens.size(); ++i) {
    if (!out.empty()) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  return detokenize(tokens, 0, tokens.size());
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace kgqa
