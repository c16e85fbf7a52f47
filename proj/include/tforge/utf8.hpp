#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "tforge/errors.hpp"

namespace tforge::utf8 {

inline void append(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline std::string encode(char32_t cp) {
  std::string s;
  append(s, cp);
  return s;
}

template <typename Range>
std::string encode(const Range& codepoints) {
  std::string s;
  for (char32_t cp : codepoints) append(s, cp);
  return s;
}

inline std::u32string decode(std::string_view s) {
  std::u32string out;
  std::size_t i = 0;
  auto cont = [&](std::size_t k) -> char32_t {
    unsigned char c = static_cast<unsigned char>(s[k]);
    if ((c & 0xC0) != 0x80) throw FormatError("invalid UTF-8 continuation byte");
    return c & 0x3F;
  };
  while (i < s.size()) {
    unsigned char c0 = static_cast<unsigned char>(s[i]);
    if (c0 < 0x80) {
      out.push_back(c0);
      i += 1;
    } else if ((c0 & 0xE0) == 0xC0) {
      if (i + 2 > s.size()) throw FormatError("truncated UTF-8 sequence");
      out.push_back(((c0 & 0x1Fu) << 6) | cont(i + 1));
      i += 2;
    } else if ((c0 & 0xF0) == 0xE0) {
      if (i + 3 > s.size()) throw FormatError("truncated UTF-8 sequence");
      out.push_back(((c0 & 0x0Fu) << 12) | (cont(i + 1) << 6) | cont(i + 2));
      i += 3;
    } else if ((c0 & 0xF8) == 0xF0) {
      if (i + 4 > s.size()) throw FormatError("truncated UTF-8 sequence");
      out.push_back(((c0 & 0x07u) << 18) | (cont(i + 1) << 12) |
                    (cont(i + 2) << 6) | cont(i + 3));
      i += 4;
    } else {
      throw FormatError("invalid UTF-8 lead byte");
    }
  }
  return out;
}

}  // namespace tforge::utf8
