#pragma once

#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tforge/errors.hpp"
#include "tforge/utf8.hpp"

namespace tforge::hangul {

inline constexpr char32_t kSyllableBase = 0xAC00;
inline constexpr char32_t kSyllableLast = 0xD7A3;
inline constexpr int kLeadCount = 19;
inline constexpr int kVowelCount = 21;
inline constexpr int kTailCount = 28;  // index 0 = no final consonant
inline constexpr int kSyllableCount = kLeadCount * kVowelCount * kTailCount;  // 11,172

// Jamo indices of one syllabic block.
struct SyllableIndices {
  int lead = 0;   // [0, 18]
  int vowel = 0;  // [0, 20]
  int tail = 0;   // [0, 27], 0 = none

  bool operator==(const SyllableIndices&) const = default;
};

inline bool is_syllable(char32_t cp) {
  return cp >= kSyllableBase && cp <= kSyllableLast;
}

inline SyllableIndices decompose(char32_t cp) {
  if (!is_syllable(cp)) {
    std::ostringstream os;
    os << "not a Hangul syllable: U+" << std::hex << std::uppercase
       << static_cast<std::uint32_t>(cp);
    throw NotHangulSyllable(os.str());
  }
  int idx = static_cast<int>(cp - kSyllableBase);
  return SyllableIndices{idx / (kVowelCount * kTailCount),
                         (idx / kTailCount) % kVowelCount, idx % kTailCount};
}

inline char32_t compose(const SyllableIndices& s) {
  if (s.lead < 0 || s.lead >= kLeadCount || s.vowel < 0 || s.vowel >= kVowelCount ||
      s.tail < 0 || s.tail >= kTailCount)
    throw IndexOutOfRange("jamo index out of range");
  return kSyllableBase +
         static_cast<char32_t>((s.lead * kVowelCount + s.vowel) * kTailCount + s.tail);
}

// Fixed per-jamo Latin strings. The silent initial (index 11) maps to the
// empty string; tails index 0 is empty.
struct RomanizationTable {
  std::array<std::string, kLeadCount> leads;
  std::array<std::string, kVowelCount> vowels;
  std::array<std::string, kTailCount> tails;

  bool operator==(const RomanizationTable&) const = default;

  // Checks the structural rules every usable table must satisfy:
  // lowercase-ASCII entries, non-empty vowels, empty tail 0, and a total
  // per-syllable length in [1, 7].
  void validate() const {
    auto ascii_lower = [](const std::string& s) {
      for (char ch : s)
        if (ch < 'a' || ch > 'z') return false;
      return true;
    };
    for (const auto& e : leads)
      if (!ascii_lower(e)) throw FormatError("lead entry must be lowercase ASCII");
    for (const auto& e : vowels) {
      if (e.empty()) throw FormatError("vowel entries must be non-empty");
      if (!ascii_lower(e)) throw FormatError("vowel entry must be lowercase ASCII");
    }
    if (!tails[0].empty()) throw FormatError("tail index 0 must be empty");
    for (const auto& e : tails)
      if (!ascii_lower(e)) throw FormatError("tail entry must be lowercase ASCII");

    std::size_t lead_min = SIZE_MAX, lead_max = 0, vowel_min = SIZE_MAX, vowel_max = 0,
                tail_min = SIZE_MAX, tail_max = 0;
    for (const auto& e : leads) {
      lead_min = std::min(lead_min, e.size());
      lead_max = std::max(lead_max, e.size());
    }
    for (const auto& e : vowels) {
      vowel_min = std::min(vowel_min, e.size());
      vowel_max = std::max(vowel_max, e.size());
    }
    for (const auto& e : tails) {
      tail_min = std::min(tail_min, e.size());
      tail_max = std::max(tail_max, e.size());
    }
    if (lead_min + vowel_min + tail_min < 1)
      throw FormatError("some syllable would romanize to an empty string");
    if (lead_max + vowel_max + tail_max > 7)
      throw FormatError("some syllable would romanize to more than 7 letters");
  }
};

// Default scheme shipped with the library. Doubled tense initials, liquid
// final clusters prefixed with 'r', cluster finals spelled letter-per-jamo,
// silent initial empty. A handful of vowels without a conventional short
// spelling are given single-letter values so that very short conversions
// exist at a realistic rate.
inline const RomanizationTable& default_table() {
  static const RomanizationTable table = [] {
    RomanizationTable t;
    t.leads = {"g", "gg", "n",  "d", "dd", "r", "m", "b", "bb", "s",
               "ss", "",  "j", "jj", "c",  "k", "t", "p", "h"};
    t.vowels = {"a",  "ae",  "ya", "yae", "u",  "e",  "yeo", "ye", "o", "wa", "wae",
                "oe", "yo",  "u",  "weo", "w",  "wi", "yu",  "eu", "y", "i"};
    t.tails = {"",   "g",  "g",  "gs", "n",  "nj", "nh", "d",  "r",  "rk",
               "rm", "rb", "rs", "rt", "rp", "rh", "m",  "b",  "bs", "s",
               "s",  "ng", "j",  "ch", "k",  "t",  "p",  "h"};
    t.validate();
    return t;
  }();
  return table;
}

inline std::string romanize_syllable(const SyllableIndices& s,
                                     const RomanizationTable& table) {
  if (s.lead < 0 || s.lead >= kLeadCount || s.vowel < 0 || s.vowel >= kVowelCount ||
      s.tail < 0 || s.tail >= kTailCount)
    throw IndexOutOfRange("jamo index out of range");
  std::string out;
  out.reserve(7);
  out += table.leads[static_cast<std::size_t>(s.lead)];
  out += table.vowels[static_cast<std::size_t>(s.vowel)];
  out += table.tails[static_cast<std::size_t>(s.tail)];
  return out;
}

inline std::string romanize_sequence(std::u32string_view syllables,
                                     const RomanizationTable& table,
                                     std::string_view separator = "-") {
  std::string out;
  for (std::size_t i = 0; i < syllables.size(); ++i) {
    if (i) out += separator;
    out += romanize_syllable(decompose(syllables[i]), table);
  }
  return out;
}

// Fraction of the 11,172 syllables whose romanization length is <= max_len.
inline double short_fraction(const RomanizationTable& table, std::size_t max_len = 2) {
  std::size_t count = 0;
  for (int l = 0; l < kLeadCount; ++l)
    for (int v = 0; v < kVowelCount; ++v)
      for (int t = 0; t < kTailCount; ++t) {
        std::size_t len = table.leads[static_cast<std::size_t>(l)].size() +
                          table.vowels[static_cast<std::size_t>(v)].size() +
                          table.tails[static_cast<std::size_t>(t)].size();
        if (len <= max_len) ++count;
      }
  return static_cast<double>(count) / kSyllableCount;
}

// Text format: three sections LEADS/VOWELS/TAILS, one entry per line in
// index order, '_' for the empty string. UTF-8, '#' starts a comment line.
inline void save_table(const RomanizationTable& table, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  auto section = [&](const char* name, const auto& entries) {
    os << name << "\n";
    for (const auto& e : entries) os << (e.empty() ? std::string("_") : e) << "\n";
  };
  section("LEADS", table.leads);
  section("VOWELS", table.vowels);
  section("TAILS", table.tails);
  if (!os) throw IoError("failed writing " + path.string());
}

inline RomanizationTable load_table(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    lines.push_back(line);
  }
  std::size_t pos = 0;
  auto expect_header = [&](const char* name) {
    if (pos >= lines.size() || lines[pos] != name)
      throw FormatError(std::string("expected section header ") + name + " in " +
                        path.string());
    ++pos;
  };
  auto read_entries = [&](auto& entries, const char* what) {
    for (auto& e : entries) {
      if (pos >= lines.size())
        throw FormatError(std::string("missing ") + what + " entries in " + path.string());
      e = lines[pos] == "_" ? std::string() : lines[pos];
      ++pos;
    }
  };
  RomanizationTable t;
  expect_header("LEADS");
  read_entries(t.leads, "lead");
  expect_header("VOWELS");
  read_entries(t.vowels, "vowel");
  expect_header("TAILS");
  read_entries(t.tails, "tail");
  if (pos != lines.size()) throw FormatError("trailing content in " + path.string());
  t.validate();
  return t;
}

}  // namespace tforge::hangul
