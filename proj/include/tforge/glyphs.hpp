#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "tforge/errors.hpp"
#include "tforge/hangul.hpp"
#include "tforge/image.hpp"
#include "tforge/io.hpp"
#include "tforge/rng.hpp"

namespace tforge::glyphs {

struct Glyph {
  char32_t codepoint = 0;
  int height = 0;
  int width = 0;
  int advance = 0;                   // pen advance in pixels, > 0
  std::vector<std::uint8_t> bitmap;  // height*width values in {0,1}, row-major

  std::uint8_t at(int y, int x) const {
    return bitmap[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t& at(int y, int x) {
    return bitmap[static_cast<std::size_t>(y) * width + x];
  }

  bool operator==(const Glyph&) const = default;
};

struct GlyphAtlas {
  std::string name;
  int line_height = 0;
  std::map<char32_t, Glyph> glyphs;

  bool contains(char32_t cp) const { return glyphs.count(cp) != 0; }

  const Glyph& glyph(char32_t cp) const {
    auto it = glyphs.find(cp);
    if (it == glyphs.end()) {
      std::ostringstream os;
      os << "atlas '" << name << "' has no glyph for U+" << std::hex << std::uppercase
         << static_cast<std::uint32_t>(cp);
      throw MissingGlyph(os.str());
    }
    return it->second;
  }

  bool operator==(const GlyphAtlas& o) const {
    return line_height == o.line_height && glyphs == o.glyphs;
  }
};

namespace detail {

// Blocky pattern: bits drawn on a half-resolution grid and replicated 2x2,
// cropped to (h, w). With ensure_columns set, every grid column gets at
// least one bit so the final bitmap has no blank column.
inline std::vector<std::uint8_t> blocky_pattern(int h, int w, double density,
                                                bool ensure_columns, rng::Engine& g) {
  int gh = (h + 1) / 2, gw = (w + 1) / 2;
  std::vector<std::uint8_t> grid(static_cast<std::size_t>(gh) * gw, 0);
  for (auto& b : grid) b = rng::coin(g, density) ? 1 : 0;
  if (ensure_columns) {
    for (int x = 0; x < gw; ++x) {
      bool any = false;
      for (int y = 0; y < gh; ++y) any = any || grid[static_cast<std::size_t>(y) * gw + x];
      if (!any) {
        int y = static_cast<int>(rng::below(g, static_cast<std::uint64_t>(gh)));
        grid[static_cast<std::size_t>(y) * gw + x] = 1;
      }
    }
  } else {
    bool any = std::any_of(grid.begin(), grid.end(), [](std::uint8_t b) { return b != 0; });
    if (!any) {
      std::size_t i = static_cast<std::size_t>(rng::below(g, grid.size()));
      grid[i] = 1;
    }
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out[static_cast<std::size_t>(y) * w + x] = grid[static_cast<std::size_t>(y / 2) * gw + x / 2];
  return out;
}

// Distinct per-index patterns for one jamo family.
inline std::vector<std::vector<std::uint8_t>> jamo_family(int count, int h, int w,
                                                          std::uint64_t seed,
                                                          std::uint64_t family_tag) {
  std::vector<std::vector<std::uint8_t>> patterns;
  std::vector<std::vector<std::uint8_t>> seen;
  for (int i = 0; i < count; ++i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      if (attempt > 256) throw CellTooSmall("cell too small for distinct jamo patterns");
      auto g = rng::engine(rng::derive(seed, family_tag * 1024 + static_cast<std::uint64_t>(i),
                                       attempt));
      auto p = blocky_pattern(h, w, 0.45, false, g);
      if (std::find(seen.begin(), seen.end(), p) == seen.end()) {
        seen.push_back(p);
        patterns.push_back(std::move(p));
        break;
      }
    }
  }
  return patterns;
}

inline void paste(std::vector<std::uint8_t>& dst, int dst_w, int y0, int x0,
                  const std::vector<std::uint8_t>& src, int src_h, int src_w) {
  for (int y = 0; y < src_h; ++y)
    for (int x = 0; x < src_w; ++x)
      dst[static_cast<std::size_t>(y0 + y) * dst_w + (x0 + x)] = src[static_cast<std::size_t>(y) * src_w + x];
}

}  // namespace detail

// Deterministic stand-in for font rasterization. Hangul syllables are
// composed from fixed per-jamo sub-patterns laid out as lead (top-left),
// vowel (top-right) and tail (bottom strip), so syllables sharing a jamo
// share pixels the way real Hangul blocks share components. All other
// codepoints get a distinct blocky pattern with ink in every column.
inline GlyphAtlas build_synthetic_atlas(std::span<const char32_t> codepoints, int cell_h,
                                        int cell_w, std::uint64_t seed) {
  if (codepoints.empty()) throw FormatError("codepoint set is empty");
  if (cell_h < 2 || cell_w < 2) throw CellTooSmall("cell must be at least 2x2");

  std::vector<char32_t> cps(codepoints.begin(), codepoints.end());
  std::sort(cps.begin(), cps.end());
  cps.erase(std::unique(cps.begin(), cps.end()), cps.end());

  bool any_hangul = std::any_of(cps.begin(), cps.end(), hangul::is_syllable);
  if (any_hangul && (cell_h < 8 || cell_w < 8))
    throw CellTooSmall("cell must be at least 8x8 to compose syllable glyphs");

  // Rough capacity check before attempting distinct patterns.
  std::size_t non_hangul =
      static_cast<std::size_t>(std::count_if(cps.begin(), cps.end(), [](char32_t c) {
        return !hangul::is_syllable(c);
      }));
  std::size_t grid_bits = static_cast<std::size_t>((cell_h + 1) / 2) * ((cell_w + 1) / 2);
  if (grid_bits < 63 && non_hangul > (std::size_t{1} << grid_bits) / 2)
    throw CellTooSmall("cell too small for this many distinct glyphs");

  GlyphAtlas atlas;
  atlas.name = "synthetic";
  atlas.line_height = cell_h;

  int half_h = cell_h / 2, half_w = cell_w / 2;
  std::vector<std::vector<std::uint8_t>> leads, vowels, tails;
  if (any_hangul) {
    leads = detail::jamo_family(hangul::kLeadCount, half_h, half_w, seed, 1);
    vowels = detail::jamo_family(hangul::kVowelCount, half_h, cell_w - half_w, seed, 2);
    // tail index 0 stays empty
    tails = detail::jamo_family(hangul::kTailCount - 1, cell_h - half_h, cell_w, seed, 3);
  }

  std::unordered_map<std::string, char32_t> taken;
  auto key = [](const std::vector<std::uint8_t>& bm) {
    return std::string(bm.begin(), bm.end());
  };

  for (char32_t cp : cps) {
    Glyph g;
    g.codepoint = cp;
    g.height = cell_h;
    g.width = cell_w;
    g.advance = cell_w + 1;
    if (hangul::is_syllable(cp)) {
      auto idx = hangul::decompose(cp);
      g.bitmap.assign(static_cast<std::size_t>(cell_h) * cell_w, 0);
      detail::paste(g.bitmap, cell_w, 0, 0, leads[static_cast<std::size_t>(idx.lead)], half_h, half_w);
      detail::paste(g.bitmap, cell_w, 0, half_w, vowels[static_cast<std::size_t>(idx.vowel)],
                    half_h, cell_w - half_w);
      if (idx.tail > 0)
        detail::paste(g.bitmap, cell_w, half_h, 0, tails[static_cast<std::size_t>(idx.tail - 1)],
                      cell_h - half_h, cell_w);
      auto [it, inserted] = taken.emplace(key(g.bitmap), cp);
      if (!inserted) throw CellTooSmall("syllable glyph collision; enlarge cell");
    } else {
      for (std::uint64_t attempt = 0;; ++attempt) {
        if (attempt > 256) throw CellTooSmall("cell too small for distinct glyphs");
        auto eng = rng::engine(rng::derive(seed, 0x100000000ull + cp, attempt));
        g.bitmap = detail::blocky_pattern(cell_h, cell_w, 0.5, true, eng);
        auto [it, inserted] = taken.emplace(key(g.bitmap), cp);
        if (inserted) break;
      }
    }
    atlas.glyphs.emplace(cp, std::move(g));
  }
  return atlas;
}

// Merges atlases with disjoint codepoint sets (used to combine differently
// sized syllable and Latin cells into one file).
inline GlyphAtlas merge_atlases(std::string name, std::span<const GlyphAtlas> parts) {
  GlyphAtlas out;
  out.name = std::move(name);
  for (const auto& part : parts) {
    out.line_height = std::max(out.line_height, part.line_height);
    for (const auto& [cp, g] : part.glyphs)
      if (!out.glyphs.emplace(cp, g).second)
        throw FormatError("duplicate codepoint while merging atlases");
  }
  return out;
}

// Atlas file: magic "GATL", u16 version=1, u16 line_height, u32 glyph count;
// per glyph: u32 codepoint, u16 h, u16 w, u16 advance, ceil(h*w/8) packed
// bits row-major (MSB first). Little-endian throughout.
inline void save_atlas(const GlyphAtlas& atlas, const std::filesystem::path& path) {
  auto os = io::open_output(path);
  io::Writer w(os);
  w.str("GATL");
  w.u16(1);
  w.u16(static_cast<std::uint16_t>(atlas.line_height));
  w.u32(static_cast<std::uint32_t>(atlas.glyphs.size()));
  for (const auto& [cp, g] : atlas.glyphs) {
    w.u32(static_cast<std::uint32_t>(cp));
    w.u16(static_cast<std::uint16_t>(g.height));
    w.u16(static_cast<std::uint16_t>(g.width));
    w.u16(static_cast<std::uint16_t>(g.advance));
    auto packed = io::pack_bits(std::span<const std::uint8_t>(g.bitmap));
    w.bytes(packed.data(), packed.size());
  }
}

inline GlyphAtlas load_atlas(const std::filesystem::path& path) {
  auto is = io::open_input(path);
  io::Reader r(is);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::string_view(magic, 4) != "GATL")
    throw FormatError("bad magic in " + path.string() + " (expected GATL)");
  std::uint16_t version = r.u16("version");
  if (version != 1) throw FormatError("unsupported GATL version");
  GlyphAtlas atlas;
  atlas.name = path.stem().string();
  atlas.line_height = r.u16("line height");
  std::uint32_t count = r.u32("glyph count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string ctx = "glyph record " + std::to_string(i) + " of " + std::to_string(count);
    Glyph g;
    g.codepoint = r.u32(ctx.c_str());
    g.height = r.u16(ctx.c_str());
    g.width = r.u16(ctx.c_str());
    g.advance = r.u16(ctx.c_str());
    if (g.height <= 0 || g.width <= 0 || g.advance <= 0 || g.height > atlas.line_height)
      throw FormatError("invalid dimensions in " + ctx);
    std::size_t px = static_cast<std::size_t>(g.height) * g.width;
    std::vector<std::uint8_t> packed((px + 7) / 8);
    r.bytes(packed.data(), packed.size(), ctx.c_str());
    g.bitmap.resize(px);
    io::unpack_bits(std::span<const std::uint8_t>(packed), px, g.bitmap.data());
    if (!atlas.glyphs.emplace(g.codepoint, std::move(g)).second)
      throw FormatError("duplicate codepoint in " + ctx);
  }
  return atlas;
}

// Places glyphs left to right starting at x = margin, top-aligned. Untouched
// pixels stay 0.
inline image::Image render_text(const GlyphAtlas& atlas, std::u32string_view text,
                                int canvas_h, int canvas_w, int margin = 0) {
  if (margin < 0) throw OverflowsCanvas("negative margin");
  image::Image img(canvas_h, canvas_w);
  int cursor = margin;
  for (char32_t cp : text) {
    const Glyph& g = atlas.glyph(cp);
    if (g.height > canvas_h)
      throw OverflowsCanvas("glyph height " + std::to_string(g.height) +
                            " exceeds canvas height " + std::to_string(canvas_h));
    if (cursor + g.width > canvas_w)
      throw OverflowsCanvas("text exceeds canvas width " + std::to_string(canvas_w) +
                            " at x=" + std::to_string(cursor));
    for (int y = 0; y < g.height; ++y)
      for (int x = 0; x < g.width; ++x)
        if (g.at(y, x)) img.at(y, cursor + x) = 1.0f;
    cursor += g.advance;
  }
  return img;
}

}  // namespace tforge::glyphs
