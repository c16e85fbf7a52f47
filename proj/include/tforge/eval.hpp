#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tforge/errors.hpp"
#include "tforge/glyphs.hpp"
#include "tforge/image.hpp"
#include "tforge/io.hpp"

namespace tforge::eval {

using nlohmann::json;

// pixel >= threshold maps to 1 (boundary values count as ink).
inline image::Image binarize(const image::Image& img, float threshold) {
  image::Image out(img.height, img.width);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out.pixels[i] = img.pixels[i] >= threshold ? 1.0f : 0.0f;
  return out;
}

struct PixelMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  std::uint64_t hamming = 0;
};

// Ink-pixel confusion counts on binarized images. Two empty images count as
// a perfect match (precision = recall = F = 1).
inline PixelMetrics pixel_metrics(const image::Image& pred, const image::Image& gt) {
  if (!pred.same_dims(gt))
    throw ShapeMismatch("pixel_metrics needs equal dims, got " +
                        std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                        " vs " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
    bool p = pred.pixels[i] != 0.0f;
    bool t = gt.pixels[i] != 0.0f;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }
  PixelMetrics m;
  m.hamming = fp + fn;
  if (tp + fp == 0 && tp + fn == 0) {
    m.precision = m.recall = m.f_measure = 1.0;
    return m;
  }
  m.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f_measure = (m.precision + m.recall) > 0.0
                    ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                    : 0.0;
  return m;
}

struct Segment {
  int x_begin = 0;
  int x_end = 0;  // exclusive
};

struct RecognitionResult {
  std::string text;  // '?' marks a segment no template explains
  std::vector<Segment> spans;
};

// Template recognizer over a binary image: split on all-blank pixel columns,
// then match each segment against the atlas bitmaps of 'a'..'z' and '-' by
// Hamming distance after top-left alignment. A best distance above 30% of
// the winning glyph's area yields '?'.
inline RecognitionResult recognize(const image::Image& img, const glyphs::GlyphAtlas& atlas) {
  std::vector<char32_t> alphabet;
  for (char32_t cp = U'a'; cp <= U'z'; ++cp)
    if (atlas.contains(cp)) alphabet.push_back(cp);
  if (atlas.contains(U'-')) alphabet.push_back(U'-');
  if (alphabet.empty()) throw MissingGlyph("recognizer atlas lacks a-z and '-'");

  RecognitionResult res;
  int x = 0;
  while (x < img.width) {
    bool ink = false;
    for (int y = 0; y < img.height && !ink; ++y) ink = img.at(y, x) != 0.0f;
    if (!ink) {
      ++x;
      continue;
    }
    int x0 = x;
    while (x < img.width) {
      bool col_ink = false;
      for (int y = 0; y < img.height && !col_ink; ++y) col_ink = img.at(y, x) != 0.0f;
      if (!col_ink) break;
      ++x;
    }
    Segment seg{x0, x};

    std::uint64_t best_dist = UINT64_MAX;
    std::uint64_t best_area = 1;
    char32_t best_cp = U'?';
    for (char32_t cp : alphabet) {
      const glyphs::Glyph& g = atlas.glyph(cp);
      int wcmp = std::max(seg.x_end - seg.x_begin, g.width);
      std::uint64_t dist = 0;
      for (int yy = 0; yy < img.height && dist < best_dist; ++yy)
        for (int xx = 0; xx < wcmp; ++xx) {
          bool a = seg.x_begin + xx < seg.x_end && img.at(yy, seg.x_begin + xx) != 0.0f;
          bool t = yy < g.height && xx < g.width && g.at(yy, xx) != 0;
          dist += a != t;
        }
      if (dist < best_dist) {
        best_dist = dist;
        best_cp = cp;
        best_area = static_cast<std::uint64_t>(g.height) * static_cast<std::uint64_t>(g.width);
      }
    }
    bool accept = best_dist * 10 <= best_area * 3;  // 30% of glyph area
    if (accept && best_cp < 128) {
      res.text.push_back(static_cast<char>(best_cp));
    } else {
      res.text.push_back('?');
    }
    res.spans.push_back(seg);
  }
  return res;
}

// Levenshtein distance, unit costs.
inline std::uint64_t sed(std::string_view a, std::string_view b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::uint64_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      std::uint64_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

struct PairEval {
  PixelMetrics pixels;
  std::uint64_t sed_value = 0;
  std::string recognized;
  int length = 0;
  double pool_fraction = 1.0;
};

// Binarizes at 0.5, computes pixel metrics against the ground-truth image,
// recognizes the model output and compares it with the manifest text. The
// ground-truth string comes from the dataset, not from re-recognition.
inline PairEval evaluate_pair(const image::Image& model_output, const image::Image& gt_image,
                              std::string_view gt_text, const glyphs::GlyphAtlas& latin_atlas) {
  PairEval ev;
  image::Image pred_bin = binarize(model_output, 0.5f);
  image::Image gt_bin = binarize(gt_image, 0.5f);
  ev.pixels = pixel_metrics(pred_bin, gt_bin);
  ev.recognized = recognize(pred_bin, latin_atlas).text;
  ev.sed_value = sed(ev.recognized, gt_text);
  return ev;
}

enum class GroupKey { Overall, Length, PoolFraction };

struct ReportRow {
  std::string group;
  std::string key;
  std::size_t count = 0;
  double f_measure = 0.0;
  double hamming = 0.0;
  double sed = 0.0;
};

inline std::vector<ReportRow> aggregate_report(std::span<const PairEval> evals,
                                               GroupKey group) {
  auto row_of = [](const std::string& gname, const std::string& key,
                   std::span<const PairEval* const> items) {
    ReportRow r;
    r.group = gname;
    r.key = key;
    r.count = items.size();
    for (const PairEval* e : items) {
      r.f_measure += e->pixels.f_measure;
      r.hamming += static_cast<double>(e->pixels.hamming);
      r.sed += static_cast<double>(e->sed_value);
    }
    if (!items.empty()) {
      r.f_measure /= static_cast<double>(items.size());
      r.hamming /= static_cast<double>(items.size());
      r.sed /= static_cast<double>(items.size());
    }
    return r;
  };

  std::vector<ReportRow> rows;
  if (group == GroupKey::Overall) {
    std::vector<const PairEval*> all;
    for (const auto& e : evals) all.push_back(&e);
    rows.push_back(row_of("overall", "all", all));
    return rows;
  }
  std::map<std::string, std::vector<const PairEval*>> buckets;
  std::map<std::string, double> order;
  for (const auto& e : evals) {
    std::string key = group == GroupKey::Length ? std::to_string(e.length)
                                                : std::to_string(e.pool_fraction);
    buckets[key].push_back(&e);
    order[key] = group == GroupKey::Length ? e.length : e.pool_fraction;
  }
  std::vector<std::string> keys;
  for (const auto& [k, v] : buckets) keys.push_back(k);
  std::sort(keys.begin(), keys.end(),
            [&](const std::string& a, const std::string& b) { return order[a] < order[b]; });
  const char* gname = group == GroupKey::Length ? "length" : "pool_fraction";
  for (const auto& k : keys) rows.push_back(row_of(gname, k, buckets[k]));
  return rows;
}

inline void write_report_csv(std::span<const ReportRow> rows,
                             const std::filesystem::path& path) {
  auto os = io::open_output(path);
  os << "group,key,count,f_measure,hamming,sed\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s,%s,%zu,%.6f,%.3f,%.4f\n", r.group.c_str(),
                  r.key.c_str(), r.count, r.f_measure, r.hamming, r.sed);
    os << buf;
  }
  if (!os) throw IoError("failed writing " + path.string());
}

inline json report_json(std::span<const ReportRow> rows, const json& config,
                        std::string_view notes = {}) {
  json jr = json::array();
  for (const auto& r : rows)
    jr.push_back(json{{"group", r.group},
                      {"key", r.key},
                      {"count", r.count},
                      {"f_measure", r.f_measure},
                      {"hamming", r.hamming},
                      {"sed", r.sed}});
  json out{{"config", config}, {"rows", jr}};
  std::string n(notes);
  if (n.empty())
    n = "string metrics use the built-in template recognizer on model outputs; "
        "ground-truth text comes from the dataset manifest, so SED reflects model "
        "output quality without recognizer noise on the reference side";
  out["notes"] = n;
  return out;
}

}  // namespace tforge::eval
