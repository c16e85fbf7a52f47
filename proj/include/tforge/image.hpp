#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "tforge/errors.hpp"
#include "tforge/io.hpp"

namespace tforge::image {

// Grayscale raster, values in [0,1]; 0 = background, 1 = ink.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // row-major

  Image() = default;
  Image(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, 0.0f) {
    if (h <= 0 || w <= 0) throw ShapeMismatch("image dimensions must be positive");
  }

  float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  std::size_t size() const { return pixels.size(); }

  bool same_dims(const Image& o) const { return height == o.height && width == o.width; }

  bool operator==(const Image& o) const {
    return height == o.height && width == o.width && pixels == o.pixels;
  }
};

// Binary PGM (P5), maxval 255, ink rendered as 255.
inline void write_pgm(const Image& img, const std::filesystem::path& path) {
  auto os = io::open_output(path);
  os << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      float v = img.at(y, x);
      v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
      row[static_cast<std::size_t>(x)] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    os.write(reinterpret_cast<const char*>(row.data()), img.width);
  }
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace tforge::image
