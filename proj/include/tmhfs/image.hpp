#pragma once

#include <cstddef>
#include <vector>

namespace tmhfs {

/// RGB image, row-major HWC, values nominally in [0, 1].
struct Image {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t height, std::size_t width, float fill = 0.0f)
      : h(height), w(width), pixels(height * width * 3, fill) {}

  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * w + x) * 3 + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * w + x) * 3 + c]; }

  bool operator==(const Image&) const = default;
};

}  // namespace tmhfs
