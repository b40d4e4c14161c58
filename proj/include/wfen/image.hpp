#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wfen/tensor.hpp"

namespace wfen {

// Planar CHW image with unit-range values. Values are clamped only at the
// byte encode/decode boundary, so intermediate math keeps full precision.
struct ImageBuffer {
  int64_t width = 0;
  int64_t height = 0;
  int64_t channels = 3;
  std::vector<double> values;

  ImageBuffer() = default;
  ImageBuffer(int64_t w, int64_t h)
      : width(w), height(h), values(static_cast<size_t>(3 * w * h), 0.0) {
    check(w > 0 && h > 0, "image: extents must be positive");
  }

  int64_t pixel_count() const { return width * height; }

  double at(int64_t c, int64_t y, int64_t x) const {
    return values[static_cast<size_t>((c * height + y) * width + x)];
  }
  void set(int64_t c, int64_t y, int64_t x, double v) {
    values[static_cast<size_t>((c * height + y) * width + x)] = v;
  }
};

inline uint8_t unit_to_byte(double v) {
  const double c = std::min(1.0, std::max(0.0, v));
  return static_cast<uint8_t>(std::lround(c * 255.0));
}

inline double byte_to_unit(uint8_t b) { return static_cast<double>(b) / 255.0; }

// Binary PPM (P6, maxval 255). Reads tolerate comments and flexible header
// whitespace; writes emit the canonical "P6\n<w> <h>\n255\n" header so that
// canonical files round trip byte-identically.
ImageBuffer ppm_read(const std::string& path);
void ppm_write(const ImageBuffer& img, const std::string& path);

template <typename T>
Tensor<T> image_to_tensor(const ImageBuffer& img) {
  check(img.channels == 3, "image: expected 3 channels");
  Tensor<T> t({1, 3, img.height, img.width});
  T* d = t.data();
  for (size_t i = 0; i < img.values.size(); ++i) d[i] = static_cast<T>(img.values[i]);
  return t;
}

// Extracts one batch item, clamping to the unit range at this boundary.
template <typename T>
ImageBuffer tensor_to_image(const Tensor<T>& t, int64_t batch_index = 0) {
  check(t.rank() == 4 && t.extent(1) == 3,
        "image: expected a Bx3xHxW tensor, got " + shape_str(t.shape()));
  check(batch_index >= 0 && batch_index < t.extent(0), "image: batch index out of range");
  ImageBuffer img(t.extent(3), t.extent(2));
  const T* d = t.cdata() + batch_index * 3 * t.extent(2) * t.extent(3);
  for (size_t i = 0; i < img.values.size(); ++i) {
    img.values[i] = std::min(1.0, std::max(0.0, static_cast<double>(d[i])));
  }
  return img;
}

}  // namespace wfen
