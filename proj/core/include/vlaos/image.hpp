#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vlaos {

// Dense 8-bit RGB raster, row-major, origin top-left.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // 3 * width * height

  Image() = default;
  Image(int w, int h, uint8_t r = 0, uint8_t g = 0, uint8_t b = 0) : width(w), height(h) {
    pixels.resize(static_cast<size_t>(3) * w * h);
    fill(r, g, b);
  }

  void fill(uint8_t r, uint8_t g, uint8_t b) {
    for (size_t i = 0; i + 2 < pixels.size(); i += 3) {
      pixels[i] = r;
      pixels[i + 1] = g;
      pixels[i + 2] = b;
    }
  }

  uint8_t* at(int x, int y) { return &pixels[3 * (static_cast<size_t>(y) * width + x)]; }
  const uint8_t* at(int x, int y) const {
    return &pixels[3 * (static_cast<size_t>(y) * width + x)];
  }

  void set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    uint8_t* p = at(x, y);
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }

  // Filled axis-aligned rectangle, clipped to bounds. [x0,x1) x [y0,y1)
  void fill_rect(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b);
  // Rectangle border of given thickness, clipped.
  void draw_rect(int x0, int y0, int x1, int y1, int thick, uint8_t r, uint8_t g, uint8_t b);

  bool operator==(const Image& o) const {
    return width == o.width && height == o.height && pixels == o.pixels;
  }
};

// 2x2 block-average downsample repeated until the image is w x h.
// Requires width/height to be reachable by halving.
Image downsample_pow2(const Image& img, int w, int h);

// Plain binary PPM (P6) writer; the report plots use it.
void write_ppm(const Image& img, const std::string& path);

// Float planes in [0,1], channel-major (c, y, x), used as network input.
std::vector<float> to_float_chw(const Image& img);

}  // namespace vlaos
