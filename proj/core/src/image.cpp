#include "vlaos/image.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace vlaos {

void Image::fill_rect(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b) {
  x0 = std::max(0, x0);
  y0 = std::max(0, y0);
  x1 = std::min(width, x1);
  y1 = std::min(height, y1);
  for (int y = y0; y < y1; ++y) {
    uint8_t* p = at(x0, y);
    for (int x = x0; x < x1; ++x) {
      p[0] = r;
      p[1] = g;
      p[2] = b;
      p += 3;
    }
  }
}

void Image::draw_rect(int x0, int y0, int x1, int y1, int thick, uint8_t r, uint8_t g, uint8_t b) {
  fill_rect(x0, y0, x1, y0 + thick, r, g, b);
  fill_rect(x0, y1 - thick, x1, y1, r, g, b);
  fill_rect(x0, y0, x0 + thick, y1, r, g, b);
  fill_rect(x1 - thick, y0, x1, y1, r, g, b);
}

Image downsample_pow2(const Image& img, int w, int h) {
  Image cur = img;
  while (cur.width > w || cur.height > h) {
    if (cur.width % 2 != 0 || cur.height % 2 != 0)
      throw std::runtime_error("downsample_pow2: size not halvable");
    Image next(cur.width / 2, cur.height / 2);
    for (int y = 0; y < next.height; ++y) {
      for (int x = 0; x < next.width; ++x) {
        for (int c = 0; c < 3; ++c) {
          int s = cur.at(2 * x, 2 * y)[c] + cur.at(2 * x + 1, 2 * y)[c] +
                  cur.at(2 * x, 2 * y + 1)[c] + cur.at(2 * x + 1, 2 * y + 1)[c];
          next.at(x, y)[c] = static_cast<uint8_t>(s / 4);
        }
      }
    }
    cur = std::move(next);
  }
  if (cur.width != w || cur.height != h)
    throw std::runtime_error("downsample_pow2: target not reachable by halving");
  return cur;
}

void write_ppm(const Image& img, const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  std::fprintf(f, "P6\n%d %d\n255\n", img.width, img.height);
  std::fwrite(img.pixels.data(), 1, img.pixels.size(), f);
  std::fclose(f);
}

std::vector<float> to_float_chw(const Image& img) {
  std::vector<float> out(static_cast<size_t>(3) * img.width * img.height);
  size_t plane = static_cast<size_t>(img.width) * img.height;
  for (size_t i = 0; i < plane; ++i) {
    out[i] = img.pixels[3 * i] / 255.0f;
    out[plane + i] = img.pixels[3 * i + 1] / 255.0f;
    out[2 * plane + i] = img.pixels[3 * i + 2] / 255.0f;
  }
  return out;
}

}  // namespace vlaos
