#include "teff/plot.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace teff {

namespace {

struct Rgb {
  unsigned char r, g, b;
};

void write_rgb_png(const std::filesystem::path& path, int width, int height,
                   const std::vector<unsigned char>& rgb) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, rgb.data() + static_cast<std::size_t>(y) * width * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_feature_png(const std::filesystem::path& path, const FeatureMap& map, float lo,
                       float hi) {
  const int H = map.height();
  const int W = map.width();
  const int F = map.channels();
  const float span = hi > lo ? hi - lo : 1.0f;
  std::vector<unsigned char> rgb(static_cast<std::size_t>(H) * W * 3);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = map.at(y, x, F >= 3 ? c : 0);
        const float t = std::clamp((v - lo) / span, 0.0f, 1.0f);
        rgb[(static_cast<std::size_t>(y) * W + x) * 3 + c] =
            static_cast<unsigned char>(std::lround(255.0f * t));
      }
  write_rgb_png(path, W, H, rgb);
}

void write_histogram_png(const std::filesystem::path& path, std::span<const double> reference,
                         std::span<const double> overlay) {
  const int n = static_cast<int>(std::max(reference.size(), overlay.size()));
  if (n == 0) throw std::invalid_argument("histogram plot needs at least one bin");
  constexpr int kBar = 16, kHeight = 200, kMargin = 8;
  const int width = n * kBar + 2 * kMargin;
  const int height = kHeight + 2 * kMargin;
  double top = 1e-12;
  for (double v : reference) top = std::max(top, v);
  for (double v : overlay) top = std::max(top, v);

  std::vector<unsigned char> rgb(static_cast<std::size_t>(width) * height * 3, 255);
  auto put = [&](int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    auto* px = &rgb[(static_cast<std::size_t>(y) * width + x) * 3];
    px[0] = c.r;
    px[1] = c.g;
    px[2] = c.b;
  };
  auto bar_top = [&](double v) {
    return kMargin + kHeight - static_cast<int>(std::lround(kHeight * v / top));
  };
  const Rgb fill{120, 160, 220}, line{200, 40, 40}, axis{0, 0, 0};
  for (int i = 0; i < static_cast<int>(reference.size()); ++i)
    for (int x = kMargin + i * kBar + 1; x < kMargin + (i + 1) * kBar - 1; ++x)
      for (int y = bar_top(reference[i]); y < kMargin + kHeight; ++y) put(x, y, fill);
  for (int i = 0; i < static_cast<int>(overlay.size()); ++i) {
    const int x0 = kMargin + i * kBar + 2, x1 = kMargin + (i + 1) * kBar - 3;
    const int y0 = bar_top(overlay[i]);
    for (int x = x0; x <= x1; ++x) put(x, y0, line);
    for (int y = y0; y < kMargin + kHeight; ++y) {
      put(x0, y, line);
      put(x1, y, line);
    }
  }
  for (int x = kMargin; x < width - kMargin; ++x) put(x, kMargin + kHeight, axis);
  write_rgb_png(path, width, height, rgb);
}

}  // namespace teff
