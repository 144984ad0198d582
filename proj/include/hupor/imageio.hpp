#pragma once

// figure output: an rgb canvas with line/circle/text-free drawing primitives,
// heatmap colorization, and an uncompressed 24-bit bmp writer. enough for
// loss curves, map overlays, and skeleton renderings; nothing interactive.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "hupor/core.hpp"
#include "hupor/grid.hpp"
#include "hupor/io.hpp"

namespace hupor {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

struct Canvas {
  int width = 0, height = 0;
  std::vector<Rgb> pixels;

  Canvas(int w, int h, Rgb fill = {255, 255, 255}) : width(w), height(h) {
    if (w < 1 || h < 1) throw validation_error("canvas dimensions must be positive");
    pixels.assign(static_cast<size_t>(w) * h, fill);
  }

  void set(int x, int y, Rgb c) {
    if (x < 0 || x >= width || y < 0 || y >= height) return;
    pixels[static_cast<size_t>(y) * width + x] = c;
  }

  Rgb get(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }

  void line(int x0, int y0, int x1, int y1, Rgb c) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void disc(int cx, int cy, int radius, Rgb c) {
    for (int y = cy - radius; y <= cy + radius; ++y)
      for (int x = cx - radius; x <= cx + radius; ++x)
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius) set(x, y, c);
  }
};

// blue-to-red colormap over [0, 1]; out-of-range values clamp
inline Rgb heat_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  double r, g, b;
  if (v < 0.5) {
    const double t = v / 0.5;
    r = lerp(20, 250, t * t);
    g = lerp(40, 220, t);
    b = lerp(120, 60, t);
  } else {
    const double t = (v - 0.5) / 0.5;
    r = 250;
    g = lerp(220, 40, t);
    b = lerp(60, 30, t);
  }
  return {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
          static_cast<std::uint8_t>(b)};
}

// renders one channel of a grid, nearest-neighbour upscaled
inline Canvas render_heatmap(const Grid& grid, int channel, int scale = 4) {
  if (channel < 0 || channel >= grid.c) throw validation_error("heatmap channel out of range");
  if (scale < 1) throw validation_error("heatmap scale must be positive");
  double lo = 0.0, hi = 1e-12;
  for (int y = 0; y < grid.h; ++y)
    for (int x = 0; x < grid.w; ++x) {
      lo = std::min(lo, grid.at(channel, y, x));
      hi = std::max(hi, grid.at(channel, y, x));
    }
  Canvas out(grid.w * scale, grid.h * scale);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const double v = grid.at(channel, y / scale, x / scale);
      out.set(x, y, heat_color((v - lo) / (hi - lo)));
    }
  return out;
}

// polyline chart of (x, y) series on a white canvas with light axes
inline Canvas render_curve(const std::vector<double>& xs, const std::vector<double>& ys,
                           int width = 640, int height = 400) {
  if (xs.size() != ys.size()) throw validation_error("curve series lengths differ");
  if (xs.empty()) throw validation_error("curve needs at least one point");
  Canvas out(width, height);
  const int margin = 24;
  out.line(margin, height - margin, width - margin / 2, height - margin, {120, 120, 120});
  out.line(margin, height - margin, margin, margin / 2, {120, 120, 120});
  double x_lo = xs[0], x_hi = xs[0], y_lo = ys[0], y_hi = ys[0];
  for (size_t i = 1; i < xs.size(); ++i) {
    x_lo = std::min(x_lo, xs[i]);
    x_hi = std::max(x_hi, xs[i]);
    y_lo = std::min(y_lo, ys[i]);
    y_hi = std::max(y_hi, ys[i]);
  }
  if (x_hi == x_lo) x_hi = x_lo + 1;
  if (y_hi == y_lo) y_hi = y_lo + 1;
  auto px = [&](double x) {
    return margin + static_cast<int>(std::lround((x - x_lo) / (x_hi - x_lo) *
                                                 (width - 1.5 * margin)));
  };
  auto py = [&](double y) {
    return height - margin -
           static_cast<int>(std::lround((y - y_lo) / (y_hi - y_lo) * (height - 1.5 * margin)));
  };
  for (size_t i = 1; i < xs.size(); ++i)
    out.line(px(xs[i - 1]), py(ys[i - 1]), px(xs[i]), py(ys[i]), {200, 60, 40});
  for (size_t i = 0; i < xs.size(); ++i) out.disc(px(xs[i]), py(ys[i]), 2, {120, 20, 10});
  return out;
}

// uncompressed 24-bit bottom-up bmp
inline void write_bmp(const std::string& path, const Canvas& canvas) {
  const int w = canvas.width, h = canvas.height;
  const int row_bytes = (3 * w + 3) / 4 * 4;
  const std::uint32_t data_size = static_cast<std::uint32_t>(row_bytes) * h;
  const std::uint32_t file_size = 54 + data_size;

  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for writing: " + path);
  const auto put16 = [&](std::uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
  const auto put32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
  f.write("BM", 2);
  put32(file_size);
  put32(0);
  put32(54);  // pixel data offset
  put32(40);  // info header size
  put32(static_cast<std::uint32_t>(w));
  put32(static_cast<std::uint32_t>(h));
  put16(1);   // planes
  put16(24);  // bits per pixel
  put32(0);   // no compression
  put32(data_size);
  put32(2835);  // 72 dpi
  put32(2835);
  put32(0);
  put32(0);
  std::vector<char> row(static_cast<size_t>(row_bytes), 0);
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) {
      const Rgb c = canvas.get(x, y);
      row[3 * x + 0] = static_cast<char>(c.b);
      row[3 * x + 1] = static_cast<char>(c.g);
      row[3 * x + 2] = static_cast<char>(c.r);
    }
    f.write(row.data(), row_bytes);
  }
  if (!f) throw io_error("write failed: " + path);
}

}  // namespace hupor
