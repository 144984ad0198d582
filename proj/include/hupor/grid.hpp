#pragma once

// dense channel-major (c, h, w) double array used for heatmaps, target maps,
// and rendered feature channels.

#include <cstddef>
#include <vector>

namespace hupor {

struct Grid {
  int c = 0, h = 0, w = 0;
  std::vector<double> data;  // c * h * w, channel planes contiguous

  Grid() = default;
  Grid(int c_, int h_, int w_) : c(c_), h(h_), w(w_), data(static_cast<size_t>(c_) * h_ * w_, 0.0) {}

  double& at(int ch, int y, int x) { return data[(static_cast<size_t>(ch) * h + y) * w + x]; }
  double at(int ch, int y, int x) const { return data[(static_cast<size_t>(ch) * h + y) * w + x]; }

  bool same_shape(const Grid& o) const { return c == o.c && h == o.h && w == o.w; }
  size_t size() const { return data.size(); }
};

}  // namespace hupor
