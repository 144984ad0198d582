#pragma once

// minimal deterministic neural network stack: conv / pool / upsample / residual
// blocks composed into recursive hourglasses, trained with adam. forward passes
// cache what their matching backward needs, so each layer instance must be used
// once per step and backward must mirror the forward order.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hupor/core.hpp"
#include "hupor/grid.hpp"
#include "hupor/rng.hpp"

namespace hupor {

// visitor over (name, weights, gradients) of every parameter array, in a fixed
// registration order shared by the optimizer and the checkpoint format.
using ParamVisitor = std::function<void(const std::string&, std::vector<double>&, std::vector<double>&)>;

inline void grid_add_inplace(Grid& a, const Grid& b) {
  if (!a.same_shape(b)) throw validation_error("grid_add_inplace: shape mismatch");
  for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

inline bool grid_finite(const Grid& g) {
  for (double v : g.data)
    if (!std::isfinite(v)) return false;
  return true;
}

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMajorMap = Eigen::Map<RowMajorMatrix>;
using ConstRowMajorMap = Eigen::Map<const RowMajorMatrix>;

struct Conv2d {
  int in_c = 0, out_c = 0, k = 1, stride = 1, pad = 0;
  std::vector<double> w, b, gw, gb;
  Grid x_cache;
  RowMajorMatrix col_cache;

  Conv2d() = default;
  Conv2d(int in, int out, int kernel, int stride_ = 1, int pad_ = -1)
      : in_c(in),
        out_c(out),
        k(kernel),
        stride(stride_),
        pad(pad_ < 0 ? kernel / 2 : pad_),
        w(static_cast<size_t>(out) * in * kernel * kernel),
        b(out),
        gw(w.size()),
        gb(out) {}

  void init(Rng& rng) {
    const double scale = std::sqrt(2.0 / (static_cast<double>(in_c) * k * k));
    for (double& v : w) v = rng.normal(0.0, scale);
    std::fill(b.begin(), b.end(), 0.0);
  }

  int out_dim(int in_dim) const { return (in_dim + 2 * pad - k) / stride + 1; }

  Grid forward(const Grid& x, bool train) {
    if (x.c != in_c) throw validation_error("conv input channel mismatch");
    const int oh = out_dim(x.h), ow = out_dim(x.w);
    RowMajorMatrix col(static_cast<Eigen::Index>(in_c) * k * k, static_cast<Eigen::Index>(oh) * ow);
    for (int c = 0; c < in_c; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const int row = (c * k + ky) * k + kx;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride + ky - pad;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride + kx - pad;
              col(row, static_cast<Eigen::Index>(oy) * ow + ox) =
                  (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w) ? x.at(c, iy, ix) : 0.0;
            }
          }
        }
    Grid out(out_c, oh, ow);
    ConstRowMajorMap wm(w.data(), out_c, static_cast<Eigen::Index>(in_c) * k * k);
    RowMajorMap om(out.data.data(), out_c, static_cast<Eigen::Index>(oh) * ow);
    om.noalias() = wm * col;
    for (int o = 0; o < out_c; ++o) om.row(o).array() += b[o];
    if (train) {
      x_cache = x;
      col_cache = std::move(col);
    }
    return out;
  }

  Grid backward(const Grid& dy) {
    const int oh = dy.h, ow = dy.w;
    ConstRowMajorMap dym(dy.data.data(), out_c, static_cast<Eigen::Index>(oh) * ow);
    RowMajorMap gwm(gw.data(), out_c, static_cast<Eigen::Index>(in_c) * k * k);
    gwm.noalias() += dym * col_cache.transpose();
    for (int o = 0; o < out_c; ++o) gb[o] += dym.row(o).sum();
    ConstRowMajorMap wm(w.data(), out_c, static_cast<Eigen::Index>(in_c) * k * k);
    const RowMajorMatrix dcol = wm.transpose() * dym;
    Grid dx(in_c, x_cache.h, x_cache.w);
    for (int c = 0; c < in_c; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const int row = (c * k + ky) * k + kx;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= dx.h) continue;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= dx.w) continue;
              dx.at(c, iy, ix) += dcol(row, static_cast<Eigen::Index>(oy) * ow + ox);
            }
          }
        }
    return dx;
  }

  void visit(const std::string& name, const ParamVisitor& fn) {
    fn(name + ".w", w, gw);
    fn(name + ".b", b, gb);
  }
};

struct ReLU {
  std::vector<char> mask;

  Grid forward(const Grid& x, bool train) {
    Grid out = x;
    if (train) mask.assign(x.data.size(), 0);
    for (size_t i = 0; i < out.data.size(); ++i) {
      if (out.data[i] > 0.0) {
        if (train) mask[i] = 1;
      } else {
        out.data[i] = 0.0;
      }
    }
    return out;
  }

  Grid backward(const Grid& dy) {
    Grid dx = dy;
    for (size_t i = 0; i < dx.data.size(); ++i)
      if (!mask[i]) dx.data[i] = 0.0;
    return dx;
  }
};

struct MaxPool2 {
  int in_h = 0, in_w = 0, channels = 0;
  std::vector<int> argmax;

  Grid forward(const Grid& x, bool train) {
    if (x.h % 2 != 0 || x.w % 2 != 0) throw validation_error("maxpool input dims must be even");
    Grid out(x.c, x.h / 2, x.w / 2);
    if (train) {
      in_h = x.h;
      in_w = x.w;
      channels = x.c;
      argmax.assign(out.data.size(), 0);
    }
    for (int c = 0; c < x.c; ++c)
      for (int oy = 0; oy < out.h; ++oy)
        for (int ox = 0; ox < out.w; ++ox) {
          double best = -std::numeric_limits<double>::infinity();
          int best_idx = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const int iy = 2 * oy + dy, ix = 2 * ox + dx;
              const double v = x.at(c, iy, ix);
              if (v > best) {
                best = v;
                best_idx = (c * x.h + iy) * x.w + ix;
              }
            }
          out.at(c, oy, ox) = best;
          if (train) argmax[(static_cast<size_t>(c) * out.h + oy) * out.w + ox] = best_idx;
        }
    return out;
  }

  Grid backward(const Grid& dy) {
    Grid dx(channels, in_h, in_w);
    for (size_t i = 0; i < dy.data.size(); ++i) dx.data[argmax[i]] += dy.data[i];
    return dx;
  }
};

struct Upsample2 {
  Grid forward(const Grid& x, bool) {
    Grid out(x.c, x.h * 2, x.w * 2);
    for (int c = 0; c < x.c; ++c)
      for (int y = 0; y < out.h; ++y)
        for (int x2 = 0; x2 < out.w; ++x2) out.at(c, y, x2) = x.at(c, y / 2, x2 / 2);
    return out;
  }

  Grid backward(const Grid& dy) {
    Grid dx(dy.c, dy.h / 2, dy.w / 2);
    for (int c = 0; c < dy.c; ++c)
      for (int y = 0; y < dy.h; ++y)
        for (int x = 0; x < dy.w; ++x) dx.at(c, y / 2, x / 2) += dy.at(c, y, x);
    return dx;
  }
};

// conv-relu-conv plus identity skip, relu after the sum.
struct ResBlock {
  Conv2d conv1, conv2;
  ReLU relu_mid;
  std::vector<char> out_mask;

  ResBlock() = default;
  explicit ResBlock(int channels) : conv1(channels, channels, 3), conv2(channels, channels, 3) {}

  void init(Rng& rng) {
    conv1.init(rng);
    conv2.init(rng);
  }

  Grid forward(const Grid& x, bool train) {
    Grid mid = relu_mid.forward(conv1.forward(x, train), train);
    Grid out = conv2.forward(mid, train);
    grid_add_inplace(out, x);
    if (train) out_mask.assign(out.data.size(), 0);
    for (size_t i = 0; i < out.data.size(); ++i) {
      if (out.data[i] > 0.0) {
        if (train) out_mask[i] = 1;
      } else {
        out.data[i] = 0.0;
      }
    }
    return out;
  }

  Grid backward(const Grid& dy) {
    Grid dsum = dy;
    for (size_t i = 0; i < dsum.data.size(); ++i)
      if (!out_mask[i]) dsum.data[i] = 0.0;
    Grid dx = conv1.backward(relu_mid.backward(conv2.backward(dsum)));
    grid_add_inplace(dx, dsum);  // identity skip
    return dx;
  }

  void visit(const std::string& name, const ParamVisitor& fn) {
    conv1.visit(name + ".conv1", fn);
    conv2.visit(name + ".conv2", fn);
  }
};

// recursive hourglass: skip branch at this resolution plus a pooled inner
// branch, summed after upsampling. input dims must be divisible by 2^depth.
struct Hourglass {
  int depth = 1;
  ResBlock skip, down, up;
  MaxPool2 pool;
  Upsample2 upsample;
  std::unique_ptr<Hourglass> inner;
  std::unique_ptr<ResBlock> innermost;

  Hourglass() = default;
  Hourglass(int depth_, int channels) : depth(depth_), skip(channels), down(channels), up(channels) {
    if (depth_ > 1)
      inner = std::make_unique<Hourglass>(depth_ - 1, channels);
    else
      innermost = std::make_unique<ResBlock>(channels);
  }

  void init(Rng& rng) {
    skip.init(rng);
    down.init(rng);
    up.init(rng);
    if (inner) inner->init(rng);
    if (innermost) innermost->init(rng);
  }

  Grid forward(const Grid& x, bool train) {
    Grid s = skip.forward(x, train);
    Grid d = down.forward(pool.forward(x, train), train);
    Grid m = inner ? inner->forward(d, train) : innermost->forward(d, train);
    Grid u = upsample.forward(up.forward(m, train), train);
    grid_add_inplace(u, s);
    return u;
  }

  Grid backward(const Grid& dy) {
    Grid dx = skip.backward(dy);
    Grid dm = up.backward(upsample.backward(dy));
    Grid dd = inner ? inner->backward(dm) : innermost->backward(dm);
    grid_add_inplace(dx, pool.backward(down.backward(dd)));
    return dx;
  }

  void visit(const std::string& name, const ParamVisitor& fn) {
    skip.visit(name + ".skip", fn);
    down.visit(name + ".down", fn);
    up.visit(name + ".up", fn);
    if (inner) inner->visit(name + ".inner", fn);
    if (innermost) innermost->visit(name + ".inner", fn);
  }
};

// adam with per-parameter state keyed by registration name; deterministic for
// a fixed visit order.
struct Adam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long t = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> state;

  template <class Model> void step(Model& model) {
    ++t;
    const double correction1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double correction2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    model.visit_params([&](const std::string& name, std::vector<double>& w, std::vector<double>& g) {
      auto& [m, v] = state[name];
      if (m.size() != w.size()) {
        m.assign(w.size(), 0.0);
        v.assign(w.size(), 0.0);
      }
      for (size_t i = 0; i < w.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        const double mhat = m[i] / correction1;
        const double vhat = v[i] / correction2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    });
  }
};

template <class Model> void zero_grads(Model& model) {
  model.visit_params([](const std::string&, std::vector<double>&, std::vector<double>& g) {
    std::fill(g.begin(), g.end(), 0.0);
  });
}

template <class Model> size_t param_count(Model& model) {
  size_t n = 0;
  model.visit_params(
      [&](const std::string&, std::vector<double>& w, std::vector<double>&) { n += w.size(); });
  return n;
}

}  // namespace hupor
