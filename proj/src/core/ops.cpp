#include "bmtk/core/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <memory>

#include "bmtk/core/gemm.hpp"

namespace bmtk::ad {

namespace {

template <class T>
bool any_requires_grad(const BasicGraph<T>& g, std::initializer_list<Var> vars) {
  for (Var v : vars) {
    if (v.valid() && g.requires_grad(v)) return true;
  }
  return false;
}

template <class T>
void require_same_shape(const BasicGraph<T>& g, Var a, Var b, const char* op) {
  if (g.value(a).shape() != g.value(b).shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(g.value(a).shape()) +
                         " vs " + shape_str(g.value(b).shape()));
  }
}

template <class T>
const Shape& shape_of(const BasicGraph<T>& g, Var v) {
  return g.value(v).shape();
}

// Elementwise unary op; `df` maps (input, output) to the local derivative.
template <class T, class F, class DF>
Var unary(BasicGraph<T>& g, Var a, F f, DF df) {
  const auto& x = g.value(a);
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return g.record(std::move(y), g.requires_grad(a), [a, df](BasicGraph<T>& gr, Var self) {
    const auto& xs = gr.value(a);
    const auto& ys = gr.value(self);
    const auto& gy = gr.grad(self);
    auto& gx = gr.grad_buffer(a);
    for (std::size_t i = 0; i < xs.size(); ++i) gx[i] += gy[i] * df(xs[i], ys[i]);
  });
}

std::size_t checked_index(int v, int lo, int hi) {
  return static_cast<std::size_t>(std::clamp(v, lo, hi));
}

// Output columns [lo, hi) read in-bounds input for kernel offset kj.
inline void valid_cols(int wo, int w, int stride, int pad, int kj, int& lo, int& hi) {
  const int off = kj - pad;
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  hi = (w - 1 - off) < 0 ? 0 : (w - 1 - off) / stride + 1;
  if (hi > wo) hi = wo;
  if (lo > hi) lo = hi;
}

template <class T>
void im2col(const T* x, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* col) {
  const int plane = ho * wo;
  for (int ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = col + static_cast<std::size_t>((ch * k + ki) * k + kj) * plane;
        int lo, hi;
        valid_cols(wo, w, stride, pad, kj, lo, hi);
        const int off = kj - pad;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          T* dst = row + oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T{0});
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(ch) * h + iy) * w + off;
          std::fill(dst, dst + lo, T{0});
          if (stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride];
          }
          std::fill(dst + hi, dst + wo, T{0});
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* x) {
  const int plane = ho * wo;
  for (int ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row = col + static_cast<std::size_t>((ch * k + ki) * k + kj) * plane;
        int lo, hi;
        valid_cols(wo, w, stride, pad, kj, lo, hi);
        const int off = kj - pad;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          T* dst = x + (static_cast<std::size_t>(ch) * h + iy) * w + off;
          const T* src = row + oy * wo;
          if (stride == 1) {
            for (int ox = lo; ox < hi; ++ox) dst[ox] += src[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox * stride] += src[ox];
          }
        }
      }
    }
  }
}

// 1D linear interpolation stencil for upsampling with half-pixel centres.
struct Tap {
  std::size_t lo, hi;
  double frac;
};

std::vector<Tap> upsample_taps(std::size_t in, int factor) {
  std::vector<Tap> taps(in * static_cast<std::size_t>(factor));
  const int last = static_cast<int>(in) - 1;
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(last));
    const int i0 = std::min(static_cast<int>(std::floor(src)), last);
    taps[o] = Tap{static_cast<std::size_t>(i0), checked_index(i0 + 1, 0, last), src - i0};
  }
  return taps;
}

}  // namespace

template <class T>
Var add(BasicGraph<T>& g, Var a, Var b) {
  require_same_shape(g, a, b, "add");
  const auto& x = g.value(a);
  const auto& y = g.value(b);
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return g.record(std::move(out), any_requires_grad(g, {a, b}), [a, b](BasicGraph<T>& gr, Var self) {
    const auto& gy = gr.grad(self);
    for (Var in : {a, b}) {
      if (!gr.requires_grad(in)) continue;
      auto& gx = gr.grad_buffer(in);
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
    }
  });
}

template <class T>
Var sub(BasicGraph<T>& g, Var a, Var b) {
  require_same_shape(g, a, b, "sub");
  const auto& x = g.value(a);
  const auto& y = g.value(b);
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return g.record(std::move(out), any_requires_grad(g, {a, b}), [a, b](BasicGraph<T>& gr, Var self) {
    const auto& gy = gr.grad(self);
    if (gr.requires_grad(a)) {
      auto& ga = gr.grad_buffer(a);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    }
    if (gr.requires_grad(b)) {
      auto& gb = gr.grad_buffer(b);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
    }
  });
}

template <class T>
Var mul(BasicGraph<T>& g, Var a, Var b) {
  require_same_shape(g, a, b, "mul");
  const auto& x = g.value(a);
  const auto& y = g.value(b);
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return g.record(std::move(out), any_requires_grad(g, {a, b}), [a, b](BasicGraph<T>& gr, Var self) {
    const auto& gy = gr.grad(self);
    const auto& xa = gr.value(a);
    const auto& xb = gr.value(b);
    if (gr.requires_grad(a)) {
      auto& ga = gr.grad_buffer(a);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * xb[i];
    }
    if (gr.requires_grad(b)) {
      auto& gb = gr.grad_buffer(b);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * xa[i];
    }
  });
}

template <class T>
Var scale(BasicGraph<T>& g, Var a, T factor) {
  return unary(g, a, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <class T>
Var add_scalar(BasicGraph<T>& g, Var a, T offset) {
  return unary(g, a, [offset](T v) { return v + offset; }, [](T, T) { return T{1}; });
}

template <class T>
Var leaky_relu(BasicGraph<T>& g, Var a, T slope) {
  return unary(
      g, a, [slope](T v) { return v > T{0} ? v : slope * v; },
      [slope](T v, T) { return v > T{0} ? T{1} : slope; });
}

template <class T>
Var sigmoid(BasicGraph<T>& g, Var a) {
  return unary(
      g, a, [](T v) { return T{1} / (T{1} + std::exp(-v)); }, [](T, T y) { return y * (T{1} - y); });
}

template <class T>
Var tanh(BasicGraph<T>& g, Var a) {
  return unary(g, a, [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <class T>
Var exp(BasicGraph<T>& g, Var a) {
  return unary(g, a, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Var reshape(BasicGraph<T>& g, Var a, Shape shape) {
  BasicTensor<T> out = g.value(a).reshaped(std::move(shape));
  return g.record(std::move(out), g.requires_grad(a), [a](BasicGraph<T>& gr, Var self) {
    const auto& gy = gr.grad(self);
    auto& gx = gr.grad_buffer(a);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

template <class T>
Var slice(BasicGraph<T>& g, Var a, std::size_t begin, std::size_t end) {
  const auto& x = g.value(a);
  if (x.rank() == 0 || begin >= end || end > x.extent(0)) {
    throw DimensionError("slice: rows [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t row = x.size() / x.extent(0);
  Shape shape = x.shape();
  shape[0] = end - begin;
  std::vector<T> vals(x.data() + begin * row, x.data() + end * row);
  BasicTensor<T> out(std::move(shape), std::move(vals));
  return g.record(std::move(out), g.requires_grad(a), [a, begin, row](BasicGraph<T>& gr, Var self) {
    const auto& gy = gr.grad(self);
    auto& gx = gr.grad_buffer(a);
    T* dst = gx.data() + begin * row;
    for (std::size_t i = 0; i < gy.size(); ++i) dst[i] += gy[i];
  });
}

template <class T>
Var concat(BasicGraph<T>& g, std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Shape tail(shape_of(g, parts[0]).begin() + 1, shape_of(g, parts[0]).end());
  std::size_t rows = 0;
  bool rg = false;
  for (Var p : parts) {
    const auto& s = shape_of(g, p);
    if (s.empty() || Shape(s.begin() + 1, s.end()) != tail) {
      throw DimensionError("concat: incompatible part shape " + shape_str(s));
    }
    rows += s[0];
    rg = rg || g.requires_grad(p);
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  BasicTensor<T> out(shape);
  std::size_t offset = 0;
  for (Var p : parts) {
    const auto& v = g.value(p);
    std::copy(v.data(), v.data() + v.size(), out.data() + offset);
    offset += v.size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return g.record(std::move(out), rg, [inputs](BasicGraph<T>& gr, Var self) {
    const auto& gy = gr.grad(self);
    std::size_t off = 0;
    for (Var p : inputs) {
      const std::size_t n = gr.value(p).size();
      if (gr.requires_grad(p)) {
        auto& gp = gr.grad_buffer(p);
        for (std::size_t i = 0; i < n; ++i) gp[i] += gy[off + i];
      }
      off += n;
    }
  });
}

template <class T>
Var dense(BasicGraph<T>& g, Var x, Var w, Var b) {
  const auto& xs = g.value(x);
  const auto& ws = g.value(w);
  if (xs.rank() != 2 || ws.rank() != 2 || xs.extent(1) != ws.extent(1)) {
    throw DimensionError("dense: input " + shape_str(xs.shape()) + " incompatible with weight " +
                         shape_str(ws.shape()));
  }
  const int n = static_cast<int>(xs.extent(0));
  const int in = static_cast<int>(xs.extent(1));
  const int out_dim = static_cast<int>(ws.extent(0));
  if (b.valid()) require_shape(g.value(b), Shape{ws.extent(0)}, "dense bias");
  BasicTensor<T> y(Shape{xs.extent(0), ws.extent(0)});
  if (b.valid()) {
    const auto& bs = g.value(b);
    for (int r = 0; r < n; ++r) std::copy(bs.data(), bs.data() + out_dim, y.data() + r * out_dim);
  }
  gemm<T>(false, true, n, out_dim, in, T{1}, xs.data(), in, ws.data(), in, b.valid() ? T{1} : T{0},
          y.data(), out_dim);
  return g.record(std::move(y), any_requires_grad(g, {x, w, b}),
                  [x, w, b, n, in, out_dim](BasicGraph<T>& gr, Var self) {
                    const auto& gy = gr.grad(self);
                    if (gr.requires_grad(x)) {
                      gemm<T>(false, false, n, in, out_dim, T{1}, gy.data(), out_dim,
                              gr.value(w).data(), in, T{1}, gr.grad_buffer(x).data(), in);
                    }
                    if (gr.requires_grad(w)) {
                      gemm<T>(true, false, out_dim, in, n, T{1}, gy.data(), out_dim,
                              gr.value(x).data(), in, T{1}, gr.grad_buffer(w).data(), in);
                    }
                    if (b.valid() && gr.requires_grad(b)) {
                      auto& gb = gr.grad_buffer(b);
                      for (int r = 0; r < n; ++r) {
                        for (int o = 0; o < out_dim; ++o) gb[o] += gy[r * out_dim + o];
                      }
                    }
                  });
}

template <class T>
Var conv2d(BasicGraph<T>& g, Var x, Var w, Var b, int stride, int pad) {
  const auto& xs = g.value(x);
  const auto& ws = g.value(w);
  if (xs.rank() != 4 || ws.rank() != 4) {
    throw DimensionError("conv2d: expected rank-4 input and weight, got " + shape_str(xs.shape()) +
                         " and " + shape_str(ws.shape()));
  }
  const int n = static_cast<int>(xs.extent(0));
  const int c = static_cast<int>(xs.extent(1));
  const int h = static_cast<int>(xs.extent(2));
  const int wd = static_cast<int>(xs.extent(3));
  const int o = static_cast<int>(ws.extent(0));
  const int k = static_cast<int>(ws.extent(2));
  if (static_cast<int>(ws.extent(1)) != c || static_cast<int>(ws.extent(3)) != k || k % 2 == 0) {
    throw DimensionError("conv2d: weight " + shape_str(ws.shape()) + " incompatible with input " +
                         shape_str(xs.shape()) + " (kernel must be square and odd)");
  }
  if (stride < 1 || pad < 0 || h + 2 * pad < k || wd + 2 * pad < k) {
    throw DimensionError("conv2d: invalid stride/pad for input " + shape_str(xs.shape()));
  }
  require_shape(g.value(b), Shape{ws.extent(0)}, "conv2d bias");
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (wd + 2 * pad - k) / stride + 1;
  const int ckk = c * k * k;
  const int plane = ho * wo;

  BasicTensor<T> y(Shape{xs.extent(0), ws.extent(0), static_cast<std::size_t>(ho), static_cast<std::size_t>(wo)});
  std::unique_ptr<T[]> col(new T[static_cast<std::size_t>(ckk) * plane]);
  // scratch left uninitialised; im2col writes every entry
  const auto& bs = g.value(b);
  for (int s = 0; s < n; ++s) {
    im2col(xs.data() + static_cast<std::size_t>(s) * c * h * wd, c, h, wd, k, stride, pad, ho, wo, col.get());
    T* ys = y.data() + static_cast<std::size_t>(s) * o * plane;
    for (int oc = 0; oc < o; ++oc) std::fill(ys + oc * plane, ys + (oc + 1) * plane, bs[oc]);
    gemm<T>(false, false, o, plane, ckk, T{1}, ws.data(), ckk, col.get(), plane, T{1}, ys, plane);
  }

  return g.record(std::move(y), any_requires_grad(g, {x, w, b}),
                  [=](BasicGraph<T>& gr, Var self) {
                    const auto& gy = gr.grad(self);
                    const auto& xv = gr.value(x);
                    const auto& wv = gr.value(w);
                    const bool need_x = gr.requires_grad(x);
                    const bool need_w = gr.requires_grad(w);
                    const bool need_b = gr.requires_grad(b);
                    std::unique_ptr<T[]> buf(new T[static_cast<std::size_t>(ckk) * plane]);
                    for (int s = 0; s < n; ++s) {
                      const T* gys = gy.data() + static_cast<std::size_t>(s) * o * plane;
                      if (need_w) {
                        im2col(xv.data() + static_cast<std::size_t>(s) * c * h * wd, c, h, wd, k, stride,
                               pad, ho, wo, buf.get());
                        gemm<T>(false, true, o, ckk, plane, T{1}, gys, plane, buf.get(), plane, T{1},
                                gr.grad_buffer(w).data(), ckk);
                      }
                      if (need_b) {
                        auto& gb = gr.grad_buffer(b);
                        for (int oc = 0; oc < o; ++oc) {
                          T acc{0};
                          for (int i = 0; i < plane; ++i) acc += gys[oc * plane + i];
                          gb[oc] += acc;
                        }
                      }
                      if (need_x) {
                        gemm<T>(true, false, ckk, plane, o, T{1}, wv.data(), ckk, gys, plane, T{0},
                                buf.get(), plane);
                        col2im_add(buf.get(), c, h, wd, k, stride, pad, ho, wo,
                                   gr.grad_buffer(x).data() + static_cast<std::size_t>(s) * c * h * wd);
                      }
                    }
                  });
}

template <class T>
Var upsample_nearest2x(BasicGraph<T>& g, Var x) {
  const auto& xs = g.value(x);
  if (xs.rank() != 4) throw DimensionError("upsample_nearest2x: expected rank 4, got " + shape_str(xs.shape()));
  const std::size_t planes = xs.extent(0) * xs.extent(1);
  const std::size_t h = xs.extent(2), w = xs.extent(3);
  BasicTensor<T> y(Shape{xs.extent(0), xs.extent(1), 2 * h, 2 * w});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = xs.data() + p * h * w;
    T* dst = y.data() + p * 4 * h * w;
    for (std::size_t r = 0; r < 2 * h; ++r) {
      for (std::size_t c = 0; c < 2 * w; ++c) dst[r * 2 * w + c] = src[(r / 2) * w + c / 2];
    }
  }
  return g.record(std::move(y), g.requires_grad(x), [x, planes, h, w](BasicGraph<T>& gr, Var self) {
    const auto& gy = gr.grad(self);
    auto& gx = gr.grad_buffer(x);
    for (std::size_t p = 0; p < planes; ++p) {
      const T* src = gy.data() + p * 4 * h * w;
      T* dst = gx.data() + p * h * w;
      for (std::size_t r = 0; r < 2 * h; ++r) {
        for (std::size_t c = 0; c < 2 * w; ++c) dst[(r / 2) * w + c / 2] += src[r * 2 * w + c];
      }
    }
  });
}

template <class T>
Var upsample_bilinear(BasicGraph<T>& g, Var x, int factor) {
  const auto& xs = g.value(x);
  if (xs.rank() != 4 || factor < 1) {
    throw DimensionError("upsample_bilinear: expected rank 4 and factor >= 1, got " + shape_str(xs.shape()));
  }
  const std::size_t planes = xs.extent(0) * xs.extent(1);
  const std::size_t h = xs.extent(2), w = xs.extent(3);
  const std::size_t oh = h * factor, ow = w * factor;
  auto rows = upsample_taps(h, factor);
  auto cols = upsample_taps(w, factor);
  BasicTensor<T> y(Shape{xs.extent(0), xs.extent(1), oh, ow});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = xs.data() + p * h * w;
    T* dst = y.data() + p * oh * ow;
    for (std::size_t r = 0; r < oh; ++r) {
      const Tap& tr = rows[r];
      for (std::size_t c = 0; c < ow; ++c) {
        const Tap& tc = cols[c];
        const double top = (1 - tc.frac) * src[tr.lo * w + tc.lo] + tc.frac * src[tr.lo * w + tc.hi];
        const double bot = (1 - tc.frac) * src[tr.hi * w + tc.lo] + tc.frac * src[tr.hi * w + tc.hi];
        dst[r * ow + c] = static_cast<T>((1 - tr.frac) * top + tr.frac * bot);
      }
    }
  }
  return g.record(std::move(y), g.requires_grad(x),
                  [x, planes, h, w, oh, ow, rows = std::move(rows), cols = std::move(cols)](BasicGraph<T>& gr, Var self) {
                    const auto& gy = gr.grad(self);
                    auto& gx = gr.grad_buffer(x);
                    for (std::size_t p = 0; p < planes; ++p) {
                      const T* src = gy.data() + p * oh * ow;
                      T* dst = gx.data() + p * h * w;
                      for (std::size_t r = 0; r < oh; ++r) {
                        const Tap& tr = rows[r];
                        for (std::size_t c = 0; c < ow; ++c) {
                          const Tap& tc = cols[c];
                          const T v = src[r * ow + c];
                          dst[tr.lo * w + tc.lo] += static_cast<T>((1 - tr.frac) * (1 - tc.frac)) * v;
                          dst[tr.lo * w + tc.hi] += static_cast<T>((1 - tr.frac) * tc.frac) * v;
                          dst[tr.hi * w + tc.lo] += static_cast<T>(tr.frac * (1 - tc.frac)) * v;
                          dst[tr.hi * w + tc.hi] += static_cast<T>(tr.frac * tc.frac) * v;
                        }
                      }
                    }
                  });
}

template <class T>
Var sum(BasicGraph<T>& g, Var a) {
  const auto& x = g.value(a);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
  return g.record(BasicTensor<T>::scalar(static_cast<T>(acc)), g.requires_grad(a), [a](BasicGraph<T>& gr, Var self) {
    const T gy = gr.grad(self)[0];
    auto& gx = gr.grad_buffer(a);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy;
  });
}

template <class T>
Var sum_squares(BasicGraph<T>& g, Var a) {
  const auto& x = g.value(a);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += static_cast<double>(x[i]) * x[i];
  return g.record(BasicTensor<T>::scalar(static_cast<T>(acc)), g.requires_grad(a), [a](BasicGraph<T>& gr, Var self) {
    const T gy = gr.grad(self)[0];
    const auto& xv = gr.value(a);
    auto& gx = gr.grad_buffer(a);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += T{2} * xv[i] * gy;
  });
}

template <class T>
Var mse(BasicGraph<T>& g, Var a, Var b) {
  const T one{1};
  return weighted_frame_mse(g, a, b, std::span<const T>(&one, 1));
}

template <class T>
Var weighted_frame_mse(BasicGraph<T>& g, Var a, Var b, std::span<const T> weights) {
  require_same_shape(g, a, b, "weighted_frame_mse");
  const auto& x = g.value(a);
  const auto& y = g.value(b);
  const std::size_t frames = weights.size();
  if (frames == 0 || x.size() % frames != 0 || (frames > 1 && (x.rank() == 0 || x.extent(0) != frames))) {
    throw DimensionError("weighted_frame_mse: " + std::to_string(frames) + " weights for shape " +
                         shape_str(x.shape()));
  }
  const std::size_t per = x.size() / frames;
  double acc = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    double frame = 0.0;
    for (std::size_t i = t * per; i < (t + 1) * per; ++i) {
      const double d = static_cast<double>(x[i]) - y[i];
      frame += d * d;
    }
    acc += weights[t] * frame / static_cast<double>(per);
  }
  std::vector<T> w(weights.begin(), weights.end());
  return g.record(BasicTensor<T>::scalar(static_cast<T>(acc)), any_requires_grad(g, {a, b}),
                  [a, b, w = std::move(w), per](BasicGraph<T>& gr, Var self) {
                    const T gy = gr.grad(self)[0];
                    const auto& xv = gr.value(a);
                    const auto& yv = gr.value(b);
                    const bool need_a = gr.requires_grad(a), need_b = gr.requires_grad(b);
                    T* ga = need_a ? gr.grad_buffer(a).data() : nullptr;
                    T* gb = need_b ? gr.grad_buffer(b).data() : nullptr;
                    for (std::size_t t = 0; t < w.size(); ++t) {
                      const T coef = T{2} * w[t] * gy / static_cast<T>(per);
                      for (std::size_t i = t * per; i < (t + 1) * per; ++i) {
                        const T d = coef * (xv[i] - yv[i]);
                        if (ga) ga[i] += d;
                        if (gb) gb[i] -= d;
                      }
                    }
                  });
}

template <class T>
Var masked_sse(BasicGraph<T>& g, Var a, Var b, const BasicTensor<T>& mask) {
  require_same_shape(g, a, b, "masked_sse");
  require_shape(mask, g.value(a).shape(), "masked_sse mask");
  const auto& x = g.value(a);
  const auto& y = g.value(b);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = (static_cast<double>(x[i]) - y[i]) * mask[i];
    acc += d * d;
  }
  return g.record(BasicTensor<T>::scalar(static_cast<T>(acc)), any_requires_grad(g, {a, b}),
                  [a, b, mask](BasicGraph<T>& gr, Var self) {
                    const T gy = gr.grad(self)[0];
                    const auto& xv = gr.value(a);
                    const auto& yv = gr.value(b);
                    T* ga = gr.requires_grad(a) ? gr.grad_buffer(a).data() : nullptr;
                    T* gb = gr.requires_grad(b) ? gr.grad_buffer(b).data() : nullptr;
                    for (std::size_t i = 0; i < xv.size(); ++i) {
                      const T d = T{2} * mask[i] * mask[i] * (xv[i] - yv[i]) * gy;
                      if (ga) ga[i] += d;
                      if (gb) gb[i] -= d;
                    }
                  });
}

template <class T>
Var kl_gaussian(BasicGraph<T>& g, Var mu, Var logvar) {
  require_same_shape(g, mu, logvar, "kl_gaussian");
  const auto& m = g.value(mu);
  const auto& lv = g.value(logvar);
  double acc = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double l = lv[i];
    acc += 0.5 * (static_cast<double>(m[i]) * m[i] + std::exp(l) - 1.0 - l);
  }
  return g.record(BasicTensor<T>::scalar(static_cast<T>(acc)), any_requires_grad(g, {mu, logvar}),
                  [mu, logvar](BasicGraph<T>& gr, Var self) {
                    const T gy = gr.grad(self)[0];
                    const auto& mv = gr.value(mu);
                    const auto& lvv = gr.value(logvar);
                    if (gr.requires_grad(mu)) {
                      auto& gm = gr.grad_buffer(mu);
                      for (std::size_t i = 0; i < mv.size(); ++i) gm[i] += mv[i] * gy;
                    }
                    if (gr.requires_grad(logvar)) {
                      auto& gl = gr.grad_buffer(logvar);
                      for (std::size_t i = 0; i < lvv.size(); ++i) gl[i] += T(0.5) * (std::exp(lvv[i]) - T{1}) * gy;
                    }
                  });
}

template <class T>
Var spatial_gradient(BasicGraph<T>& g, Var field) {
  const auto& f = g.value(field);
  if (f.rank() != 4 || f.extent(1) != 2 || f.extent(2) < 2 || f.extent(3) < 2) {
    throw DimensionError("spatial_gradient: expected T x 2 x H x W (H, W >= 2), got " + shape_str(f.shape()));
  }
  const std::size_t frames = f.extent(0), h = f.extent(2), w = f.extent(3);
  BasicTensor<T> out(Shape{frames, 4, h, w});
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t comp = 0; comp < 2; ++comp) {
      const T* src = f.data() + (t * 2 + comp) * h * w;
      T* dcol = out.data() + (t * 4 + comp * 2) * h * w;
      T* drow = dcol + h * w;
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
          const std::size_t cc = std::min(c, w - 2);
          const std::size_t rr = std::min(r, h - 2);
          dcol[r * w + c] = src[r * w + cc + 1] - src[r * w + cc];
          drow[r * w + c] = src[(rr + 1) * w + c] - src[rr * w + c];
        }
      }
    }
  }
  return g.record(std::move(out), g.requires_grad(field), [field, frames, h, w](BasicGraph<T>& gr, Var self) {
    const auto& gy = gr.grad(self);
    auto& gf = gr.grad_buffer(field);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t comp = 0; comp < 2; ++comp) {
        T* dst = gf.data() + (t * 2 + comp) * h * w;
        const T* gcol = gy.data() + (t * 4 + comp * 2) * h * w;
        const T* grow = gcol + h * w;
        for (std::size_t r = 0; r < h; ++r) {
          for (std::size_t c = 0; c < w; ++c) {
            const std::size_t cc = std::min(c, w - 2);
            const std::size_t rr = std::min(r, h - 2);
            dst[r * w + cc + 1] += gcol[r * w + c];
            dst[r * w + cc] -= gcol[r * w + c];
            dst[(rr + 1) * w + c] += grow[r * w + c];
            dst[rr * w + c] -= grow[r * w + c];
          }
        }
      }
    }
  });
}

namespace {

// Bilinear sample with clamp-to-edge; also reports the partial derivatives
// with respect to the sample position (zero along clamped axes).
template <class T>
struct Sample {
  T value, d_col, d_row;
  std::size_t i00, i01, i10, i11;
  T w00, w01, w10, w11;
};

template <class T>
Sample<T> bilinear(const T* img, std::size_t h, std::size_t w, T col, T row) {
  const T max_c = static_cast<T>(w - 1), max_r = static_cast<T>(h - 1);
  if (std::isnan(col) || std::isnan(row)) {
    Sample<T> bad{};
    bad.value = bad.d_col = bad.d_row = std::numeric_limits<T>::quiet_NaN();
    return bad;
  }
  const bool clamp_c = col < T{0} || col > max_c;
  const bool clamp_r = row < T{0} || row > max_r;
  const T cc = std::clamp(col, T{0}, max_c);
  const T rc = std::clamp(row, T{0}, max_r);
  const std::size_t c0 = std::min(static_cast<std::size_t>(cc), w - 1);
  const std::size_t r0 = std::min(static_cast<std::size_t>(rc), h - 1);
  const std::size_t c1 = std::min(c0 + 1, w - 1);
  const std::size_t r1 = std::min(r0 + 1, h - 1);
  const T ac = cc - static_cast<T>(c0);
  const T ar = rc - static_cast<T>(r0);
  Sample<T> s;
  s.i00 = r0 * w + c0;
  s.i01 = r0 * w + c1;
  s.i10 = r1 * w + c0;
  s.i11 = r1 * w + c1;
  s.w00 = (1 - ar) * (1 - ac);
  s.w01 = (1 - ar) * ac;
  s.w10 = ar * (1 - ac);
  s.w11 = ar * ac;
  const T v00 = img[s.i00], v01 = img[s.i01], v10 = img[s.i10], v11 = img[s.i11];
  s.value = s.w00 * v00 + s.w01 * v01 + s.w10 * v10 + s.w11 * v11;
  s.d_col = clamp_c ? T{0} : (1 - ar) * (v01 - v00) + ar * (v11 - v10);
  s.d_row = clamp_r ? T{0} : (1 - ac) * (v10 - v00) + ac * (v11 - v01);
  return s;
}

}  // namespace

template <class T>
Var warp(BasicGraph<T>& g, Var img, Var field) {
  const auto& im = g.value(img);
  const auto& f = g.value(field);
  if (im.rank() != 3 || f.rank() != 4 || f.extent(1) != 2 || f.extent(0) != im.extent(0) ||
      f.extent(2) != im.extent(1) || f.extent(3) != im.extent(2)) {
    throw DimensionError("warp: image " + shape_str(im.shape()) + " incompatible with field " +
                         shape_str(f.shape()));
  }
  const std::size_t frames = im.extent(0), h = im.extent(1), w = im.extent(2);
  BasicTensor<T> out(Shape{frames, h, w});
  for (std::size_t t = 0; t < frames; ++t) {
    const T* src = im.data() + t * h * w;
    const T* fx = f.data() + t * 2 * h * w;
    const T* fy = fx + h * w;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const std::size_t i = r * w + c;
        out[t * h * w + i] = bilinear(src, h, w, static_cast<T>(c) + fx[i], static_cast<T>(r) + fy[i]).value;
      }
    }
  }
  return g.record(std::move(out), any_requires_grad(g, {img, field}),
                  [img, field, frames, h, w](BasicGraph<T>& gr, Var self) {
                    const auto& gy = gr.grad(self);
                    const auto& imv = gr.value(img);
                    const auto& fv = gr.value(field);
                    T* gi = gr.requires_grad(img) ? gr.grad_buffer(img).data() : nullptr;
                    T* gf = gr.requires_grad(field) ? gr.grad_buffer(field).data() : nullptr;
                    for (std::size_t t = 0; t < frames; ++t) {
                      const T* src = imv.data() + t * h * w;
                      const T* fx = fv.data() + t * 2 * h * w;
                      const T* fy = fx + h * w;
                      for (std::size_t r = 0; r < h; ++r) {
                        for (std::size_t c = 0; c < w; ++c) {
                          const std::size_t i = r * w + c;
                          const T go = gy[t * h * w + i];
                          if (go == T{0}) continue;
                          const auto s = bilinear(src, h, w, static_cast<T>(c) + fx[i], static_cast<T>(r) + fy[i]);
                          if (gf) {
                            gf[t * 2 * h * w + i] += go * s.d_col;
                            gf[t * 2 * h * w + h * w + i] += go * s.d_row;
                          }
                          if (gi) {
                            T* dst = gi + t * h * w;
                            dst[s.i00] += go * s.w00;
                            dst[s.i01] += go * s.w01;
                            dst[s.i10] += go * s.w10;
                            dst[s.i11] += go * s.w11;
                          }
                        }
                      }
                    }
                  });
}

template <class T>
Var gru_step(BasicGraph<T>& g, Var h_prev, Var x, const GruVars& p) {
  const Var none{};
  auto gate = [&](Var w, Var u, Var b) { return add(g, dense(g, x, w, b), dense(g, h_prev, u, none)); };
  const Var reset = sigmoid(g, gate(p.w_reset, p.u_reset, p.b_reset));
  const Var update = sigmoid(g, gate(p.w_update, p.u_update, p.b_update));
  const Var gated = mul(g, reset, h_prev);
  const Var cand = tanh(g, add(g, dense(g, x, p.w_cand, p.b_cand), dense(g, gated, p.u_cand, none)));
  return add(g, h_prev, mul(g, update, sub(g, cand, h_prev)));
}

#define BMTK_INSTANTIATE_OPS(T)                                                           \
  template Var add<T>(BasicGraph<T>&, Var, Var);                                          \
  template Var sub<T>(BasicGraph<T>&, Var, Var);                                          \
  template Var mul<T>(BasicGraph<T>&, Var, Var);                                          \
  template Var scale<T>(BasicGraph<T>&, Var, T);                                          \
  template Var add_scalar<T>(BasicGraph<T>&, Var, T);                                     \
  template Var leaky_relu<T>(BasicGraph<T>&, Var, T);                                     \
  template Var sigmoid<T>(BasicGraph<T>&, Var);                                           \
  template Var tanh<T>(BasicGraph<T>&, Var);                                              \
  template Var exp<T>(BasicGraph<T>&, Var);                                               \
  template Var reshape<T>(BasicGraph<T>&, Var, Shape);                                    \
  template Var slice<T>(BasicGraph<T>&, Var, std::size_t, std::size_t);                   \
  template Var concat<T>(BasicGraph<T>&, std::span<const Var>);                           \
  template Var dense<T>(BasicGraph<T>&, Var, Var, Var);                                   \
  template Var conv2d<T>(BasicGraph<T>&, Var, Var, Var, int, int);                        \
  template Var upsample_nearest2x<T>(BasicGraph<T>&, Var);                                \
  template Var upsample_bilinear<T>(BasicGraph<T>&, Var, int);                            \
  template Var sum<T>(BasicGraph<T>&, Var);                                               \
  template Var sum_squares<T>(BasicGraph<T>&, Var);                                       \
  template Var mse<T>(BasicGraph<T>&, Var, Var);                                          \
  template Var weighted_frame_mse<T>(BasicGraph<T>&, Var, Var, std::span<const T>);       \
  template Var masked_sse<T>(BasicGraph<T>&, Var, Var, const BasicTensor<T>&);            \
  template Var kl_gaussian<T>(BasicGraph<T>&, Var, Var);                                  \
  template Var spatial_gradient<T>(BasicGraph<T>&, Var);                                  \
  template Var warp<T>(BasicGraph<T>&, Var, Var);                                         \
  template Var gru_step<T>(BasicGraph<T>&, Var, Var, const GruVars&);

BMTK_INSTANTIATE_OPS(float)
BMTK_INSTANTIATE_OPS(double)

#undef BMTK_INSTANTIATE_OPS

}  // namespace bmtk::ad
