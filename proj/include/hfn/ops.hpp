#pragma once

// Differentiable operations. Every op takes Vars, computes its value eagerly
// and, when an input is tracked, records an adjoint on that input's tape.
// Broadcasting is limited to scalar-times-tensor.

#include <cmath>
#include <string>
#include <vector>

#include "hfn/autodiff.hpp"
#include "hfn/conv.hpp"

namespace hfn {

namespace detail {

inline void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

inline void require_rank4(const char* op, const Shape& s) {
  if (s.size() != 4) throw ShapeError(std::string(op) + ": expected [B,C,H,W], got " + to_string(s));
}

template <std::floating_point Real, class F>
Tensor<Real> map(const Tensor<Real>& x, F f) {
  Tensor<Real> out(x.shape());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <std::floating_point Real>
void observe(const Var<Real>& x, auto pred) {
  if (auto* t = x.tape()) t->observe_pattern(x.value().data(), pred);
}

}  // namespace detail

/// Same-size, stride-1 cross-correlation: x[B,Cin,H,W], w[Cout,Cin,k,k], b[Cout].
template <std::floating_point Real>
Var<Real> conv2d(const Var<Real>& x, const Var<Real>& w, const Var<Real>& b) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  detail::require_rank4("conv2d", xs);
  if (ws.size() != 4 || ws[2] != ws[3]) throw ShapeError("conv2d: weights must be [Cout,Cin,k,k], got " + to_string(ws));
  if (ws[2] != 1 && ws[2] != 3) throw ShapeError("conv2d: kernel size must be 1 or 3, got " + std::to_string(ws[2]));
  if (ws[1] != xs[1]) {
    throw ShapeError("conv2d: input has " + std::to_string(xs[1]) + " channels but weights expect " +
                     std::to_string(ws[1]));
  }
  if (b.shape() != Shape{ws[0]}) throw ShapeError("conv2d: bias must be [" + std::to_string(ws[0]) + "], got " + to_string(b.shape()));

  const detail::ConvGeometry g{xs[1], ws[0], ws[2], xs[2], xs[3]};
  const std::size_t batch = xs[0];
  const std::size_t in_stride = g.in_channels * g.plane();
  const std::size_t out_stride = g.out_channels * g.plane();

  Tensor<Real> out(Shape{batch, g.out_channels, g.height, g.width});
  std::vector<Real> col;
  for (std::size_t n = 0; n < batch; ++n) {
    const Real* in = x.value().data().data() + n * in_stride;
    const Real* cols = in;
    if (g.kernel != 1) {
      detail::im2col(in, g, col);
      cols = col.data();
    }
    detail::conv_forward_plane(cols, w.value().data().data(), b.value().data().data(), g,
                               out.data().data() + n * out_stride);
  }

  auto xv = x.shared();
  auto wv = w.shared();
  return detail::emit<Real>(
      "conv2d", std::move(out), {&x, &w, &b},
      [xv, wv, g, batch, in_stride, out_stride](const Tensor<Real>& go, const std::vector<bool>& wanted) {
        std::vector<Tensor<Real>> grads(3);
        if (wanted[0]) grads[0] = Tensor<Real>(xv->shape());
        if (wanted[1]) grads[1] = Tensor<Real>(wv->shape());
        if (wanted[2]) grads[2] = Tensor<Real>(Shape{g.out_channels});
        std::vector<Real> col, col_grad;
        for (std::size_t n = 0; n < batch; ++n) {
          const Real* gout = go.data().data() + n * out_stride;
          const Real* in = xv->data().data() + n * in_stride;
          if (wanted[1]) {
            const Real* cols = in;
            if (g.kernel != 1) {
              detail::im2col(in, g, col);
              cols = col.data();
            }
            detail::conv_weight_grad_plane(cols, gout, g, grads[1].data().data());
          }
          if (wanted[2]) {
            for (std::size_t co = 0; co < g.out_channels; ++co) {
              Real s = Real(0);
              const Real* p = gout + co * g.plane();
              for (std::size_t i = 0; i < g.plane(); ++i) s += p[i];
              grads[2][co] += s;
            }
          }
          if (wanted[0]) {
            detail::conv_col_grad_plane(wv->data().data(), gout, g, col_grad);
            Real* gin = grads[0].data().data() + n * in_stride;
            if (g.kernel == 1) {
              for (std::size_t i = 0; i < in_stride; ++i) gin[i] += col_grad[i];
            } else {
              detail::col2im_add(col_grad, g, gin);
            }
          }
        }
        return grads;
      });
}

/// max(0, x); the subgradient at exactly 0 is 0.
template <std::floating_point Real>
Var<Real> relu(const Var<Real>& x) {
  detail::observe(x, [](Real v) { return v > Real(0); });
  auto xv = x.shared();
  return detail::emit<Real>("relu", detail::map(x.value(), [](Real v) { return v > Real(0) ? v : Real(0); }), {&x},
                            [xv](const Tensor<Real>& go, const std::vector<bool>&) {
                              Tensor<Real> g(go.shape());
                              for (std::size_t i = 0; i < g.size(); ++i) g[i] = (*xv)[i] > Real(0) ? go[i] : Real(0);
                              return std::vector<Tensor<Real>>{std::move(g)};
                            });
}

template <std::floating_point Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b) {
  detail::require_same_shape("add", a.shape(), b.shape());
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return detail::emit<Real>("add", std::move(out), {&a, &b}, [](const Tensor<Real>& go, const std::vector<bool>&) {
    return std::vector<Tensor<Real>>{go, go};
  });
}

template <std::floating_point Real>
Var<Real> sub(const Var<Real>& a, const Var<Real>& b) {
  detail::require_same_shape("sub", a.shape(), b.shape());
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return detail::emit<Real>("sub", std::move(out), {&a, &b}, [](const Tensor<Real>& go, const std::vector<bool>&) {
    return std::vector<Tensor<Real>>{go, detail::map(go, [](Real v) { return -v; })};
  });
}

template <std::floating_point Real>
Var<Real> mul(const Var<Real>& a, const Var<Real>& b) {
  detail::require_same_shape("mul", a.shape(), b.shape());
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  auto av = a.shared();
  auto bv = b.shared();
  return detail::emit<Real>("mul", std::move(out), {&a, &b},
                            [av, bv](const Tensor<Real>& go, const std::vector<bool>&) {
                              Tensor<Real> ga(go.shape()), gb(go.shape());
                              for (std::size_t i = 0; i < go.size(); ++i) {
                                ga[i] = go[i] * (*bv)[i];
                                gb[i] = go[i] * (*av)[i];
                              }
                              return std::vector<Tensor<Real>>{std::move(ga), std::move(gb)};
                            });
}

template <std::floating_point Real>
Var<Real> scale(const Var<Real>& x, Real s) {
  return detail::emit<Real>("scale", detail::map(x.value(), [s](Real v) { return s * v; }), {&x},
                            [s](const Tensor<Real>& go, const std::vector<bool>&) {
                              return std::vector<Tensor<Real>>{detail::map(go, [s](Real v) { return s * v; })};
                            });
}

template <std::floating_point Real>
Var<Real> add_scalar(const Var<Real>& x, Real s) {
  return detail::emit<Real>("add_scalar", detail::map(x.value(), [s](Real v) { return v + s; }), {&x},
                            [](const Tensor<Real>& go, const std::vector<bool>&) { return std::vector<Tensor<Real>>{go}; });
}

inline constexpr double kSqrtGuard = 1e-12;

/// Elementwise square root. The adjoint uses 1 / (2 max(sqrt(x), 1e-12)) so
/// flat regions (x == 0) do not produce infinite gradients.
template <std::floating_point Real>
Var<Real> sqrt(const Var<Real>& x) {
  for (Real v : x.value().data()) {
    if (v < Real(0)) throw DomainError("sqrt: negative operand " + std::to_string(v));
  }
  detail::observe(x, [](Real v) { return v > Real(0); });
  Tensor<Real> out = detail::map(x.value(), [](Real v) { return std::sqrt(v); });
  auto ov = std::make_shared<const Tensor<Real>>(out);
  return detail::emit<Real>("sqrt", std::move(out), {&x}, [ov](const Tensor<Real>& go, const std::vector<bool>&) {
    Tensor<Real> g(go.shape());
    const Real guard = static_cast<Real>(kSqrtGuard);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = go[i] / (Real(2) * std::max((*ov)[i], guard));
    return std::vector<Tensor<Real>>{std::move(g)};
  });
}

template <std::floating_point Real>
Var<Real> square(const Var<Real>& x) {
  auto xv = x.shared();
  return detail::emit<Real>("square", detail::map(x.value(), [](Real v) { return v * v; }), {&x},
                            [xv](const Tensor<Real>& go, const std::vector<bool>&) {
                              Tensor<Real> g(go.shape());
                              for (std::size_t i = 0; i < g.size(); ++i) g[i] = Real(2) * (*xv)[i] * go[i];
                              return std::vector<Tensor<Real>>{std::move(g)};
                            });
}

/// |x| with subgradient 0 at 0.
template <std::floating_point Real>
Var<Real> abs(const Var<Real>& x) {
  detail::observe(x, [](Real v) { return v >= Real(0); });
  auto xv = x.shared();
  return detail::emit<Real>("abs", detail::map(x.value(), [](Real v) { return std::abs(v); }), {&x},
                            [xv](const Tensor<Real>& go, const std::vector<bool>&) {
                              Tensor<Real> g(go.shape());
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                const Real v = (*xv)[i];
                                g[i] = v > Real(0) ? go[i] : (v < Real(0) ? -go[i] : Real(0));
                              }
                              return std::vector<Tensor<Real>>{std::move(g)};
                            });
}

template <std::floating_point Real>
Var<Real> sum(const Var<Real>& x) {
  Real s = Real(0);
  for (Real v : x.value().data()) s += v;
  Shape shape = x.shape();
  return detail::emit<Real>("sum", Tensor<Real>::scalar(s), {&x},
                            [shape](const Tensor<Real>& go, const std::vector<bool>&) {
                              return std::vector<Tensor<Real>>{Tensor<Real>(shape, go.item())};
                            });
}

template <std::floating_point Real>
Var<Real> mean(const Var<Real>& x) {
  Real s = Real(0);
  for (Real v : x.value().data()) s += v;
  const Real n = static_cast<Real>(x.value().size());
  Shape shape = x.shape();
  return detail::emit<Real>("mean", Tensor<Real>::scalar(s / n), {&x},
                            [shape, n](const Tensor<Real>& go, const std::vector<bool>&) {
                              return std::vector<Tensor<Real>>{Tensor<Real>(shape, go.item() / n)};
                            });
}

/// Channel-axis concatenation of [B,Ci,H,W] parts, in argument order.
template <std::floating_point Real>
Var<Real> concat_channels(const std::vector<Var<Real>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no parts");
  const Shape& s0 = parts.front().shape();
  detail::require_rank4("concat_channels", s0);
  std::size_t channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    detail::require_rank4("concat_channels", s);
    if (s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
      throw ShapeError("concat_channels: part " + to_string(s) + " does not match " + to_string(s0));
    }
    channels += s[1];
  }
  const std::size_t batch = s0[0], hw = s0[2] * s0[3];
  Tensor<Real> out(Shape{batch, channels, s0[2], s0[3]});
  for (std::size_t n = 0; n < batch; ++n) {
    Real* dst = out.data().data() + n * channels * hw;
    for (const auto& p : parts) {
      const std::size_t block = p.shape()[1] * hw;
      const Real* src = p.value().data().data() + n * block;
      std::copy(src, src + block, dst);
      dst += block;
    }
  }
  std::vector<Shape> shapes;
  std::vector<const Var<Real>*> inputs;
  for (const auto& p : parts) {
    shapes.push_back(p.shape());
    inputs.push_back(&p);
  }
  return detail::emit<Real>("concat_channels", std::move(out), inputs,
                            [shapes, batch, channels, hw](const Tensor<Real>& go, const std::vector<bool>& wanted) {
                              std::vector<Tensor<Real>> grads(shapes.size());
                              std::size_t offset = 0;
                              for (std::size_t k = 0; k < shapes.size(); ++k) {
                                const std::size_t block = shapes[k][1] * hw;
                                if (wanted[k]) {
                                  grads[k] = Tensor<Real>(shapes[k]);
                                  for (std::size_t n = 0; n < batch; ++n) {
                                    const Real* src = go.data().data() + n * channels * hw + offset;
                                    std::copy(src, src + block, grads[k].data().data() + n * block);
                                  }
                                }
                                offset += block;
                              }
                              return grads;
                            });
}

/// Sub-range [begin, end) of a rank-4 tensor along axis 0 (batch) or 1 (channels).
template <std::floating_point Real>
Var<Real> slice(const Var<Real>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  detail::require_rank4("slice", s);
  if (axis > 1) throw ShapeError("slice: only axes 0 and 1 are supported");
  if (begin >= end || end > s[axis]) throw ShapeError("slice: range out of bounds for " + to_string(s));
  // Treat as [outer, axis_len, inner] and copy the middle range.
  const std::size_t outer = axis == 0 ? 1 : s[0];
  const std::size_t len = s[axis];
  const std::size_t inner = axis == 0 ? s[1] * s[2] * s[3] : s[2] * s[3];
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  Tensor<Real> out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    const Real* src = x.value().data().data() + (o * len + begin) * inner;
    std::copy(src, src + (end - begin) * inner, out.data().data() + o * (end - begin) * inner);
  }
  Shape in_shape = s;
  return detail::emit<Real>("slice", std::move(out), {&x},
                            [in_shape, outer, len, inner, begin, end](const Tensor<Real>& go, const std::vector<bool>&) {
                              Tensor<Real> g(in_shape);
                              for (std::size_t o = 0; o < outer; ++o) {
                                const Real* src = go.data().data() + o * (end - begin) * inner;
                                std::copy(src, src + (end - begin) * inner, g.data().data() + (o * len + begin) * inner);
                              }
                              return std::vector<Tensor<Real>>{std::move(g)};
                            });
}

/// Repeats the channel block `reps` times: output channel c is input channel c mod C.
template <std::floating_point Real>
Var<Real> tile_channels(const Var<Real>& x, std::size_t reps) {
  const Shape& s = x.shape();
  detail::require_rank4("tile_channels", s);
  if (reps == 0) throw ShapeError("tile_channels: reps must be positive");
  const std::size_t block = s[1] * s[2] * s[3];
  Tensor<Real> out(Shape{s[0], s[1] * reps, s[2], s[3]});
  for (std::size_t n = 0; n < s[0]; ++n) {
    const Real* src = x.value().data().data() + n * block;
    for (std::size_t r = 0; r < reps; ++r) std::copy(src, src + block, out.data().data() + (n * reps + r) * block);
  }
  Shape in_shape = s;
  return detail::emit<Real>("tile_channels", std::move(out), {&x},
                            [in_shape, block, reps](const Tensor<Real>& go, const std::vector<bool>&) {
                              Tensor<Real> g(in_shape);
                              for (std::size_t n = 0; n < in_shape[0]; ++n) {
                                Real* dst = g.data().data() + n * block;
                                for (std::size_t r = 0; r < reps; ++r) {
                                  const Real* src = go.data().data() + (n * reps + r) * block;
                                  for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                                }
                              }
                              return std::vector<Tensor<Real>>{std::move(g)};
                            });
}

/// Forward difference along axis 3 (horizontal) or 2 (vertical), cropped to
/// the (H-1)x(W-1) region where both directions exist.
template <std::floating_point Real>
Var<Real> forward_diff(const Var<Real>& x, std::size_t axis) {
  const Shape& s = x.shape();
  detail::require_rank4("forward_diff", s);
  if (axis != 2 && axis != 3) throw ShapeError("forward_diff: axis must be 2 or 3");
  if (s[2] < 2 || s[3] < 2) throw ContractError("forward_diff: image smaller than 2x2: " + to_string(s));
  const std::size_t planes = s[0] * s[1], H = s[2], W = s[3];
  const std::size_t step = axis == 3 ? 1 : W;
  Tensor<Real> out(Shape{s[0], s[1], H - 1, W - 1});
  for (std::size_t p = 0; p < planes; ++p) {
    const Real* src = x.value().data().data() + p * H * W;
    Real* dst = out.data().data() + p * (H - 1) * (W - 1);
    for (std::size_t i = 0; i + 1 < H; ++i)
      for (std::size_t j = 0; j + 1 < W; ++j) dst[i * (W - 1) + j] = src[i * W + j + step] - src[i * W + j];
  }
  Shape in_shape = s;
  return detail::emit<Real>("forward_diff", std::move(out), {&x},
                            [in_shape, planes, H, W, step](const Tensor<Real>& go, const std::vector<bool>&) {
                              Tensor<Real> g(in_shape);
                              for (std::size_t p = 0; p < planes; ++p) {
                                const Real* src = go.data().data() + p * (H - 1) * (W - 1);
                                Real* dst = g.data().data() + p * H * W;
                                for (std::size_t i = 0; i + 1 < H; ++i)
                                  for (std::size_t j = 0; j + 1 < W; ++j) {
                                    const Real v = src[i * (W - 1) + j];
                                    dst[i * W + j + step] += v;
                                    dst[i * W + j] -= v;
                                  }
                              }
                              return std::vector<Tensor<Real>>{std::move(g)};
                            });
}

}  // namespace hfn
