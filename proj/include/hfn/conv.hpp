#pragma once

// Stride-1, same-size cross-correlation kernels on single batch items.
//
// The forward pass lowers the input to a column matrix (one row per
// (in_channel, ky, kx) tap) and accumulates taps into each output plane in
// tap order, starting from the bias. That is the same per-pixel summation
// order as the textbook seven-loop direct convolution, so both agree bit for
// bit when floating-point contraction is disabled.

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace hfn::detail {

struct ConvGeometry {
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t height;
  std::size_t width;

  std::size_t plane() const { return height * width; }
  std::size_t taps() const { return in_channels * kernel * kernel; }
};

/// Column matrix [taps x H*W] with zero padding of width (k-1)/2.
template <class Real>
void im2col(const Real* in, const ConvGeometry& g, std::vector<Real>& col) {
  const std::size_t hw = g.plane();
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(g.kernel / 2);
  const auto H = static_cast<std::ptrdiff_t>(g.height);
  const auto W = static_cast<std::ptrdiff_t>(g.width);
  col.assign(g.taps() * hw, Real(0));
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    const Real* src = in + ci * hw;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx, ++row) {
        Real* dst = col.data() + row * hw;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
        const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
        for (std::ptrdiff_t y = 0; y < H; ++y) {
          const std::ptrdiff_t sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          const Real* s = src + sy * W + dx;
          Real* d = dst + y * W;
          for (std::ptrdiff_t x = x0; x < x1; ++x) d[x] = s[x];
        }
      }
    }
  }
}

/// Scatter-add of a column-matrix gradient back onto the input planes.
template <class Real>
void col2im_add(const std::vector<Real>& col, const ConvGeometry& g, Real* in_grad) {
  const std::size_t hw = g.plane();
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(g.kernel / 2);
  const auto H = static_cast<std::ptrdiff_t>(g.height);
  const auto W = static_cast<std::ptrdiff_t>(g.width);
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    Real* dst = in_grad + ci * hw;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx, ++row) {
        const Real* src = col.data() + row * hw;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
        const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
        for (std::ptrdiff_t y = 0; y < H; ++y) {
          const std::ptrdiff_t sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          Real* d = dst + sy * W + dx;
          const Real* s = src + y * W;
          for (std::ptrdiff_t x = x0; x < x1; ++x) d[x] += s[x];
        }
      }
    }
  }
}

/// out[co] = bias[co] + sum over taps r of w[co][r] * col[r], r ascending.
template <class Real>
void conv_forward_plane(const Real* col, const Real* weights, const Real* bias, const ConvGeometry& g,
                        Real* out) {
  const std::size_t hw = g.plane();
  const std::size_t taps = g.taps();
  std::size_t co = 0;
  for (; co + 4 <= g.out_channels; co += 4) {
    Real* __restrict o0 = out + (co + 0) * hw;
    Real* __restrict o1 = out + (co + 1) * hw;
    Real* __restrict o2 = out + (co + 2) * hw;
    Real* __restrict o3 = out + (co + 3) * hw;
    std::fill(o0, o0 + hw, bias[co + 0]);
    std::fill(o1, o1 + hw, bias[co + 1]);
    std::fill(o2, o2 + hw, bias[co + 2]);
    std::fill(o3, o3 + hw, bias[co + 3]);
    const Real* w0 = weights + (co + 0) * taps;
    const Real* w1 = weights + (co + 1) * taps;
    const Real* w2 = weights + (co + 2) * taps;
    const Real* w3 = weights + (co + 3) * taps;
    for (std::size_t r = 0; r < taps; ++r) {
      const Real* __restrict c = col + r * hw;
      const Real a0 = w0[r], a1 = w1[r], a2 = w2[r], a3 = w3[r];
      for (std::size_t p = 0; p < hw; ++p) {
        const Real v = c[p];
        o0[p] += a0 * v;
        o1[p] += a1 * v;
        o2[p] += a2 * v;
        o3[p] += a3 * v;
      }
    }
  }
  for (; co < g.out_channels; ++co) {
    Real* __restrict o = out + co * hw;
    std::fill(o, o + hw, bias[co]);
    const Real* w = weights + co * taps;
    for (std::size_t r = 0; r < taps; ++r) {
      const Real* __restrict c = col + r * hw;
      const Real a = w[r];
      for (std::size_t p = 0; p < hw; ++p) o[p] += a * c[p];
    }
  }
}

template <class Real>
Real dot(const Real* __restrict a, const Real* __restrict b, std::size_t n) {
  Real s = Real(0);
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

/// w_grad[co][r] += <grad_out[co], col[r]>.
template <class Real>
void conv_weight_grad_plane(const Real* col, const Real* grad_out, const ConvGeometry& g, Real* w_grad) {
  const std::size_t hw = g.plane();
  const std::size_t taps = g.taps();
  for (std::size_t co = 0; co < g.out_channels; ++co) {
    const Real* go = grad_out + co * hw;
    Real* wg = w_grad + co * taps;
    for (std::size_t r = 0; r < taps; ++r) wg[r] += dot(go, col + r * hw, hw);
  }
}

/// col_grad[r] = sum over co of w[co][r] * grad_out[co].
template <class Real>
void conv_col_grad_plane(const Real* weights, const Real* grad_out, const ConvGeometry& g,
                         std::vector<Real>& col_grad) {
  const std::size_t hw = g.plane();
  const std::size_t taps = g.taps();
  col_grad.assign(taps * hw, Real(0));
  std::size_t r = 0;
  for (; r + 4 <= taps; r += 4) {
    Real* __restrict d0 = col_grad.data() + (r + 0) * hw;
    Real* __restrict d1 = col_grad.data() + (r + 1) * hw;
    Real* __restrict d2 = col_grad.data() + (r + 2) * hw;
    Real* __restrict d3 = col_grad.data() + (r + 3) * hw;
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const Real* __restrict go = grad_out + co * hw;
      const Real* w = weights + co * taps + r;
      const Real a0 = w[0], a1 = w[1], a2 = w[2], a3 = w[3];
      for (std::size_t p = 0; p < hw; ++p) {
        const Real v = go[p];
        d0[p] += a0 * v;
        d1[p] += a1 * v;
        d2[p] += a2 * v;
        d3[p] += a3 * v;
      }
    }
  }
  for (; r < taps; ++r) {
    Real* __restrict d = col_grad.data() + r * hw;
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const Real* __restrict go = grad_out + co * hw;
      const Real a = weights[co * taps + r];
      for (std::size_t p = 0; p < hw; ++p) d[p] += a * go[p];
    }
  }
}

}  // namespace hfn::detail
