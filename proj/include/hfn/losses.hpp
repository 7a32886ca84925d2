#pragma once

// Reconstruction losses: pixel distance, SSIM, average gradient, and their
// weighted composite L = lambda * (1 - SSIM) + L_p + gamma * L_ag.

#include <cmath>
#include <string>
#include <vector>

#include "hfn/image.hpp"
#include "hfn/ops.hpp"

namespace hfn {

enum class AgMode {
  literal,          // gamma * AG(O)
  sharpness_match,  // gamma * |AG(I) - AG(O)|
};

enum class PixelMode {
  mse,   // squared norm divided by the element count
  norm,  // Euclidean norm per image, averaged over the batch
};

struct LossConfig {
  double lambda = 100.0;
  double gamma = 0.1;
  int ssim_window = 11;
  double ssim_sigma = 1.5;
  double ssim_c1 = 0.01 * 0.01;
  double ssim_c2 = 0.03 * 0.03;
  AgMode ag_mode = AgMode::sharpness_match;
  PixelMode pixel_mode = PixelMode::mse;

  void validate() const {
    if (ssim_window < 3 || ssim_window % 2 == 0) {
      throw ContractError("ssim_window must be odd and >= 3, got " + std::to_string(ssim_window));
    }
    if (!(ssim_sigma > 0)) throw ContractError("ssim_sigma must be positive");
    if (!(ssim_c1 > 0) || !(ssim_c2 > 0)) throw ContractError("ssim constants must be positive");
  }
};

namespace detail {

/// Normalized 2-D Gaussian window, row-major size x size.
inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double total = 0;
  for (int i = 0; i < size; ++i) {
    g[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  std::vector<double> w(static_cast<std::size_t>(size * size));
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) w[i * size + j] = g[i] * g[j];
  return w;
}

/// SSIM over one H x W plane using every fully contained window position.
/// When grad_x / grad_y are non-null, adds `scale` * dS_mean/dx (and /dy).
template <std::floating_point Real>
double ssim_plane(const Real* x, const Real* y, std::size_t H, std::size_t W, const LossConfig& cfg,
                  const std::vector<double>& window, Real* grad_x = nullptr, Real* grad_y = nullptr,
                  double scale = 0.0) {
  const auto k = static_cast<std::size_t>(cfg.ssim_window);
  const std::size_t rows = H - k + 1, cols = W - k + 1;
  const double count = static_cast<double>(rows * cols);
  const double C1 = cfg.ssim_c1, C2 = cfg.ssim_c2;
  double total = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t u = 0; u < k; ++u) {
        const Real* xr = x + (i + u) * W + j;
        const Real* yr = y + (i + u) * W + j;
        const double* wr = window.data() + u * k;
        for (std::size_t v = 0; v < k; ++v) {
          const double a = xr[v], b = yr[v], w = wr[v];
          mx += w * a;
          my += w * b;
          sxx += w * a * a;
          syy += w * b * b;
          sxy += w * a * b;
        }
      }
      const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      const double A1 = 2 * mx * my + C1, A2 = 2 * cxy + C2;
      const double B1 = mx * mx + my * my + C1, B2 = vx + vy + C2;
      const double S = (A1 * A2) / (B1 * B2);
      total += S;
      if (!grad_x && !grad_y) continue;

      const double inv = 1.0 / (B1 * B2);
      const double g = scale / count;
      const double d_sxy = g * 2 * A1 * inv;
      const double d_sq = g * (-S / B2);
      const double d_mx = g * (2 * my * A2 * inv - 2 * mx * S / B1 + 2 * mx * S / B2 - 2 * my * A1 * inv);
      const double d_my = g * (2 * mx * A2 * inv - 2 * my * S / B1 + 2 * my * S / B2 - 2 * mx * A1 * inv);
      for (std::size_t u = 0; u < k; ++u) {
        const std::size_t row = (i + u) * W + j;
        const double* wr = window.data() + u * k;
        for (std::size_t v = 0; v < k; ++v) {
          const double a = x[row + v], b = y[row + v], w = wr[v];
          if (grad_x) grad_x[row + v] += static_cast<Real>(w * (d_mx + 2 * a * d_sq + b * d_sxy));
          if (grad_y) grad_y[row + v] += static_cast<Real>(w * (d_my + 2 * b * d_sq + a * d_sxy));
        }
      }
    }
  }
  return total / count;
}

inline void require_window_fits(std::size_t H, std::size_t W, const LossConfig& cfg) {
  const auto k = static_cast<std::size_t>(cfg.ssim_window);
  if (H < k || W < k) {
    throw ContractError("ssim: image " + std::to_string(H) + "x" + std::to_string(W) + " is smaller than the " +
                        std::to_string(k) + "x" + std::to_string(k) + " window");
  }
}

}  // namespace detail

/// Mean SSIM over Gaussian windows, averaged over all [B,C] planes. Differentiable in both arguments.
template <std::floating_point Real>
Var<Real> ssim(const Var<Real>& O, const Var<Real>& I, const LossConfig& cfg) {
  cfg.validate();
  detail::require_same_shape("ssim", O.shape(), I.shape());
  detail::require_rank4("ssim", O.shape());
  const Shape s = O.shape();
  const std::size_t planes = s[0] * s[1], H = s[2], W = s[3];
  detail::require_window_fits(H, W, cfg);
  auto window = std::make_shared<const std::vector<double>>(detail::gaussian_window(cfg.ssim_window, cfg.ssim_sigma));
  double total = 0;
  for (std::size_t p = 0; p < planes; ++p) {
    total += detail::ssim_plane(O.value().data().data() + p * H * W, I.value().data().data() + p * H * W, H, W, cfg,
                                *window);
  }
  auto ov = O.shared();
  auto iv = I.shared();
  return detail::emit<Real>(
      "ssim", Tensor<Real>::scalar(static_cast<Real>(total / static_cast<double>(planes))), {&O, &I},
      [ov, iv, window, cfg, planes, H, W](const Tensor<Real>& go, const std::vector<bool>& wanted) {
        std::vector<Tensor<Real>> grads(2);
        if (wanted[0]) grads[0] = Tensor<Real>(ov->shape());
        if (wanted[1]) grads[1] = Tensor<Real>(iv->shape());
        const double scale = static_cast<double>(go.item()) / static_cast<double>(planes);
        for (std::size_t p = 0; p < planes; ++p) {
          const std::size_t off = p * H * W;
          detail::ssim_plane(ov->data().data() + off, iv->data().data() + off, H, W, cfg, *window,
                             wanted[0] ? grads[0].data().data() + off : nullptr,
                             wanted[1] ? grads[1].data().data() + off : nullptr, scale);
        }
        return grads;
      });
}

/// SSIM of two images, evaluated in double precision.
inline double ssim_value(const ImageGray& a, const ImageGray& b, const LossConfig& cfg = {}) {
  cfg.validate();
  if (!a.same_size(b)) throw ShapeError("ssim: image sizes differ");
  detail::require_window_fits(a.height, a.width, cfg);
  const std::vector<double> da(a.pixels.begin(), a.pixels.end()), db(b.pixels.begin(), b.pixels.end());
  return detail::ssim_plane(da.data(), db.data(), a.height, a.width, cfg,
                            detail::gaussian_window(cfg.ssim_window, cfg.ssim_sigma));
}

/// 1 - SSIM(O, I).
template <std::floating_point Real>
Var<Real> ssim_loss(const Var<Real>& O, const Var<Real>& I, const LossConfig& cfg) {
  return add_scalar(scale(ssim(O, I, cfg), Real(-1)), Real(1));
}

template <std::floating_point Real>
Var<Real> pixel_loss(const Var<Real>& O, const Var<Real>& I, PixelMode mode = PixelMode::mse) {
  detail::require_same_shape("pixel_loss", O.shape(), I.shape());
  const Var<Real> diff = sub(O, I);
  if (mode == PixelMode::mse) return mean(square(diff));
  detail::require_rank4("pixel_loss", O.shape());
  const std::size_t batch = O.shape()[0];
  Var<Real> total;
  for (std::size_t b = 0; b < batch; ++b) {
    Var<Real> norm = sqrt(sum(square(batch == 1 ? diff : slice(diff, 0, b, b + 1))));
    total = b == 0 ? norm : add(total, norm);
  }
  return batch == 1 ? total : scale(total, Real(1) / static_cast<Real>(batch));
}

/// Mean of sqrt((dO/dx^2 + dO/dy^2) / 2) over the (H-1)x(W-1) forward-difference region.
template <std::floating_point Real>
Var<Real> avg_gradient(const Var<Real>& O) {
  detail::require_rank4("avg_gradient", O.shape());
  const Var<Real> dx = forward_diff(O, 3);
  const Var<Real> dy = forward_diff(O, 2);
  return mean(sqrt(scale(add(square(dx), square(dy)), Real(0.5))));
}

/// Scalar average gradient of an image, in double precision.
inline double avg_gradient_value(const ImageGray& img) {
  const Var<double> v = avg_gradient(Var<double>::constant(img.to_tensor<double>()));
  return v.value().item();
}

template <std::floating_point Real>
struct LossTerms {
  Var<Real> total;
  Var<Real> pixel;
  Var<Real> ssim;  // 1 - SSIM
  Var<Real> ag;    // the average-gradient term before weighting by gamma
};

template <std::floating_point Real>
LossTerms<Real> composite_loss(const Var<Real>& O, const Var<Real>& I, const LossConfig& cfg) {
  cfg.validate();
  LossTerms<Real> t;
  t.pixel = pixel_loss(O, I, cfg.pixel_mode);
  t.ssim = ssim_loss(O, I, cfg);
  t.ag = cfg.ag_mode == AgMode::literal ? avg_gradient(O) : abs(sub(avg_gradient(I), avg_gradient(O)));
  Var<Real> total = t.pixel;
  if (cfg.lambda != 0) total = add(total, scale(t.ssim, static_cast<Real>(cfg.lambda)));
  if (cfg.gamma != 0) total = add(total, scale(t.ag, static_cast<Real>(cfg.gamma)));
  t.total = total;
  return t;
}

}  // namespace hfn
