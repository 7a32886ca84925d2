#pragma once

// Brute-force reference implementations used only by tests. Written as plain
// loops over std::vector<double> with no calls into the library.

#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

struct Plane {
  std::size_t h = 0, w = 0;
  std::vector<double> v;
  double operator()(long y, long x) const {
    if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return 0.0;
    return v[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  }
};

inline Plane random_plane(std::mt19937_64& rng, std::size_t h, std::size_t w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Plane p{h, w, std::vector<double>(h * w)};
  for (auto& x : p.v) x = u(rng);
  return p;
}

/// Direct same-padded cross-correlation. Data is [B,Cin,H,W], weights
/// [Cout,Cin,k,k]. Accumulates bias first, then taps in (ci, ky, kx) order.
template <class Real>
std::vector<Real> conv_direct(const std::vector<Real>& x, std::size_t B, std::size_t Cin, std::size_t H, std::size_t W,
                              const std::vector<Real>& w, const std::vector<Real>& bias, std::size_t Cout,
                              std::size_t k) {
  std::vector<Real> out(B * Cout * H * W);
  const long pad = static_cast<long>(k / 2);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < Cout; ++co)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx) {
          Real acc = bias[co];
          for (std::size_t ci = 0; ci < Cin; ++ci)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(y + ky) - pad, ix = static_cast<long>(xx + kx) - pad;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                acc += w[((co * Cin + ci) * k + ky) * k + kx] *
                       x[((b * Cin + ci) * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)];
              }
          out[((b * Cout + co) * H + y) * W + xx] = acc;
        }
  return out;
}

/// Mean SSIM over all valid 11x11 Gaussian (sigma 1.5) windows.
inline double ssim(const Plane& a, const Plane& b, int k = 11, double sigma = 1.5, double C1 = 1e-4, double C2 = 9e-4) {
  std::vector<std::vector<double>> g(k, std::vector<double>(k));
  double total = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double di = i - (k - 1) / 2.0, dj = j - (k - 1) / 2.0;
      g[i][j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
      total += g[i][j];
    }
  for (auto& row : g)
    for (auto& x : row) x /= total;

  double acc = 0;
  long n = 0;
  for (long y = 0; y + k <= static_cast<long>(a.h); ++y)
    for (long x = 0; x + k <= static_cast<long>(a.w); ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          ma += g[i][j] * a(y + i, x + j);
          mb += g[i][j] * b(y + i, x + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const double da = a(y + i, x + j) - ma, db = b(y + i, x + j) - mb;
          va += g[i][j] * da * da;
          vb += g[i][j] * db * db;
          cov += g[i][j] * da * db;
        }
      acc += ((2 * ma * mb + C1) * (2 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
      ++n;
    }
  return acc / static_cast<double>(n);
}

inline int to_level(double v) {
  const double c = v < 0 ? 0 : (v > 1 ? 1 : v);
  return static_cast<int>(std::floor(c * 255.0 + 0.5));
}

inline double entropy(const Plane& p) {
  std::vector<double> hist(256, 0.0);
  for (double v : p.v) hist[to_level(v)] += 1;
  double h = 0;
  for (double c : hist)
    if (c > 0) h += -(c / p.v.size()) * std::log(c / p.v.size()) / std::log(2.0);
  return h;
}

inline double psnr_one(const Plane& f, const Plane& r) {
  double s = 0;
  for (std::size_t i = 0; i < f.v.size(); ++i) s += (f.v[i] - r.v[i]) * (f.v[i] - r.v[i]);
  if (s == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(f.v.size()) / s);
}

inline double psnr(const Plane& f, const Plane& a, const Plane& b) { return 0.5 * (psnr_one(f, a) + psnr_one(f, b)); }

/// Mean of sqrt((dx^2 + dy^2)/2) over the (H-1)x(W-1) forward-difference region.
inline double avg_gradient(const Plane& p) {
  double s = 0;
  for (long y = 0; y + 1 < static_cast<long>(p.h); ++y)
    for (long x = 0; x + 1 < static_cast<long>(p.w); ++x) {
      const double dx = p(y, x + 1) - p(y, x), dy = p(y + 1, x) - p(y, x);
      s += std::sqrt((dx * dx + dy * dy) / 2.0);
    }
  return s / static_cast<double>((p.h - 1) * (p.w - 1));
}

/// Xydeas-Petrovic edge preservation with zero-padded Sobel and atan orientation.
inline double qabf(const Plane& A, const Plane& B, const Plane& F) {
  constexpr double pi = 3.14159265358979323846;
  auto grad = [](const Plane& p, long y, long x, double& g, double& a) {
    const double sx = (p(y - 1, x + 1) + 2 * p(y, x + 1) + p(y + 1, x + 1)) - (p(y - 1, x - 1) + 2 * p(y, x - 1) + p(y + 1, x - 1));
    const double sy = (p(y + 1, x - 1) + 2 * p(y + 1, x) + p(y + 1, x + 1)) - (p(y - 1, x - 1) + 2 * p(y - 1, x) + p(y - 1, x + 1));
    g = std::hypot(sx, sy);
    if (sx == 0) a = sy == 0 ? 0.0 : (sy > 0 ? pi / 2 : -pi / 2);
    else a = std::atan(sy / sx);
  };
  auto q = [&](double gs, double as, double gf, double af) {
    double G;
    if (gs == gf) G = 1.0;
    else if (gs > gf) G = gf / gs;
    else G = gs / gf;
    const double Al = 1.0 - std::fabs(as - af) * 2.0 / pi;
    return 0.9994 / (1.0 + std::exp(-15.0 * (G - 0.5))) * 0.9879 / (1.0 + std::exp(-22.0 * (Al - 0.8)));
  };
  double num = 0, den = 0;
  for (long y = 0; y < static_cast<long>(F.h); ++y)
    for (long x = 0; x < static_cast<long>(F.w); ++x) {
      double ga, aa, gb, ab, gf, af;
      grad(A, y, x, ga, aa);
      grad(B, y, x, gb, ab);
      grad(F, y, x, gf, af);
      num += q(ga, aa, gf, af) * ga + q(gb, ab, gf, af) * gb;
      den += ga + gb;
    }
  return den == 0 ? 0.0 : num / den;
}

/// Closed-form Qabf when F == A == B and the images have edges.
inline double qabf_ceiling() {
  return 0.9994 / (1.0 + std::exp(-15.0 * 0.5)) * 0.9879 / (1.0 + std::exp(-22.0 * 0.2));
}

}  // namespace oracle
