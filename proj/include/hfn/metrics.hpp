#pragma once

// Fusion quality metrics: entropy (EN), edge-preservation (Qabf), two-reference
// SSIM, and two-reference PSNR, plus corpus-level reporting.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "hfn/image.hpp"
#include "hfn/losses.hpp"

namespace hfn {

/// Shannon entropy in bits of the 256-bin histogram of round(255 x).
inline double entropy(const ImageGray& img) {
  std::array<std::size_t, 256> hist{};
  for (float v : img.pixels) ++hist[quantize_u8(v)];
  const double n = static_cast<double>(img.size());
  double h = 0;
  for (std::size_t count : hist) {
    if (count == 0) continue;
    const double p = static_cast<double>(count) / n;
    h -= p * std::log2(p);
  }
  return h;
}

/// Constants of the edge-preservation sigmoids.
struct QabfConstants {
  double gamma_g = 0.9994, kappa_g = -15, sigma_g = 0.5;
  double gamma_a = 0.9879, kappa_a = -22, sigma_a = 0.8;
};

namespace detail {

struct EdgeField {
  std::vector<double> strength;
  std::vector<double> orientation;
};

/// 3x3 Sobel responses with zero-padded borders.
inline EdgeField sobel(const ImageGray& img) {
  static constexpr int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static constexpr int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  const auto H = static_cast<std::ptrdiff_t>(img.height), W = static_cast<std::ptrdiff_t>(img.width);
  EdgeField f;
  f.strength.resize(img.size());
  f.orientation.resize(img.size());
  for (std::ptrdiff_t y = 0; y < H; ++y) {
    for (std::ptrdiff_t x = 0; x < W; ++x) {
      double gx = 0, gy = 0;
      for (int u = -1; u <= 1; ++u) {
        for (int v = -1; v <= 1; ++v) {
          const std::ptrdiff_t yy = y + u, xx = x + v;
          if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
          const double p = img.pixels[static_cast<std::size_t>(yy * W + xx)];
          gx += kx[u + 1][v + 1] * p;
          gy += ky[u + 1][v + 1] * p;
        }
      }
      const auto i = static_cast<std::size_t>(y * W + x);
      f.strength[i] = std::sqrt(gx * gx + gy * gy);
      f.orientation[i] = gx != 0 ? std::atan(gy / gx) : (gy == 0 ? 0.0 : std::copysign(std::numbers::pi / 2, gy));
    }
  }
  return f;
}

/// Per-pixel preservation Q^{XF} of source edges X in the fused image F.
inline double edge_preservation(double gs, double as, double gf, double af, const QabfConstants& c) {
  const double g = gs == gf ? 1.0 : std::min(gs, gf) / std::max(gs, gf);
  const double a = 1.0 - std::abs(as - af) / (std::numbers::pi / 2);
  const double qg = c.gamma_g / (1.0 + std::exp(c.kappa_g * (g - c.sigma_g)));
  const double qa = c.gamma_a / (1.0 + std::exp(c.kappa_a * (a - c.sigma_a)));
  return qg * qa;
}

inline void require_triple(const char* what, const ImageGray& f, const ImageGray& a, const ImageGray& b) {
  if (!f.same_size(a) || !f.same_size(b)) throw ShapeError(std::string(what) + ": images must share one size");
}

}  // namespace detail

/// Edge-strength-weighted mean of the two preservation maps; 0 when no source has edges.
inline double qabf(const ImageGray& A, const ImageGray& B, const ImageGray& F, const QabfConstants& c = {}) {
  detail::require_triple("qabf", F, A, B);
  const auto ea = detail::sobel(A), eb = detail::sobel(B), ef = detail::sobel(F);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < F.size(); ++i) {
    const double qa = detail::edge_preservation(ea.strength[i], ea.orientation[i], ef.strength[i], ef.orientation[i], c);
    const double qb = detail::edge_preservation(eb.strength[i], eb.orientation[i], ef.strength[i], ef.orientation[i], c);
    num += qa * ea.strength[i] + qb * eb.strength[i];
    den += ea.strength[i] + eb.strength[i];
  }
  return den > 0 ? num / den : 0.0;
}

/// Mean of SSIM(F, A) and SSIM(F, B).
inline double ssim_metric(const ImageGray& F, const ImageGray& A, const ImageGray& B, const LossConfig& cfg = {}) {
  detail::require_triple("ssim_metric", F, A, B);
  return (ssim_value(F, A, cfg) + ssim_value(F, B, cfg)) / 2.0;
}

/// Mean of 10 log10(1 / MSE(F, X)) over X in {A, B}, peak 1. Returns +inf if
/// F equals either reference.
inline double psnr(const ImageGray& F, const ImageGray& A, const ImageGray& B) {
  detail::require_triple("psnr", F, A, B);
  auto one = [&](const ImageGray& X) {
    double se = 0;
    for (std::size_t i = 0; i < F.size(); ++i) {
      const double d = static_cast<double>(F.pixels[i]) - static_cast<double>(X.pixels[i]);
      se += d * d;
    }
    const double mse = se / static_cast<double>(F.size());
    return mse == 0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / mse);
  };
  return (one(A) + one(B)) / 2.0;
}

struct MetricRow {
  std::string pair_id;
  double en = 0;
  double qabf = 0;
  double ssim = 0;
  double psnr = 0;
};

struct MetricReport {
  std::string corpus;
  std::string method;
  std::vector<MetricRow> rows;  // sorted by pair_id
  MetricRow mean;

  /// Sorts rows by pair id and recomputes the means.
  void finalize() {
    if (rows.empty()) throw ContractError("metric report: no rows");
    std::sort(rows.begin(), rows.end(), [](const MetricRow& a, const MetricRow& b) { return a.pair_id < b.pair_id; });
    mean = MetricRow{"mean"};
    for (const auto& r : rows) {
      mean.en += r.en;
      mean.qabf += r.qabf;
      mean.ssim += r.ssim;
      mean.psnr += r.psnr;
    }
    const double n = static_cast<double>(rows.size());
    mean.en /= n;
    mean.qabf /= n;
    mean.ssim /= n;
    mean.psnr /= n;
  }
};

inline MetricRow measure(std::string pair_id, const ImageGray& A, const ImageGray& B, const ImageGray& F,
                         const LossConfig& cfg = {}) {
  return MetricRow{std::move(pair_id), entropy(F), qabf(A, B, F), ssim_metric(F, A, B, cfg), psnr(F, A, B)};
}

inline std::string format_fixed(double v, int decimals) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

/// One line per image: pair_id,en,qabf,ssim,psnr with 6 decimals.
inline void write_rows(std::ostream& os, const MetricReport& r) {
  for (const auto& row : r.rows) {
    os << row.pair_id << ',' << format_fixed(row.en, 6) << ',' << format_fixed(row.qabf, 6) << ','
       << format_fixed(row.ssim, 6) << ',' << format_fixed(row.psnr, 6) << '\n';
  }
}

/// Aligned table with columns EN, Qabf, SSIM, PSNR and a closing mean row.
inline void write_table(std::ostream& os, const MetricReport& r) {
  std::size_t w = 8;
  for (const auto& row : r.rows) w = std::max(w, row.pair_id.size());
  auto pad = [](std::string s, std::size_t n) {
    s.resize(std::max(n, s.size()), ' ');
    return s;
  };
  auto lpad = [](std::string s, std::size_t n) { return std::string(n > s.size() ? n - s.size() : 0, ' ') + s; };
  os << "corpus: " << r.corpus << "   method: " << r.method << '\n';
  os << pad("pair", w) << "  " << lpad("EN", 8) << "  " << lpad("Qabf", 8) << "  " << lpad("SSIM", 8) << "  "
     << lpad("PSNR", 8) << '\n';
  auto line = [&](const MetricRow& row) {
    os << pad(row.pair_id, w) << "  " << lpad(format_fixed(row.en, 4), 8) << "  " << lpad(format_fixed(row.qabf, 4), 8)
       << "  " << lpad(format_fixed(row.ssim, 4), 8) << "  " << lpad(format_fixed(row.psnr, 2), 8) << '\n';
  };
  for (const auto& row : r.rows) line(row);
  os << std::string(w + 40, '-') << '\n';
  line(r.mean);
}

}  // namespace hfn
