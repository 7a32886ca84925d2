#pragma once

// Single-channel images in [0,1] and binary PGM/PPM input-output.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "hfn/tensor.hpp"

namespace hfn {

enum class Provenance { infrared, visible, pre_fused, fused, unknown };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::infrared: return "infrared";
    case Provenance::visible: return "visible";
    case Provenance::pre_fused: return "pre-fused";
    case Provenance::fused: return "fused";
    case Provenance::unknown: break;
  }
  return "unknown";
}

/// Raised for undecodable or unreadable image files.
class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ImageGray {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;  // row-major, values in [0,1]
  Provenance provenance = Provenance::unknown;

  ImageGray() = default;
  ImageGray(std::size_t h, std::size_t w, float fill = 0.0f, Provenance p = Provenance::unknown)
      : height(h), width(w), pixels(h * w, fill), provenance(p) {}

  float& operator()(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  float operator()(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  std::size_t size() const { return pixels.size(); }
  bool same_size(const ImageGray& o) const { return height == o.height && width == o.width; }

  /// [1,1,H,W] tensor view of the pixels.
  template <std::floating_point Real>
  Tensor<Real> to_tensor() const {
    return Tensor<Real>(Shape{1, 1, height, width}, std::vector<Real>(pixels.begin(), pixels.end()));
  }

  /// Image from a [1,1,H,W] tensor; values are clamped to [0,1].
  template <std::floating_point Real>
  static ImageGray from_tensor(const Tensor<Real>& t, Provenance p) {
    const Shape& s = t.shape();
    if (s.size() != 4 || s[0] != 1 || s[1] != 1) throw ShapeError("from_tensor: expected [1,1,H,W], got " + to_string(s));
    ImageGray img(s[2], s[3], 0.0f, p);
    for (std::size_t i = 0; i < img.size(); ++i) {
      img.pixels[i] = static_cast<float>(std::clamp(t[i], Real(0), Real(1)));
    }
    return img;
  }

  friend bool operator==(const ImageGray& a, const ImageGray& b) {
    return a.height == b.height && a.width == b.width && a.pixels == b.pixels;
  }
};

/// 8-bit code for a [0,1] value: round(255 x), ties away from zero.
inline std::uint8_t quantize_u8(double v) {
  return static_cast<std::uint8_t>(std::round(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline float luma(double r, double g, double b) { return static_cast<float>(0.299 * r + 0.587 * g + 0.114 * b); }

namespace detail {

inline std::string pnm_token(std::istream& in) {
  std::string tok;
  for (;;) {
    int c = in.get();
    if (c == EOF) break;
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

inline std::size_t pnm_number(std::istream& in, const std::string& path) {
  const std::string tok = pnm_token(in);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw ImageIoError(path + ": malformed PNM header");
  }
  return std::stoul(tok);
}

}  // namespace detail

/// Reads binary PGM (P5) or PPM (P6); color is converted with luma weights.
inline ImageGray read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError(path.string() + ": cannot open");
  const std::string magic = detail::pnm_token(in);
  if (magic != "P5" && magic != "P6") throw ImageIoError(path.string() + ": not a binary PGM/PPM (magic '" + magic + "')");
  const std::size_t width = detail::pnm_number(in, path.string());
  const std::size_t height = detail::pnm_number(in, path.string());
  const std::size_t maxval = detail::pnm_number(in, path.string());
  if (width == 0 || height == 0 || maxval == 0 || maxval > 65535) throw ImageIoError(path.string() + ": invalid PNM header");
  const std::size_t channels = magic == "P6" ? 3 : 1;
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(width * height * channels * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw ImageIoError(path.string() + ": truncated pixel data");

  auto sample = [&](std::size_t i) -> double {
    const double v = bytes_per == 1 ? raw[i] : static_cast<double>((raw[2 * i] << 8) | raw[2 * i + 1]);
    return v / static_cast<double>(maxval);
  };
  ImageGray img(height, width);
  for (std::size_t i = 0; i < img.size(); ++i) {
    img.pixels[i] = channels == 1 ? static_cast<float>(sample(i))
                                  : luma(sample(3 * i), sample(3 * i + 1), sample(3 * i + 2));
  }
  return img;
}

/// Writes an 8-bit binary PGM (P5, maxval 255).
inline void write_pgm(const std::filesystem::path& path, const ImageGray& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError(path.string() + ": cannot open for writing");
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.size());
  std::transform(img.pixels.begin(), img.pixels.end(), raw.begin(), [](float v) { return quantize_u8(v); });
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw ImageIoError(path.string() + ": write failed");
}

/// Bilinear resampling with pixel-centre alignment. Same-size input is returned unchanged.
inline ImageGray resize_bilinear(const ImageGray& img, std::size_t height, std::size_t width) {
  if (img.height == height && img.width == width) return img;
  ImageGray out(height, width, 0.0f, img.provenance);
  const double sy = static_cast<double>(img.height) / static_cast<double>(height);
  const double sx = static_cast<double>(img.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = (1 - wx) * img(y0, x0) + wx * img(y0, x1);
      const double bot = (1 - wx) * img(y1, x0) + wx * img(y1, x1);
      out(y, x) = static_cast<float>((1 - wy) * top + wy * bot);
    }
  }
  return out;
}

}  // namespace hfn
