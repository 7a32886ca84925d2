#pragma once

// Registered infrared/visible pairs: directory ingestion, a deterministic 3:1
// train/test split, and a synthetic face-like corpus for desk-scale runs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hfn/image.hpp"

namespace hfn {

class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { train, test };

struct ImagePair {
  std::string name;
  ImageGray infrared;
  ImageGray visible;
  Split split = Split::train;
};

struct PairDataset {
  std::vector<ImagePair> pairs;  // sorted by name

  std::vector<const ImagePair*> select(Split s) const {
    std::vector<const ImagePair*> out;
    for (const auto& p : pairs)
      if (p.split == s) out.push_back(&p);
    return out;
  }
  std::vector<const ImagePair*> train() const { return select(Split::train); }
  std::vector<const ImagePair*> test() const { return select(Split::test); }
};

/// Number of test pairs for an n-pair corpus: n/4 rounded to nearest, ties up.
inline std::size_t test_count(std::size_t n) { return (n + 2) / 4; }

/// Tags pairs train/test 3:1 using a seeded shuffle of the name-sorted list.
inline void assign_split(PairDataset& ds, std::uint64_t seed) {
  std::sort(ds.pairs.begin(), ds.pairs.end(), [](const ImagePair& a, const ImagePair& b) { return a.name < b.name; });
  std::vector<std::size_t> order(ds.pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_test = test_count(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) ds.pairs[order[k]].split = k < n_test ? Split::test : Split::train;
}

struct IngestConfig {
  std::size_t height = 256;
  std::size_t width = 256;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::map<std::string, std::filesystem::path> list_images(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IngestionError(dir.string() + ": not a readable directory");
  std::map<std::string, fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (!name.empty() && name[0] == '.') continue;
    files.emplace(name, entry.path());
  }
  return files;
}

inline ImageGray ingest(const std::filesystem::path& path, const IngestConfig& cfg, Provenance p) {
  ImageGray img;
  try {
    img = read_pnm(path);
  } catch (const ImageIoError& e) {
    throw IngestionError(e.what());
  }
  img = resize_bilinear(img, cfg.height, cfg.width);
  img.provenance = p;
  return img;
}

}  // namespace detail

/// Reads equally named files from the two directories, converts to gray,
/// resizes and splits 3:1.
inline PairDataset load_dataset(const std::filesystem::path& ir_dir, const std::filesystem::path& vis_dir,
                                const IngestConfig& cfg = {}) {
  const auto ir = detail::list_images(ir_dir);
  const auto vis = detail::list_images(vis_dir);
  for (const auto& [name, path] : ir)
    if (!vis.count(name)) throw IngestionError("unpaired file: " + path.string() + " has no visible counterpart");
  for (const auto& [name, path] : vis)
    if (!ir.count(name)) throw IngestionError("unpaired file: " + path.string() + " has no infrared counterpart");
  if (ir.empty()) throw IngestionError(ir_dir.string() + ": no images found");

  PairDataset ds;
  for (const auto& [name, path] : ir) {
    ImagePair p;
    p.name = std::filesystem::path(name).stem().string();
    p.infrared = detail::ingest(path, cfg, Provenance::infrared);
    p.visible = detail::ingest(vis.at(name), cfg, Provenance::visible);
    ds.pairs.push_back(std::move(p));
  }
  assign_split(ds, cfg.seed);
  return ds;
}

namespace detail {

inline bool in_ellipse(double x, double y, double cx, double cy, double rx, double ry) {
  const double dx = (x - cx) / rx, dy = (y - cy) / ry;
  return dx * dx + dy * dy <= 1.0;
}

inline float snap_u8(double v) { return static_cast<float>(quantize_u8(v)) / 255.0f; }

/// Separable box blur with clamped borders, applied `passes` times.
inline std::vector<double> box_blur(std::vector<double> img, std::size_t n, int radius, int passes) {
  std::vector<double> tmp(img.size());
  const auto N = static_cast<std::ptrdiff_t>(n);
  for (int pass = 0; pass < passes; ++pass) {
    for (int axis = 0; axis < 2; ++axis) {
      for (std::ptrdiff_t y = 0; y < N; ++y) {
        for (std::ptrdiff_t x = 0; x < N; ++x) {
          double s = 0;
          for (int d = -radius; d <= radius; ++d) {
            const std::ptrdiff_t xx = std::clamp<std::ptrdiff_t>(axis == 0 ? x + d : x, 0, N - 1);
            const std::ptrdiff_t yy = std::clamp<std::ptrdiff_t>(axis == 1 ? y + d : y, 0, N - 1);
            s += img[static_cast<std::size_t>(yy * N + xx)];
          }
          tmp[static_cast<std::size_t>(y * N + x)] = s / (2 * radius + 1);
        }
      }
      img.swap(tmp);
    }
  }
  return img;
}

}  // namespace detail

/// Deterministic registered pairs of a face-like layout: a textured, lit
/// "visible" rendering and a smooth, warmer "infrared" rendering. Pixel values
/// are 8-bit quantized so PGM round trips are lossless.
inline PairDataset synth_corpus(std::size_t n_pairs, std::size_t size, std::uint64_t seed) {
  if (n_pairs == 0) throw ContractError("synth_corpus: n_pairs must be >= 1");
  if (size < 8) throw ContractError("synth_corpus: size must be >= 8");
  PairDataset ds;
  const double s = static_cast<double>(size);
  for (std::size_t k = 0; k < n_pairs; ++k) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(k)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto jitter = [&](double scale) { return (u(rng) - 0.5) * 2.0 * scale; };

    const double cx = s / 2 + jitter(0.06 * s), cy = s / 2 + jitter(0.06 * s);
    const double hx = s * (0.30 + jitter(0.04)), hy = s * (0.40 + jitter(0.04));
    const double eye_dx = s * (0.12 + jitter(0.02)), eye_y = cy - s * (0.10 + jitter(0.02));
    const double eye_r = s * (0.045 + jitter(0.01));
    const double nose_y = cy + s * 0.03, mouth_y = cy + s * (0.20 + jitter(0.02));
    const double mouth_rx = s * (0.10 + jitter(0.02)), mouth_ry = s * 0.035;
    const double light = jitter(0.25);
    const double freq = 0.6 + u(rng) * 0.9, phase = u(rng) * 6.283;
    const double skin = 0.55 + jitter(0.08), heat = 0.70 + jitter(0.06);

    std::vector<double> vis(size * size), ir(size * size);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double fx = static_cast<double>(x) + 0.5, fy = static_cast<double>(y) + 0.5;
        double v = 0.25 + 0.2 * fx / s;  // background gradient
        double t = 0.15;
        if (detail::in_ellipse(fx, fy, cx, cy, hx, hy)) {
          v = skin + light * (fx - cx) / s;
          t = heat;
          if (detail::in_ellipse(fx, fy, cx - eye_dx, eye_y, eye_r * 1.6, eye_r) ||
              detail::in_ellipse(fx, fy, cx + eye_dx, eye_y, eye_r * 1.6, eye_r)) {
            v = 0.12;
            t = heat + 0.12;
          } else if (detail::in_ellipse(fx, fy, cx, nose_y, s * 0.035, s * 0.09)) {
            v = skin + 0.12;
            t = heat - 0.15;
          } else if (detail::in_ellipse(fx, fy, cx, mouth_y, mouth_rx, mouth_ry)) {
            v = 0.30;
            t = heat + 0.08;
          }
        }
        v += 0.07 * std::sin(freq * fx + phase) * std::sin(freq * 0.8 * fy) + jitter(0.05);
        vis[y * size + x] = v;
        ir[y * size + x] = t;
      }
    }
    ir = detail::box_blur(std::move(ir), size, 1, 2);

    ImagePair p;
    p.name = "pair" + std::string(k < 10 ? "00" : (k < 100 ? "0" : "")) + std::to_string(k);
    p.visible = ImageGray(size, size, 0.0f, Provenance::visible);
    p.infrared = ImageGray(size, size, 0.0f, Provenance::infrared);
    for (std::size_t i = 0; i < size * size; ++i) {
      p.visible.pixels[i] = detail::snap_u8(vis[i]);
      p.infrared.pixels[i] = detail::snap_u8(ir[i] + jitter(0.004));
    }
    ds.pairs.push_back(std::move(p));
  }
  assign_split(ds, seed);
  return ds;
}

}  // namespace hfn
