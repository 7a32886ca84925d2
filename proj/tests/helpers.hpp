#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "hfn/image.hpp"
#include "hfn/tensor.hpp"
#include "oracles.hpp"

namespace testing_support {

template <class Real>
hfn::Tensor<Real> random_tensor(std::mt19937_64& rng, hfn::Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  hfn::Tensor<Real> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<Real>(u(rng));
  return t;
}

inline hfn::ImageGray random_image(std::mt19937_64& rng, std::size_t h, std::size_t w) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  hfn::ImageGray img(h, w);
  for (auto& v : img.pixels) v = u(rng);
  return img;
}

inline oracle::Plane plane(const hfn::ImageGray& img) {
  return oracle::Plane{img.height, img.width, std::vector<double>(img.pixels.begin(), img.pixels.end())};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("hfn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
