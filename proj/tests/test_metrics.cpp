#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "hfn/metrics.hpp"

using hfn::ImageGray;
using testing_support::plane;
using testing_support::random_image;

namespace {

ImageGray textured(std::mt19937_64& rng, std::size_t n) {
  ImageGray img = random_image(rng, n, n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) img(y, x) = 0.5f * img(y, x) + ((x / 4 + y / 4) % 2 ? 0.5f : 0.0f);
  return img;
}

}  // namespace

TEST(Entropy, Anchors) {
  EXPECT_EQ(hfn::entropy(ImageGray(8, 8, 0.3f)), 0.0);
  ImageGray half(8, 8, 0.0f);
  std::fill(half.pixels.begin(), half.pixels.begin() + 32, 1.0f);
  EXPECT_EQ(hfn::entropy(half), 1.0);
  ImageGray ramp(16, 16);
  for (std::size_t i = 0; i < 256; ++i) ramp.pixels[i] = static_cast<float>(i) / 255.0f;
  EXPECT_NEAR(hfn::entropy(ramp), 8.0, 1e-12);
  EXPECT_NEAR(oracle::entropy(plane(ramp)), 8.0, 1e-12);
}

TEST(Entropy, PermutationInvariant) {
  std::mt19937_64 rng(1);
  ImageGray a = random_image(rng, 16, 16);
  const double before = hfn::entropy(a);
  std::shuffle(a.pixels.begin(), a.pixels.end(), rng);
  EXPECT_EQ(hfn::entropy(a), before);
}

TEST(Qabf, IdenticalImagesReachTheSigmoidCeiling) {
  std::mt19937_64 rng(2);
  const auto a = textured(rng, 16);
  EXPECT_NEAR(hfn::qabf(a, a, a), oracle::qabf_ceiling(), 1e-12);
  EXPECT_GT(oracle::qabf_ceiling(), 0.97);
}

// A constant F has no interior edges, but zero padding gives it a bright
// frame; on small images that frame alone pushes the score past 0.05.
TEST(Qabf, ConstantFusedImagePreservesNothing) {
  std::mt19937_64 rng(3);
  const auto a = textured(rng, 64), b = textured(rng, 64);
  EXPECT_LT(hfn::qabf(a, b, ImageGray(64, 64, 0.5f)), 0.05);
  EXPECT_LT(hfn::qabf(a, b, ImageGray(64, 64, 0.0f)), 0.001);
}

TEST(Qabf, RangeAndReferenceSymmetry) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    const auto a = random_image(rng, 10, 10), b = random_image(rng, 10, 10), f = random_image(rng, 10, 10);
    const double q = hfn::qabf(a, b, f);
    EXPECT_GE(q, 0.0);
    EXPECT_LE(q, 1.0);
    EXPECT_NEAR(q, hfn::qabf(b, a, f), 1e-12);
  }
  EXPECT_THROW(hfn::qabf(ImageGray(4, 4), ImageGray(4, 4), ImageGray(4, 5)), hfn::ShapeError);
}

TEST(SsimMetric, Examples) {
  std::mt19937_64 rng(5);
  const auto a = random_image(rng, 16, 16), b = random_image(rng, 16, 16), f = random_image(rng, 16, 16);
  EXPECT_NEAR(hfn::ssim_metric(a, a, a), 1.0, 1e-12);
  EXPECT_NEAR(hfn::ssim_metric(f, a, a), hfn::ssim_value(f, a), 1e-12);
  EXPECT_NEAR(hfn::ssim_metric(f, a, b), hfn::ssim_metric(f, b, a), 1e-12);
}

TEST(Psnr, ConstantOffsetAndSentinel) {
  ImageGray a(8, 8, 0.2f), f(8, 8, 0.2f + 16.0f / 255.0f);
  const double expected = 20.0 * std::log10(255.0 / 16.0);
  EXPECT_NEAR(hfn::psnr(f, a, a), expected, 1e-5);
  EXPECT_TRUE(std::isinf(hfn::psnr(a, a, a)));
  EXPECT_GT(hfn::psnr(a, a, a), 0.0);
}

TEST(Psnr, MonotoneInNoiseVariance) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_image(rng, 16, 16);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> z(a.size());
    for (auto& v : z) v = noise(rng);
    double prev = std::numeric_limits<double>::infinity();
    for (double sigma : {0.01, 0.02, 0.05, 0.1, 0.2}) {
      ImageGray f = a;
      for (std::size_t i = 0; i < f.size(); ++i) f.pixels[i] = a.pixels[i] + static_cast<float>(sigma * z[i]);
      const double p = hfn::psnr(f, a, a);
      EXPECT_LE(p, prev);
      prev = p;
    }
  }
}

TEST(Metrics, MatchBruteForceOracles) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 20; ++t) {
    const auto a = random_image(rng, 16, 16), b = random_image(rng, 16, 16), f = random_image(rng, 16, 16);
    EXPECT_NEAR(hfn::entropy(f), oracle::entropy(plane(f)), 1e-9);
    EXPECT_NEAR(hfn::psnr(f, a, b), oracle::psnr(plane(f), plane(a), plane(b)), 1e-9);
    EXPECT_NEAR(hfn::ssim_metric(f, a, b), 0.5 * (oracle::ssim(plane(f), plane(a)) + oracle::ssim(plane(f), plane(b))), 1e-6);
    EXPECT_NEAR(hfn::qabf(a, b, f), oracle::qabf(plane(a), plane(b), plane(f)), 1e-6);
  }
}

TEST(MetricReport, SortsAndAverages) {
  hfn::MetricReport r{"c", "m", {{"b", 1, 0.2, 0.5, 20}, {"a", 3, 0.4, 0.7, 30}}, {}};
  r.finalize();
  EXPECT_EQ(r.rows[0].pair_id, "a");
  EXPECT_DOUBLE_EQ(r.mean.en, 2.0);
  EXPECT_DOUBLE_EQ(r.mean.psnr, 25.0);

  std::ostringstream csv;
  hfn::write_rows(csv, r);
  EXPECT_NE(csv.str().find("a,3.000000,0.400000,0.700000,30.000000"), std::string::npos);
  std::ostringstream table;
  hfn::write_table(table, r);
  const auto s = table.str();
  EXPECT_LT(s.find("EN"), s.find("Qabf"));
  EXPECT_LT(s.find("Qabf"), s.find("SSIM"));
  EXPECT_LT(s.find("SSIM"), s.find("PSNR"));

  hfn::MetricReport empty{"c", "m", {}, {}};
  EXPECT_THROW(empty.finalize(), hfn::ContractError);
}

TEST(MetricReport, InfiniteValuesPrintAsInf) { EXPECT_EQ(hfn::format_fixed(std::numeric_limits<double>::infinity(), 6), "inf"); }
