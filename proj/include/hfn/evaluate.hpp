#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hfn/dataset.hpp"
#include "hfn/metrics.hpp"
#include "hfn/network.hpp"

namespace hfn {

/// 8-bit round trip of an image, matching what write_pgm stores.
inline ImageGray quantized(const ImageGray& img) {
  ImageGray out = img;
  for (auto& v : out.pixels) v = static_cast<float>(quantize_u8(v)) / 255.0f;
  return out;
}

/// Fuses every pair and scores (infrared, visible, fused). Rows are sorted by
/// pair name. Metrics are taken on the 8-bit fused image, as it would be written.
inline MetricReport evaluate_corpus(const std::vector<const ImagePair*>& pairs, const ModelParams<float>& params,
                                    const FuseOptions& opts, std::string corpus, std::string method = "hfn",
                                    const std::function<void(const ImagePair&, const ImageGray&)>& on_fused = {}) {
  if (pairs.empty()) throw ContractError("evaluate_corpus: no pairs to evaluate (empty test split)");
  MetricReport report{std::move(corpus), std::move(method), {}, {}};
  for (const ImagePair* p : pairs) {
    const ImageGray fused = quantized(fuse_images(p->infrared, p->visible, params, opts));
    if (on_fused) on_fused(*p, fused);
    report.rows.push_back(measure(p->name, p->infrared, p->visible, fused));
  }
  report.finalize();
  return report;
}

}  // namespace hfn
