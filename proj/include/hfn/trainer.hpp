#pragma once

// Reconstruction training of encoder + decoder on pre-fused images.
//
// Each train pair yields two samples per epoch (I_iw and I_vw). A sample runs
// encode -> decode with feedback and is scored against itself with the
// composite loss. The fusion layer is not part of the training graph.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hfn/dataset.hpp"
#include "hfn/losses.hpp"
#include "hfn/metrics.hpp"
#include "hfn/network.hpp"

namespace hfn {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OptimizerKind { adam, sgd };

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 200;
  std::size_t image_size = 256;
  std::size_t max_steps = 0;  // 0: run all epochs
  std::uint64_t seed = 0;
  PreFusionConfig pre_fusion;
  LossConfig loss;
  FeedbackConfig feedback;
  OptimizerKind optimizer = OptimizerKind::adam;
  AdamConfig adam;

  void validate() const {
    if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw ContractError("learning_rate must be finite and >= 0");
    if (batch_size < 1) throw ContractError("batch_size must be >= 1");
    if (epochs < 1) throw ContractError("epochs must be >= 1");
    pre_fusion.validate();
    loss.validate();
    feedback.validate();
  }
};

/// Adam with bias correction; state is kept per parameter tensor.
template <std::floating_point Real>
class Adam {
 public:
  Adam(double lr, AdamConfig cfg = {}) : lr_(lr), cfg_(cfg) {}

  void step(std::span<Tensor<Real>* const> params, std::span<const Tensor<Real>> grads) {
    if (params.size() != grads.size()) throw ContractError("Adam::step: parameter/gradient count mismatch");
    if (m_.empty()) {
      for (const auto* p : params) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const Real b1 = static_cast<Real>(cfg_.beta1), b2 = static_cast<Real>(cfg_.beta2);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto p = params[k]->data();
      auto g = grads[k].data();
      auto m = m_[k].data();
      auto v = v_[k].data();
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = b1 * m[i] + (Real(1) - b1) * g[i];
        v[i] = b2 * v[i] + (Real(1) - b2) * g[i] * g[i];
        const double mh = static_cast<double>(m[i]) / c1;
        const double vh = static_cast<double>(v[i]) / c2;
        p[i] -= static_cast<Real>(lr_ * mh / (std::sqrt(vh) + cfg_.epsilon));
      }
    }
  }

  std::size_t steps_taken() const { return t_; }

 private:
  double lr_;
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::vector<Tensor<Real>> m_, v_;
};

struct LossRecord {
  double total = 0;
  double pixel = 0;
  double ssim = 0;
  double ag = 0;

  LossRecord& operator+=(const LossRecord& o) {
    total += o.total;
    pixel += o.pixel;
    ssim += o.ssim;
    ag += o.ag;
    return *this;
  }
  LossRecord scaled(double s) const { return {total * s, pixel * s, ssim * s, ag * s}; }
};

struct StepRecord {
  std::size_t epoch;
  std::size_t step;
  LossRecord loss;
};

struct TrainingLog {
  std::vector<StepRecord> steps;
  std::vector<LossRecord> epochs;  // mean per-sample loss of each epoch

  /// UTF-8 lines: epoch,step,L,L_p,L_ssim,L_ag
  void write(std::ostream& os) const {
    os << "epoch,step,L,L_p,L_ssim,L_ag\n";
    for (const auto& s : steps) {
      os << s.epoch << ',' << s.step << ',' << format_fixed(s.loss.total, 9) << ',' << format_fixed(s.loss.pixel, 9)
         << ',' << format_fixed(s.loss.ssim, 9) << ',' << format_fixed(s.loss.ag, 9) << '\n';
    }
  }
};

template <std::floating_point Real>
using ParamGrads = std::array<Tensor<Real>, 2 * kLayerCount>;

/// Reconstruction forward/backward of one [1,1,H,W] sample.
template <std::floating_point Real>
LossRecord reconstruction_gradients(const ModelParams<Real>& params, const Tensor<Real>& input, const LossConfig& loss,
                                    const FeedbackConfig& fb, ParamGrads<Real>& grads_out) {
  Tape<Real> tape;
  const ParamVars<Real> p = bind_params(tape, params);
  const Var<Real> x = tape.constant(input);
  const Var<Real> out = decode(encode(x, p), p, fb);
  const LossTerms<Real> terms = composite_loss(out, x, loss);
  const GradientMap<Real> g = tape.backward(terms.total);
  for (std::size_t i = 0; i < kLayerCount; ++i) {
    grads_out[2 * i] = g[p.layers[i].first];
    grads_out[2 * i + 1] = g[p.layers[i].second];
  }
  return {terms.total.value().item(), terms.pixel.value().item(), terms.ssim.value().item(), terms.ag.value().item()};
}

/// Decoder output for a [1,1,H,W] input without fusion (the training graph).
template <std::floating_point Real>
Tensor<Real> reconstruct(const ModelParams<Real>& params, const Tensor<Real>& input, const FeedbackConfig& fb) {
  const ParamVars<Real> p = constant_params(params);
  return decode(encode(Var<Real>::constant(input), p), p, fb).value();
}

struct TrainResult {
  ModelParams<float> params;
  TrainingLog log;
};

/// Pre-fused training inputs (I_iw, I_vw per pair), in pair order.
inline std::vector<Tensor<float>> training_samples(const PairDataset& ds, const PreFusionConfig& pre) {
  std::vector<Tensor<float>> out;
  for (const ImagePair* pair : ds.train()) {
    auto [iw, vw] = pre_fuse(pair->infrared, pair->visible, pre);
    out.push_back(iw.to_tensor<float>());
    out.push_back(vw.to_tensor<float>());
  }
  return out;
}

/// Trains from `init` (or from init_params(cfg.seed) when absent).
inline TrainResult train(const PairDataset& ds, const TrainConfig& cfg,
                         const std::function<void(const StepRecord&)>& on_step = {},
                         const ModelParams<float>* init = nullptr) {
  cfg.validate();
  const std::vector<Tensor<float>> samples = training_samples(ds, cfg.pre_fusion);
  if (samples.empty()) throw ContractError("train: the dataset has no training pairs");

  TrainResult result{init ? *init : init_params<float>(cfg.seed), {}};
  result.params.validate();
  auto param_ptrs = result.params.tensors();
  Adam<float> adam(cfg.learning_rate, cfg.adam);
  std::mt19937_64 rng(cfg.seed ^ 0x5eedf00dull);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::size_t step = 0;
  ParamGrads<float> sample_grads, batch_grads;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossRecord epoch_sum;
    std::size_t epoch_samples = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      if (cfg.max_steps && step >= cfg.max_steps) break;
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      LossRecord batch_sum;
      for (std::size_t k = begin; k < end; ++k) {
        const LossRecord r =
            reconstruction_gradients(result.params, samples[order[k]], cfg.loss, cfg.feedback, sample_grads);
        if (!std::isfinite(r.total)) {
          throw DivergenceError("loss diverged (non-finite) at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(begin / cfg.batch_size + 1));
        }
        batch_sum += r;
        for (std::size_t t = 0; t < sample_grads.size(); ++t) {
          if (k == begin) {
            batch_grads[t] = std::move(sample_grads[t]);
          } else {
            auto dst = batch_grads[t].data();
            auto src = sample_grads[t].data();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
          }
        }
      }
      const float inv = 1.0f / static_cast<float>(end - begin);
      for (auto& g : batch_grads)
        for (auto& v : g.data()) v *= inv;

      if (cfg.optimizer == OptimizerKind::adam) {
        adam.step(param_ptrs, batch_grads);
      } else {
        for (std::size_t t = 0; t < param_ptrs.size(); ++t) {
          auto p = param_ptrs[t]->data();
          auto g = batch_grads[t].data();
          for (std::size_t i = 0; i < p.size(); ++i) p[i] -= static_cast<float>(cfg.learning_rate) * g[i];
        }
      }
      ++step;
      epoch_sum += batch_sum;
      epoch_samples += end - begin;
      StepRecord rec{epoch, step, batch_sum.scaled(1.0 / static_cast<double>(end - begin))};
      result.log.steps.push_back(rec);
      if (on_step) on_step(rec);
    }
    if (epoch_samples) result.log.epochs.push_back(epoch_sum.scaled(1.0 / static_cast<double>(epoch_samples)));
    if (cfg.max_steps && step >= cfg.max_steps) break;
  }
  return result;
}

/// Per-pixel RMSE between the decoder reconstruction and each training input, pooled.
inline double reconstruction_rmse(const ModelParams<float>& params, const PairDataset& ds, const TrainConfig& cfg) {
  double se = 0;
  std::size_t n = 0;
  for (const auto& x : training_samples(ds, cfg.pre_fusion)) {
    const Tensor<float> y = reconstruct(params, x, cfg.feedback);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = static_cast<double>(y[i]) - static_cast<double>(x[i]);
      se += d * d;
    }
    n += x.size();
  }
  return std::sqrt(se / static_cast<double>(n));
}

}  // namespace hfn
