#pragma once

// Central finite differences and the gradient verification suite.
//
// Each check builds a scalar loss from a few leaf tensors, takes reverse-mode
// gradients, and compares them with (f(x + h e_i) - f(x - h e_i)) / 2h. A
// probe is skipped when either perturbed evaluation changes the branch taken
// at any ReLU, |.| or sqrt input (the tape's kink signature differs), since
// the finite difference is meaningless across a kink.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hfn/losses.hpp"
#include "hfn/network.hpp"

namespace hfn {

/// Central-difference gradient of a scalar function, element by element.
template <std::floating_point Real>
Tensor<Real> finite_diff_gradient(const std::function<Real(const Tensor<Real>&)>& f, const Tensor<Real>& x, Real h) {
  if (!(h > 0)) throw ContractError("finite_diff_gradient: step must be positive");
  Tensor<Real> g(x.shape());
  Tensor<Real> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const Real up = f(probe);
    probe[i] = x[i] - h;
    const Real down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (Real(2) * h);
  }
  return g;
}

/// |a - f| / max(|a|, |f|, floor).
inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// A differentiable scalar built on `tape` from leaf variables.
using LossBuilder = std::function<Var<double>(const std::vector<Var<double>>& leaves)>;

struct GradcheckCase {
  std::string name;
  std::vector<Tensor<double>> inputs;
  LossBuilder loss;
  /// Probes per input tensor; 0 checks every element.
  std::size_t probes = 0;
};

struct ComponentResult {
  std::string name;
  double worst_error = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = true;
};

struct GradcheckOptions {
  double h = 1e-5;
  double tolerance = 1e-4;
  /// Relative-error floor as a fraction of max(1, |loss|); guards near-zero gradients
  /// against finite-difference round-off.
  double floor_fraction = 1e-5;
  std::string corrupt_op;  // adjoint to sabotage (negative control)
  double corrupt_factor = 1.5;
};

/// Runs one case and folds the outcome into `result`.
inline void run_case(const GradcheckCase& c, std::uint64_t seed, const GradcheckOptions& opt, ComponentResult& result) {
  Tape<double> tape;
  if (!opt.corrupt_op.empty()) tape.corrupt_adjoint(opt.corrupt_op, opt.corrupt_factor);
  std::vector<Var<double>> leaves;
  for (const auto& t : c.inputs) leaves.push_back(tape.leaf(t));
  const Var<double> loss = c.loss(leaves);
  const GradientMap<double> grads = tape.backward(loss);

  auto evaluate = [&](const std::vector<Tensor<double>>& inputs, std::uint64_t& signature) {
    Tape<double> t(Tape<double>::Mode::evaluate);
    std::vector<Var<double>> vs;
    for (const auto& x : inputs) vs.push_back(t.leaf(x));
    const double v = c.loss(vs).value().item();
    signature = t.kink_signature();
    return v;
  };
  std::uint64_t base_sig = 0;
  const double base = evaluate(c.inputs, base_sig);
  const double floor = opt.floor_fraction * std::max(1.0, std::abs(base));

  std::mt19937_64 rng(seed);
  std::vector<Tensor<double>> probe = c.inputs;
  for (std::size_t k = 0; k < c.inputs.size(); ++k) {
    const Tensor<double> analytic = grads[leaves[k]];
    std::vector<std::size_t> indices;
    if (c.probes == 0 || c.probes >= c.inputs[k].size()) {
      indices.resize(c.inputs[k].size());
      std::iota(indices.begin(), indices.end(), std::size_t{0});
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, c.inputs[k].size() - 1);
      for (std::size_t n = 0; n < c.probes; ++n) indices.push_back(pick(rng));
    }
    for (std::size_t i : indices) {
      const double x0 = c.inputs[k][i];
      std::uint64_t up_sig = 0, down_sig = 0;
      probe[k][i] = x0 + opt.h;
      const double up = evaluate(probe, up_sig);
      probe[k][i] = x0 - opt.h;
      const double down = evaluate(probe, down_sig);
      probe[k][i] = x0;
      if (up_sig != base_sig || down_sig != base_sig) {
        ++result.skipped;
        continue;
      }
      const double numeric = (up - down) / (2 * opt.h);
      const double err = relative_error(analytic[i], numeric, floor);
      result.worst_error = std::max(result.worst_error, err);
      ++result.checked;
    }
  }
  result.passed = result.passed && result.worst_error < opt.tolerance;
}

namespace detail {

inline Tensor<double> random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

/// sum(x * weights) with fixed random weights: a generic scalar readout.
inline LossBuilder weighted_readout(std::function<Var<double>(const std::vector<Var<double>>&)> body, Tensor<double> w) {
  return [body = std::move(body), w = std::move(w)](const std::vector<Var<double>>& v) {
    const Var<double> out = body(v);
    return sum(mul(out, Var<double>::constant(w)));
  };
}

}  // namespace detail

/// Every gradient-check case for one seed. `pipeline_size` is the image side used for whole-network cases.
inline std::vector<GradcheckCase> gradcheck_cases(std::uint64_t seed, std::size_t pipeline_size = 16) {
  using detail::random_tensor;
  using detail::weighted_readout;
  using V = std::vector<Var<double>>;
  std::mt19937_64 rng(seed);
  std::vector<GradcheckCase> cases;
  const Shape img{1, 4, 8, 8};

  auto unary = [&](std::string name, std::function<Var<double>(const Var<double>&)> op, double lo, double hi,
                   Shape out_shape) {
    cases.push_back({std::move(name), {random_tensor(rng, img, lo, hi)},
                     weighted_readout([op](const V& v) { return op(v[0]); }, random_tensor(rng, std::move(out_shape)))});
  };
  auto binary = [&](std::string name, std::function<Var<double>(const Var<double>&, const Var<double>&)> op) {
    cases.push_back({std::move(name), {random_tensor(rng, img), random_tensor(rng, img)},
                     weighted_readout([op](const V& v) { return op(v[0], v[1]); }, random_tensor(rng, img))});
  };

  cases.push_back({"conv2d",
                   {random_tensor(rng, img), random_tensor(rng, {3, 4, 3, 3}), random_tensor(rng, {3})},
                   weighted_readout([](const V& v) { return conv2d(v[0], v[1], v[2]); }, random_tensor(rng, {1, 3, 8, 8}))});
  cases.push_back({"conv2d",
                   {random_tensor(rng, img), random_tensor(rng, {5, 4, 1, 1}), random_tensor(rng, {5})},
                   weighted_readout([](const V& v) { return conv2d(v[0], v[1], v[2]); }, random_tensor(rng, {1, 5, 8, 8}))});
  unary("relu", [](const Var<double>& x) { return relu(x); }, -1, 1, img);
  binary("add", [](const Var<double>& a, const Var<double>& b) { return add(a, b); });
  binary("sub", [](const Var<double>& a, const Var<double>& b) { return sub(a, b); });
  binary("mul", [](const Var<double>& a, const Var<double>& b) { return mul(a, b); });
  unary("scale", [](const Var<double>& x) { return scale(x, -1.7); }, -1, 1, img);
  unary("add_scalar", [](const Var<double>& x) { return add_scalar(x, 0.3); }, -1, 1, img);
  unary("sqrt", [](const Var<double>& x) { return sqrt(x); }, 0.05, 1, img);
  unary("square", [](const Var<double>& x) { return square(x); }, -1, 1, img);
  unary("abs", [](const Var<double>& x) { return abs(x); }, -1, 1, img);
  cases.push_back({"sum", {random_tensor(rng, img)}, [](const V& v) { return sum(square(v[0])); }});
  cases.push_back({"mean", {random_tensor(rng, img)}, [](const V& v) { return mean(square(v[0])); }});
  cases.push_back({"concat_channels",
                   {random_tensor(rng, {1, 1, 8, 8}), random_tensor(rng, {1, 2, 8, 8}), random_tensor(rng, {1, 1, 8, 8})},
                   weighted_readout([](const V& v) { return concat_channels<double>({v[0], v[1], v[2]}); },
                                    random_tensor(rng, img))});
  unary("slice", [](const Var<double>& x) { return slice(x, 1, 1, 3); }, -1, 1, {1, 2, 8, 8});
  unary("tile_channels", [](const Var<double>& x) { return tile_channels(x, 3); }, -1, 1, {1, 12, 8, 8});
  unary("forward_diff", [](const Var<double>& x) { return forward_diff(x, 3); }, -1, 1, {1, 4, 7, 7});
  unary("forward_diff", [](const Var<double>& x) { return forward_diff(x, 2); }, -1, 1, {1, 4, 7, 7});

  const Shape plane{1, 1, 16, 16};
  const LossConfig defaults;
  LossConfig literal = defaults;
  literal.ag_mode = AgMode::literal;
  cases.push_back({"ssim",
                   {random_tensor(rng, plane, 0, 1), random_tensor(rng, plane, 0, 1)},
                   [defaults](const V& v) { return ssim(v[0], v[1], defaults); }});
  cases.push_back({"loss.pixel(mse)",
                   {random_tensor(rng, plane, 0, 1), random_tensor(rng, plane, 0, 1)},
                   [](const V& v) { return pixel_loss(v[0], v[1], PixelMode::mse); }});
  cases.push_back({"loss.pixel(norm)",
                   {random_tensor(rng, plane, 0, 1), random_tensor(rng, plane, 0, 1)},
                   [](const V& v) { return pixel_loss(v[0], v[1], PixelMode::norm); }});
  cases.push_back({"loss.ssim",
                   {random_tensor(rng, plane, 0, 1), random_tensor(rng, plane, 0, 1)},
                   [defaults](const V& v) { return ssim_loss(v[0], v[1], defaults); }});
  cases.push_back({"loss.avg_gradient", {random_tensor(rng, plane, 0, 1)}, [](const V& v) { return avg_gradient(v[0]); }});
  cases.push_back({"loss.composite(sharpness_match)",
                   {random_tensor(rng, plane, 0, 1), random_tensor(rng, plane, 0, 1)},
                   [defaults](const V& v) { return composite_loss(v[0], v[1], defaults).total; }});
  cases.push_back({"loss.composite(literal)",
                   {random_tensor(rng, plane, 0, 1), random_tensor(rng, plane, 0, 1)},
                   [literal](const V& v) { return composite_loss(v[0], v[1], literal).total; }});

  // Whole network: every parameter tensor plus the input images.
  const ModelParams<double> params = init_params<double>(seed);
  std::vector<Tensor<double>> net_inputs;
  for (const auto* t : params.tensors()) net_inputs.push_back(*t);
  auto bind = [](const V& v) {
    ParamVars<double> p;
    for (std::size_t i = 0; i < kLayerCount; ++i) p.layers[i] = {v[2 * i], v[2 * i + 1]};
    return p;
  };
  const Shape net_plane{1, 1, pipeline_size, pipeline_size};
  {
    std::vector<Tensor<double>> in = net_inputs;
    in.push_back(random_tensor(rng, net_plane, 0, 1));
    cases.push_back({"pipeline.reconstruct", std::move(in),
                     [bind, defaults](const V& v) {
                       const ParamVars<double> p = bind(v);
                       const Var<double>& x = v.back();
                       return composite_loss(decode(encode(x, p), p, FeedbackConfig{}), x, defaults).total;
                     },
                     2});
  }
  {
    std::vector<Tensor<double>> in = net_inputs;
    in.push_back(random_tensor(rng, net_plane, 0, 1));
    in.push_back(random_tensor(rng, net_plane, 0, 1));
    cases.push_back({"pipeline.fuse", std::move(in),
                     [bind, defaults](const V& v) {
                       const ParamVars<double> p = bind(v);
                       const Var<double>& a = v[v.size() - 2];
                       const Var<double>& b = v.back();
                       const Var<double> fused = decode(fuse_add(encode(a, p), encode(b, p)), p, FeedbackConfig{});
                       return composite_loss(fused, scale(add(a, b), 0.5), defaults).total;
                     },
                     2});
  }
  return cases;
}

struct GradcheckReport {
  std::vector<ComponentResult> components;  // in first-seen order
  double seconds = 0;

  bool passed() const {
    return std::all_of(components.begin(), components.end(), [](const ComponentResult& c) { return c.passed; });
  }
};

/// Runs all cases over `seeds` consecutive seeds starting at `first_seed`.
inline GradcheckReport run_gradcheck(std::uint64_t first_seed, std::size_t seeds, const GradcheckOptions& opt = {},
                                     std::size_t pipeline_size = 16) {
  const auto start = std::chrono::steady_clock::now();
  GradcheckReport report;
  auto slot = [&](const std::string& name) -> ComponentResult& {
    for (auto& c : report.components)
      if (c.name == name) return c;
    report.components.push_back(ComponentResult{name});
    return report.components.back();
  };
  for (std::size_t s = 0; s < seeds; ++s) {
    const std::uint64_t seed = first_seed + s;
    std::uint64_t case_seed = seed * 7919;
    for (const auto& c : gradcheck_cases(seed, pipeline_size)) run_case(c, ++case_seed, opt, slot(c.name));
  }
  for (auto& c : report.components) c.passed = c.passed && c.checked > 0;
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace hfn
