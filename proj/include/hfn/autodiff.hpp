#pragma once

// Reverse-mode automatic differentiation over hfn::Tensor.
//
// A Tape records every operation whose inputs are tracked, together with an
// adjoint closure that maps the output gradient to input gradients. Ids grow
// monotonically, so the record is topologically ordered by construction and
// backward() is a single reverse sweep.

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hfn/tensor.hpp"

namespace hfn {

template <std::floating_point Real>
class Tape;

/// Handle to a value, optionally tracked on a tape.
template <std::floating_point Real>
class Var {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  Var() = default;

  const Tensor<Real>& value() const { return *value_; }
  const Shape& shape() const { return value_->shape(); }
  bool tracked() const noexcept { return id_ != npos; }
  std::size_t id() const noexcept { return id_; }
  Tape<Real>* tape() const noexcept { return tape_; }
  const std::shared_ptr<const Tensor<Real>>& shared() const noexcept { return value_; }

  /// An untracked value with no tape attached.
  static Var constant(Tensor<Real> value) {
    return Var(std::make_shared<const Tensor<Real>>(std::move(value)), nullptr, npos);
  }

 private:
  friend class Tape<Real>;
  Var(std::shared_ptr<const Tensor<Real>> value, Tape<Real>* tape, std::size_t id)
      : value_(std::move(value)), tape_(tape), id_(id) {}

  std::shared_ptr<const Tensor<Real>> value_;
  Tape<Real>* tape_ = nullptr;
  std::size_t id_ = npos;
};

/// Result of backward(): d(loss)/d(node) for every tracked node.
template <std::floating_point Real>
class GradientMap {
 public:
  GradientMap(std::vector<std::optional<Tensor<Real>>> grads, std::vector<Shape> shapes)
      : grads_(std::move(grads)), shapes_(std::move(shapes)) {}

  /// Gradient with respect to `v`; exact zeros when `v` does not reach the loss.
  Tensor<Real> operator[](const Var<Real>& v) const {
    if (!v.tracked()) return Tensor<Real>(v.shape());
    const auto& g = grads_.at(v.id());
    return g ? *g : Tensor<Real>(shapes_.at(v.id()));
  }

  bool reaches(const Var<Real>& v) const { return v.tracked() && grads_.at(v.id()).has_value(); }

 private:
  std::vector<std::optional<Tensor<Real>>> grads_;
  std::vector<Shape> shapes_;
};

template <std::floating_point Real>
class Tape {
 public:
  /// record keeps adjoints for backward(); evaluate only computes values (and kink patterns).
  enum class Mode { record, evaluate };

  /// Maps the output gradient to one gradient per input. Entries whose `wanted`
  /// flag is false may be left default-constructed.
  using Adjoint =
      std::function<std::vector<Tensor<Real>>(const Tensor<Real>& grad_out, const std::vector<bool>& wanted)>;

  explicit Tape(Mode mode = Mode::record) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Mode mode() const noexcept { return mode_; }
  bool recording() const noexcept { return mode_ == Mode::record; }
  std::size_t size() const noexcept { return entries_.size(); }

  /// Differentiable input (parameter or image).
  Var<Real> leaf(Tensor<Real> value) {
    auto ptr = std::make_shared<const Tensor<Real>>(std::move(value));
    if (!recording()) return Var<Real>(std::move(ptr), this, Var<Real>::npos);
    entries_.push_back(Entry{"leaf", {}, ptr->shape(), {}});
    return Var<Real>(std::move(ptr), this, entries_.size() - 1);
  }

  /// Non-differentiable value attached to this tape.
  Var<Real> constant(Tensor<Real> value) {
    return Var<Real>(std::make_shared<const Tensor<Real>>(std::move(value)), this, Var<Real>::npos);
  }

  /// Appends an operation. Untracked when nothing upstream is tracked.
  Var<Real> record(std::string_view op, Tensor<Real> value, const std::vector<const Var<Real>*>& inputs,
                   Adjoint adjoint) {
    auto ptr = std::make_shared<const Tensor<Real>>(std::move(value));
    bool any_tracked = false;
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const auto* in : inputs) {
      const bool mine = in->tracked() && in->tape() == this;
      if (in->tracked() && !mine) throw ContractError(std::string(op) + ": input recorded on a different tape");
      ids.push_back(mine ? in->id() : Var<Real>::npos);
      any_tracked = any_tracked || mine;
    }
    if (!recording() || !any_tracked) return Var<Real>(std::move(ptr), this, Var<Real>::npos);
    entries_.push_back(Entry{std::string(op), std::move(ids), ptr->shape(), std::move(adjoint)});
    return Var<Real>(std::move(ptr), this, entries_.size() - 1);
  }

  /// Folds an activation pattern (e.g. which ReLU inputs are positive) into the
  /// kink signature. Two evaluations with equal signatures took the same
  /// branch at every non-smooth point.
  template <class Pred>
  void observe_pattern(std::span<const Real> values, Pred active) {
    std::uint64_t h = signature_;
    for (Real v : values) {
      h ^= active(v) ? 0x9eu : 0x35u;
      h *= 0x100000001b3ull;
    }
    signature_ = h;
  }
  std::uint64_t kink_signature() const noexcept { return signature_; }

  /// Test hook: multiplies every input gradient produced by `op` by `factor`.
  void corrupt_adjoint(std::string op, Real factor) {
    fault_op_ = std::move(op);
    fault_factor_ = factor;
  }

  GradientMap<Real> backward(const Var<Real>& loss) const {
    if (loss.value().rank() != 0) {
      throw ContractError("backward: loss must be rank-0, got shape " + to_string(loss.shape()));
    }
    if (!loss.tracked() || loss.tape() != this) {
      throw ContractError("backward: loss is not recorded on this tape");
    }
    std::vector<std::optional<Tensor<Real>>> grads(entries_.size());
    grads[loss.id()] = Tensor<Real>::scalar(Real(1));
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      if (!grads[id]) continue;
      const Entry& e = entries_[id];
      if (!e.adjoint) continue;
      std::vector<bool> wanted(e.inputs.size());
      for (std::size_t i = 0; i < e.inputs.size(); ++i) wanted[i] = e.inputs[i] != Var<Real>::npos;
      std::vector<Tensor<Real>> in_grads = e.adjoint(*grads[id], wanted);
      const bool faulty = !fault_op_.empty() && e.op == fault_op_;
      for (std::size_t i = 0; i < e.inputs.size(); ++i) {
        if (!wanted[i]) continue;
        Tensor<Real>& g = in_grads[i];
        if (faulty) {
          for (auto& v : g.data()) v *= fault_factor_;
        }
        accumulate(grads[e.inputs[i]], std::move(g), entries_[e.inputs[i]].shape, e.op);
      }
    }
    std::vector<Shape> shapes;
    shapes.reserve(entries_.size());
    for (const auto& e : entries_) shapes.push_back(e.shape);
    return GradientMap<Real>(std::move(grads), std::move(shapes));
  }

 private:
  struct Entry {
    std::string op;
    std::vector<std::size_t> inputs;
    Shape shape;
    Adjoint adjoint;
  };

  static void accumulate(std::optional<Tensor<Real>>& slot, Tensor<Real>&& g, const Shape& expected,
                         const std::string& op) {
    if (g.shape() != expected) {
      throw ContractError("adjoint of " + op + " produced shape " + to_string(g.shape()) + ", expected " +
                          to_string(expected));
    }
    if (!slot) {
      slot = std::move(g);
      return;
    }
    auto dst = slot->data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  Mode mode_;
  std::vector<Entry> entries_;
  std::uint64_t signature_ = 0xcbf29ce484222325ull;
  std::string fault_op_;
  Real fault_factor_ = Real(1);
};

namespace detail {

template <std::floating_point Real>
Tape<Real>* tape_of(std::initializer_list<const Var<Real>*> vars) {
  for (const auto* v : vars) {
    if (v->tape()) return v->tape();
  }
  return nullptr;
}

/// Records on the inputs' tape, or yields a bare constant when no tape is involved.
template <std::floating_point Real>
Var<Real> emit(std::string_view op, Tensor<Real> value, const std::vector<const Var<Real>*>& inputs,
               typename Tape<Real>::Adjoint adjoint) {
  Tape<Real>* tape = nullptr;
  for (const auto* v : inputs) {
    if (v->tape()) {
      tape = v->tape();
      break;
    }
  }
  if (!tape) return Var<Real>::constant(std::move(value));
  return tape->record(op, std::move(value), inputs, std::move(adjoint));
}

}  // namespace detail

}  // namespace hfn
