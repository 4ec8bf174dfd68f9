#pragma once

#include <functional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cfftgan/numcore/tensor.hpp"

namespace cfftgan::num {

enum class Primitive : int {
  leaf = 0,
  add,
  sub,
  mul,
  div,
  add_scalar,
  mul_scalar,
  matmul,
  transpose,
  reshape,
  concat,
  split,
  slice,
  sum,
  mean,
  var,
  exp,
  log,
  sqrt,
  tanh,
  relu,
  leaky_relu,
  softmax,
  power,
  reduce_max,
  reduce_min,
  pad,
  conv2d,
  upsample_nearest,
  resize_bilinear,
  gather,
  scatter,
};

std::string_view primitive_name(Primitive op);
/// Throws std::invalid_argument for names outside the catalog.
Primitive primitive_from_name(std::string_view name);

/// Vector-Jacobian product: given the output gradient, fills grad_inputs[i]
/// for each input with needs[i] set. Entries may be left undefined, which is
/// read as a zero gradient.
using BackwardFn = std::function<void(const Tensor& grad_output, std::span<const bool> needs,
                                      std::span<Tensor> grad_inputs)>;

class Gradients;

/// Append-only record of primitive applications. Node ids are assigned in
/// creation order, so inputs always precede outputs.
class Tape {
 public:
  struct Node {
    Primitive op = Primitive::leaf;
    std::vector<int> inputs;
    BackwardFn backward;
    Shape shape;
    DType dtype = DType::f32;
  };

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records `output = op(inputs)`. Called by primitives when this tape is
  /// active and some input requires a gradient.
  void record(Primitive op, std::span<const Tensor> inputs, Tensor& output, BackwardFn backward);

  /// Reverse sweep from a scalar loss. Each node is visited once.
  Gradients backward(const Tensor& loss) const;

  /// Node id of a tensor on this tape, or -1.
  int node_of(const Tensor& t) const;

  std::size_t size() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  void clear();

 private:
  int ensure_node(const Tensor& t);
  bool owns(const TensorImpl& impl) const {
    return impl.tape == this && impl.tape_generation == generation_ && impl.node >= 0;
  }

  std::uint64_t generation_ = 0;
  std::vector<Node> nodes_;
  std::unordered_map<const TensorImpl*, int> leaves_;
  std::vector<std::shared_ptr<TensorImpl>> leaf_refs_;
};

/// Gradient map node id -> Tensor produced by Tape::backward.
class Gradients {
 public:
  Gradients(const Tape* tape, std::vector<Tensor> grads) : tape_(tape), grads_(std::move(grads)) {}

  /// Gradient of `t`; an undefined Tensor when no gradient reached it.
  Tensor of(const Tensor& t) const;
  /// Gradient of `t`, zeros when none reached it.
  Tensor of_or_zeros(const Tensor& t) const;
  const Tensor& by_node(int id) const { return grads_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return grads_.size(); }

 private:
  const Tape* tape_;
  std::vector<Tensor> grads_;
};

/// Tape that primitives record onto from this thread, or nullptr.
Tape* active_tape();

/// Makes a tape active for the current thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording for the scope's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace cfftgan::num
