#include "cfftgan/numcore/tape.hpp"

#include <array>
#include <atomic>
#include <memory>
#include <stdexcept>

#include "cfftgan/numcore/ops.hpp"

namespace cfftgan::num {

namespace {

thread_local Tape* g_active_tape = nullptr;
std::atomic<std::uint64_t> g_tape_generations{0};

constexpr std::array<std::string_view, 32> kPrimitiveNames = {
    "leaf",       "add",         "sub",        "mul",       "div",
    "add_scalar", "mul_scalar",  "matmul",     "transpose", "reshape",
    "concat",     "split",       "slice",      "sum",       "mean",
    "var",        "exp",         "log",        "sqrt",      "tanh",
    "relu",       "leaky_relu",  "softmax",    "power",     "reduce_max",
    "reduce_min", "pad",         "conv2d",     "upsample_nearest",
    "resize_bilinear", "gather", "scatter",
};

void accumulate_into(Tensor& slot, const Tensor& g) {
  if (!slot.defined()) {
    slot = g;
    return;
  }
  // The slot may alias a tensor handed out by a backward closure; write into a
  // private copy the first time we accumulate.
  Tensor sum_t = slot.clone();
  dispatch(sum_t.dtype(), [&]<class T>() {
    auto dst = sum_t.data<T>();
    auto src = g.data<T>();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  });
  slot = sum_t;
}

}  // namespace

std::string_view primitive_name(Primitive op) {
  const auto i = static_cast<std::size_t>(op);
  if (i >= kPrimitiveNames.size()) throw std::invalid_argument("unknown primitive id");
  return kPrimitiveNames[i];
}

Primitive primitive_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kPrimitiveNames.size(); ++i) {
    if (kPrimitiveNames[i] == name) return static_cast<Primitive>(i);
  }
  throw std::invalid_argument("unknown primitive '" + std::string(name) + "'");
}

int Tape::ensure_node(const Tensor& t) {
  TensorImpl* impl = t.impl();
  if (owns(*impl)) return impl->node;
  if (!impl->requires_grad) return -1;
  auto it = leaves_.find(impl);
  if (it != leaves_.end()) return it->second;
  const int id = static_cast<int>(nodes_.size());
  Node n;
  n.op = Primitive::leaf;
  n.shape = t.shape();
  n.dtype = t.dtype();
  nodes_.push_back(std::move(n));
  leaves_.emplace(impl, id);
  leaf_refs_.push_back(t.impl_ptr());
  return id;
}

void Tape::record(Primitive op, std::span<const Tensor> inputs, Tensor& output, BackwardFn backward) {
  Node n;
  n.op = op;
  n.inputs.reserve(inputs.size());
  for (const Tensor& in : inputs) n.inputs.push_back(in.defined() ? ensure_node(in) : -1);
  n.backward = std::move(backward);
  n.shape = output.shape();
  n.dtype = output.dtype();
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(n));
  output.impl()->tape = this;
  output.impl()->tape_generation = generation_;
  output.impl()->node = id;
  output.impl()->requires_grad = true;
}

int Tape::node_of(const Tensor& t) const {
  if (!t.defined()) return -1;
  const TensorImpl* impl = t.impl();
  if (owns(*impl)) return impl->node;
  auto it = leaves_.find(impl);
  return it == leaves_.end() ? -1 : it->second;
}

Gradients Tape::backward(const Tensor& loss) const {
  if (!loss.defined() || loss.numel() != 1) {
    throw TapeError("backward: loss must be a scalar, got shape " +
                    (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  const int root = node_of(loss);
  if (root < 0) throw TapeError("backward: loss is not recorded on this tape (detached loss)");

  NoGradScope no_grad;
  std::vector<Tensor> grads(nodes_.size());
  grads[static_cast<std::size_t>(root)] = Tensor::ones(loss.shape(), loss.dtype());

  for (int id = root; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    Tensor& g = grads[static_cast<std::size_t>(id)];
    if (!g.defined() || n.op == Primitive::leaf) continue;
    auto needs = std::make_unique<bool[]>(n.inputs.size());
    bool any = false;
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      needs[i] = n.inputs[i] >= 0;
      any = any || needs[i];
    }
    if (!any) continue;
    std::vector<Tensor> grad_inputs(n.inputs.size());
    n.backward(g, std::span<const bool>(needs.get(), n.inputs.size()), grad_inputs);
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      if (n.inputs[i] < 0 || !grad_inputs[i].defined()) continue;
      if (grad_inputs[i].shape() != nodes_[static_cast<std::size_t>(n.inputs[i])].shape) {
        throw ShapeError(std::string("backward of ") + std::string(primitive_name(n.op)) +
                         " produced gradient " + to_string(grad_inputs[i].shape()) + " for input " +
                         to_string(nodes_[static_cast<std::size_t>(n.inputs[i])].shape));
      }
      accumulate_into(grads[static_cast<std::size_t>(n.inputs[i])], grad_inputs[i]);
    }
    // Intermediate gradients are not needed once propagated.
    if (id != root) g = Tensor();
  }
  return Gradients(this, std::move(grads));
}

Tape::Tape() : generation_(++g_tape_generations) {}

void Tape::clear() {
  generation_ = ++g_tape_generations;
  nodes_.clear();
  leaves_.clear();
  leaf_refs_.clear();
}

Tensor Gradients::of(const Tensor& t) const {
  const int id = tape_->node_of(t);
  if (id < 0 || static_cast<std::size_t>(id) >= grads_.size()) return Tensor();
  return grads_[static_cast<std::size_t>(id)];
}

Tensor Gradients::of_or_zeros(const Tensor& t) const {
  Tensor g = of(t);
  return g.defined() ? g : Tensor::zeros(t.shape(), t.dtype());
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

}  // namespace cfftgan::num
