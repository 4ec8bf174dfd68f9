#include "cfftgan/nnblocks/param_store.hpp"

#include <stdexcept>

#include "cfftgan/numcore/rng.hpp"

namespace cfftgan::nn {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Tensor ParamStore::get_or_create(const std::string& name, const Shape& shape, Init init) {
  auto it = index_.find(name);
  if (it != index_.end()) {
    const Tensor& t = tensors_[it->second];
    if (t.shape() != shape) {
      throw ShapeError("parameter '" + name + "' exists with shape " + num::to_string(t.shape()) +
                       ", requested " + num::to_string(shape));
    }
    return t;
  }
  Tensor t;
  if (init.kind == Init::Kind::normal) {
    num::Rng rng(seed_, fnv1a(name));
    t = Tensor::randn(shape, rng, init.value);
  } else {
    t = Tensor::full(shape, init.value);
  }
  t.set_requires_grad(true);
  index_.emplace(name, tensors_.size());
  names_.push_back(name);
  tensors_.push_back(t);
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return tensors_[it->second];
}

void ParamStore::replace(const std::string& name, const Tensor& value) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  Tensor& slot = tensors_[it->second];
  if (slot.shape() != value.shape()) {
    throw ShapeError("parameter '" + name + "' has shape " + num::to_string(slot.shape()) +
                     ", replacement has " + num::to_string(value.shape()));
  }
  slot = value;
  slot.set_requires_grad(true);
}

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const std::string& n : names_) {
    if (n.compare(0, prefix.size(), prefix) == 0) out.push_back(n);
  }
  return out;
}

std::size_t ParamStore::parameter_count(const std::string& prefix) const {
  std::size_t total = 0;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].compare(0, prefix.size(), prefix) == 0) total += tensors_[i].numel();
  }
  return total;
}

ParamStore ParamStore::converted(DType dtype) const {
  ParamStore out(seed_);
  out.names_ = names_;
  out.index_ = index_;
  for (const Tensor& t : tensors_) {
    Tensor c = t.to(dtype);
    c.set_requires_grad(true);
    out.tensors_.push_back(c);
  }
  return out;
}

num::GradCheckReport grad_check_params(ParamStore& store, const std::vector<std::string>& names,
                                       const std::function<Tensor(ParamStore&)>& loss,
                                       const num::GradCheckOptions& options) {
  std::vector<std::string> all = store.names();
  std::vector<Tensor> saved;
  for (const std::string& n : all) saved.push_back(store.get(n));
  std::vector<Tensor> originals;
  for (const std::string& n : names) originals.push_back(store.get(n));

  // Parameters outside `names` follow the width of the checked ones.
  std::map<DType, std::vector<Tensor>> others;
  const num::ScalarFn f = [&](std::span<const Tensor> in) {
    if (!in.empty()) {
      const DType dt = in[0].dtype();
      auto it = others.find(dt);
      if (it == others.end()) {
        std::vector<Tensor> conv;
        for (const Tensor& t : saved) conv.push_back(t.as(dt));
        it = others.emplace(dt, std::move(conv)).first;
      }
      for (std::size_t i = 0; i < all.size(); ++i) store.replace(all[i], it->second[i]);
    }
    for (std::size_t i = 0; i < names.size(); ++i) store.replace(names[i], in[i]);
    return loss(store);
  };
  struct Restore {
    ParamStore& store;
    const std::vector<std::string>& names;
    const std::vector<Tensor>& values;
    ~Restore() {
      for (std::size_t i = 0; i < names.size(); ++i) store.replace(names[i], values[i]);
    }
  } restore{store, all, saved};
  return num::grad_check(f, originals, options);
}

}  // namespace cfftgan::nn
