#include "cfftgan/trainkit/adam.hpp"

#include <cmath>

#include "cfftgan/numcore/error.hpp"

namespace cfftgan::train {

void AdamOptions::validate() const {
  if (!(lr > 0.0)) throw ConfigError("adam: learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam: betas must lie in [0,1)");
  }
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be > 0");
}

namespace {

template <class T>
void update(std::span<T> p, std::span<const T> g, std::span<T> m, std::span<T> v, long t, const AdamOptions& o) {
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double gi = g[i];
    const double mi = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
    const double vi = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    p[i] = static_cast<T>(p[i] - o.lr * (mi / c1) / (std::sqrt(vi / c2) + o.eps));
  }
}

}  // namespace

void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long t, const AdamOptions& opts) {
  if (grad.shape() != param.shape() || m.shape() != param.shape() || v.shape() != param.shape()) {
    throw ShapeError("adam: shapes disagree: param " + num::to_string(param.shape()) + ", grad " +
                     num::to_string(grad.shape()) + ", moments " + num::to_string(m.shape()) + "/" +
                     num::to_string(v.shape()));
  }
  if (t < 1) throw ConfigError("adam: step number must be >= 1");
  const num::DType dt = param.dtype();
  if (m.dtype() != dt || v.dtype() != dt) throw ShapeError("adam: moment width differs from the parameter");
  const Tensor g = grad.dtype() == dt ? grad : grad.to(dt);
  if (dt == num::DType::f32) {
    update<float>(param.data<float>(), g.data<float>(), m.data<float>(), v.data<float>(), t, opts);
  } else {
    update<double>(param.data<double>(), g.data<double>(), m.data<double>(), v.data<double>(), t, opts);
  }
}

Adam::Adam(AdamOptions options, const nn::ParamStore& store, std::vector<std::string> names)
    : options_(options), names_(std::move(names)) {
  options_.validate();
  for (const std::string& n : names_) {
    const Tensor p = store.get(n);
    slots_.emplace(n, Slot{Tensor::zeros(p.shape(), p.dtype()), Tensor::zeros(p.shape(), p.dtype())});
  }
}

void Adam::step(nn::ParamStore& store, const num::Gradients& grads) {
  ++t_;
  for (const std::string& n : names_) {
    Tensor p = store.get(n);
    const Tensor g = grads.of(p);
    if (!g.defined()) continue;
    Slot& s = slots_.at(n);
    adam_update(p, g, s.m, s.v, t_, options_);
  }
}

}  // namespace cfftgan::train
