#pragma once

#include <map>
#include <string>
#include <vector>

#include "cfftgan/nnblocks/param_store.hpp"
#include "cfftgan/numcore/tape.hpp"

namespace cfftgan::train {

using num::Tensor;

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// One bias-corrected Adam update in place. `t` is the step number after
/// this update (1 for the first). Moments have the parameter's shape and
/// width; arithmetic is carried out in double and rounded once per element.
void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long t, const AdamOptions& opts);

/// Adam over a fixed list of named parameters of a store.
class Adam {
 public:
  Adam(AdamOptions options, const nn::ParamStore& store, std::vector<std::string> names);

  /// Updates every parameter that received a gradient; parameters the loss
  /// does not reach are left alone, moments included.
  void step(nn::ParamStore& store, const num::Gradients& grads);

  const AdamOptions& options() const { return options_; }
  const std::vector<std::string>& names() const { return names_; }
  long steps() const { return t_; }
  void set_steps(long t) { t_ = t; }

  Tensor& first_moment(const std::string& name) { return slots_.at(name).m; }
  Tensor& second_moment(const std::string& name) { return slots_.at(name).v; }
  const Tensor& first_moment(const std::string& name) const { return slots_.at(name).m; }
  const Tensor& second_moment(const std::string& name) const { return slots_.at(name).v; }

 private:
  struct Slot {
    Tensor m, v;
  };
  AdamOptions options_;
  std::vector<std::string> names_;
  std::map<std::string, Slot> slots_;
  long t_ = 0;
};

}  // namespace cfftgan::train
