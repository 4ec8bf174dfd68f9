#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cfftgan/numcore/grad_check.hpp"
#include "cfftgan/numcore/tensor.hpp"

namespace cfftgan::nn {

using num::DType;
using num::Shape;
using num::Tensor;

struct Init {
  enum class Kind { normal, constant };
  Kind kind = Kind::normal;
  double value = 0.0;  // stddev for normal, fill value for constant

  static Init normal(double stddev) { return {Kind::normal, stddev}; }
  static Init zeros() { return {Kind::constant, 0.0}; }
  static Init ones() { return {Kind::constant, 1.0}; }
  static Init constant(double v) { return {Kind::constant, v}; }
};

/// Named parameter registry. Parameters are created on first request and
/// returned as the same handle afterwards. Initial values depend only on
/// (store seed, name), never on creation order.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  /// Returns the parameter `name`, creating it with `init` at the current
  /// default width if absent. A later request with a different shape throws.
  Tensor get_or_create(const std::string& name, const Shape& shape, Init init);

  /// Existing parameter; throws std::out_of_range when absent.
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  /// Replaces the stored handle (checkpoint load, gradient checking). The
  /// shape must match.
  void replace(const std::string& name, const Tensor& value);

  /// Names in creation order.
  const std::vector<std::string>& names() const { return names_; }
  /// Names starting with `prefix`, in creation order.
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;

  std::size_t size() const { return names_.size(); }
  /// Total scalar count, optionally restricted to a name prefix.
  std::size_t parameter_count(const std::string& prefix = "") const;

  std::uint64_t seed() const { return seed_; }

  /// Deep copy with every parameter converted to `dtype`.
  ParamStore converted(DType dtype) const;

 private:
  std::uint64_t seed_;
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

/// grad_check over store parameters. `loss` must read the parameters from the
/// store on every call; they are swapped in place during the check and the
/// original handles are restored afterwards. With promote_numeric the store
/// holds 64-bit copies while differences are taken, so `loss` must bring any
/// other tensors it uses to num::default_dtype().
num::GradCheckReport grad_check_params(ParamStore& store, const std::vector<std::string>& names,
                                       const std::function<Tensor(ParamStore&)>& loss,
                                       const num::GradCheckOptions& options);

}  // namespace cfftgan::nn
