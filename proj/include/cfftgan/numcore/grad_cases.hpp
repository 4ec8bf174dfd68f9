#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cfftgan/numcore/grad_check.hpp"
#include "cfftgan/numcore/ops.hpp"
#include "cfftgan/numcore/rng.hpp"

namespace cfftgan::num {

/// Random gradient-check inputs for one primitive of the catalog.
struct PrimitiveCase {
  std::string op;
  std::function<std::pair<std::vector<Tensor>, Attrs>(Rng&, DType)> make;
};

/// One case per primitive, covering broadcasting, batching and attributes.
std::vector<PrimitiveCase> primitive_cases();

/// sum(y * R) for a fixed random R at y's width.
Tensor weighted_sum(const Tensor& y, std::uint64_t seed);

/// Checks `pc` on the inputs drawn from (seed, dtype) against a weighted sum
/// of the primitive's outputs.
GradCheckReport check_primitive_case(const PrimitiveCase& pc, DType dtype, const GradCheckOptions& options,
                                     std::uint64_t seed);

}  // namespace cfftgan::num
