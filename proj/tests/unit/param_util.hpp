#pragma once

#include <functional>
#include <string>

#include "cfftgan/nnblocks/param_store.hpp"
#include "cfftgan/numcore/rng.hpp"

namespace cfftgan::testing {

/// Adds scale * N(0,1) to every parameter so none sits at a special initial
/// value (zeros, ones) during a gradient check.
inline void perturb_params(nn::ParamStore& store, std::uint64_t seed, double scale = 0.1) {
  for (const std::string& n : store.names()) {
    num::Tensor p = store.get(n);
    num::Rng rng(seed, std::hash<std::string>{}(n));
    for (std::size_t i = 0; i < p.numel(); ++i) p.set(i, p.at(i) + scale * rng.normal());
  }
}

}  // namespace cfftgan::testing
