#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cfftgan/numcore/tensor.hpp"

namespace cfftgan::train {

struct GradCheckEntry {
  std::string name;  // "<group>/<case>"
  num::DType dtype = num::DType::f32;
  bool pass = false;
  std::string summary;
};

struct GradCheckSuiteOptions {
  bool primitives = true;
  bool layers = true;
  bool fusion = true;
  bool total_loss = true;  // micro model, 64-bit, seeded coordinate subset
};

/// Finite-difference checks of every primitive and layer, the micro fusion
/// block, SPADE modulation and both sides of the total objective.
/// `on_entry` sees each result as soon as it is available.
std::vector<GradCheckEntry> run_gradcheck_suite(const GradCheckSuiteOptions& options = {},
                                                const std::function<void(const GradCheckEntry&)>& on_entry = {});

/// `PASS|FAIL <name> <dtype> <summary>`.
std::string format_entry(const GradCheckEntry& e);

}  // namespace cfftgan::train
