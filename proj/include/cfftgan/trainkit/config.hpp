#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfftgan/losses/losses.hpp"
#include "cfftgan/trainkit/adam.hpp"
#include "cfftgan/translation/model.hpp"

namespace cfftgan::train {

/// Everything a training run depends on. Text form: one `key=value` per line,
/// `#` starts a comment; unknown keys are errors. format() writes every key.
struct TrainConfig {
  std::string arch = "desk";  // desk | micro | large
  std::uint64_t seed = 1;     // model init and batch order
  std::uint64_t steps = 2000;
  int batch_size = 4;
  int image_size = 32;
  std::uint64_t dataset_seed = 1;
  std::size_t dataset_size = 512;
  std::string manifest;  // when set, specs come from this file instead

  double lr_g = 1e-4;
  double lr_d = 4e-4;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  int channels = 16;
  int height = 8;
  int width = 8;
  int levels = 3;
  int heads = 4;
  int ffn_depth = 3;
  int hiformer_depth = 2;
  bool hiformer_enabled = true;
  int domains = 2;

  std::uint64_t extractor_seed = 1;
  loss::LossWeights weights;
  bool augment = true;

  std::uint64_t log_interval = 50;
  std::uint64_t checkpoint_interval = 0;  // 0: only the final checkpoint
  std::string out_dir;                    // empty: nothing is written

  /// Desk defaults with the fusion size and Hiformer settings of a preset.
  static TrainConfig desk();
  static TrainConfig micro();

  AdamOptions adam_g() const { return {lr_g, beta1, beta2, adam_eps}; }
  AdamOptions adam_d() const { return {lr_d, beta1, beta2, adam_eps}; }

  /// Architecture preset `arch` with the fusion fields, domain count and
  /// Hiformer switch of this config. The last encoder stage takes `channels`.
  model::ArchConfig arch_config() const;

  /// Throws ConfigError on out-of-range values or an inconsistent architecture.
  void validate() const;

  std::string format() const;
  /// Keys not given keep the defaults of the preset named by `arch`.
  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::string& path);
  /// Applies one `key=value` assignment.
  void set(const std::string& key, const std::string& value);
};

}  // namespace cfftgan::train
