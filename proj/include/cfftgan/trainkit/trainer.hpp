#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cfftgan/data/dataset.hpp"
#include "cfftgan/losses/losses.hpp"
#include "cfftgan/trainkit/adam.hpp"
#include "cfftgan/trainkit/config.hpp"

namespace cfftgan::train {

/// Loss values of one training step.
struct StepLog {
  std::uint64_t step = 0;
  double d = 0, g = 0, align = 0, match = 0, perc = 0, cx = 0, adv_g = 0;

  /// `step=N d=.. g=.. align=.. match=.. perc=.. cx=.. adv_g=..`, %.9g.
  std::string format() const;
};

/// Dataset named by the config: the manifest when set, otherwise generated
/// from (dataset_seed, dataset_size, image_size).
data::Dataset make_dataset(const TrainConfig& cfg);

/// Owns the model, optimizers and batch stream of one run. Each step draws a
/// batch, runs the generator once, updates D on the detached output at lr_D,
/// then updates G on the full generator objective (adversarial term scored by
/// the updated D) at lr_G.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  /// One D-step and one G-step. Throws NumericError, prefixed with the step
  /// number, when a loss term is not finite.
  StepLog step();
  /// Runs until `step_count() == until`, calling `on_step` after every step.
  void run(std::uint64_t until, const std::function<void(const StepLog&)>& on_step = {});

  const TrainConfig& config() const { return cfg_; }
  const data::Dataset& dataset() const { return dataset_; }
  model::TranslationModel& model() { return model_; }
  const model::TranslationModel& model() const { return model_; }
  const loss::SurrogateExtractor& extractor() const { return extractor_; }
  Adam& opt_g() { return opt_g_; }
  Adam& opt_d() { return opt_d_; }
  const Adam& opt_g() const { return opt_g_; }
  const Adam& opt_d() const { return opt_d_; }
  std::uint64_t step_count() const { return step_; }

  /// Moves to step `s`: the batch stream continues from visit s * batch_size.
  void set_step(std::uint64_t s);

 private:
  TrainConfig cfg_;
  data::Dataset dataset_;
  model::TranslationModel model_;
  loss::SurrogateExtractor extractor_;
  data::BatchIterator batches_;
  Adam opt_g_, opt_d_;
  std::uint64_t step_ = 0;
};

/// Checkpoint layout (little-endian): "CFFT", u32 version, u32 config length,
/// config text, u64 extractor seed, u64 step, u32 record count, then records
/// of (u16 name length, name, u8 rank, u32 extent per axis, f32 payload).
/// Records are the model parameters in creation order, then for adam_g and
/// adam_d the step count ("<opt>.t") and per parameter "<opt>.m/<name>" and
/// "<opt>.v/<name>".
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Trainer& trainer);
/// Rebuilds the trainer from its own config and overwrites every record.
/// Throws FormatError on bad magic, version mismatch, truncation, trailing
/// bytes or records that disagree with the config; nothing is applied then.
std::unique_ptr<Trainer> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Trainer& trainer, const std::string& path);
std::unique_ptr<Trainer> load_checkpoint(const std::string& path);

/// Full run as configured: writes `loss_log.txt` (one StepLog line per step),
/// periodic `ckpt_<step>.bin` and `final.bin` under cfg.out_dir when set.
/// Progress every log_interval steps goes to `progress` if given.
std::unique_ptr<Trainer> run_training(const TrainConfig& cfg, std::ostream* progress = nullptr);

}  // namespace cfftgan::train
