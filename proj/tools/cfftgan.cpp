#include <cstdio>
#include <filesystem>
#include <iostream>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"
#include "cfftgan/data/dataset.hpp"
#include "cfftgan/data/ppm.hpp"
#include "cfftgan/numcore/error.hpp"
#include "cfftgan/trainkit/gradcheck_suite.hpp"
#include "cfftgan/trainkit/metrics.hpp"
#include "cfftgan/trainkit/trainer.hpp"

namespace fs = std::filesystem;
using namespace cfftgan;

namespace {

// Argument errors found after parsing, reported with exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string image_name(std::size_t i, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%05zu_%s.ppm", i, suffix);
  return buf;
}

void gen_data(std::uint64_t seed, std::size_t count, int size, std::uint64_t split, const std::string& out) {
  const data::Dataset ds = data::Dataset::generate(seed, count, size, split);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw std::runtime_error("cannot create '" + out + "': " + ec.message());
  data::write_manifest(ds, (fs::path(out) / "manifest.txt").string());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const data::ScenePair p = ds.pair(i);
    data::save_image(p.x_a, (fs::path(out) / image_name(i, "a")).string());
    data::save_image(p.x_b, (fs::path(out) / image_name(i, "b")).string());
    data::save_image(ds.mask(i), (fs::path(out) / image_name(i, "mask")).string());
  }
  std::cout << "wrote " << ds.size() << " scenes to " << out << "\n";
}

data::Dataset read_data(const std::string& path) {
  const fs::path p = fs::is_directory(path) ? fs::path(path) / "manifest.txt" : fs::path(path);
  return data::read_manifest(p.string());
}

void translate_one(const std::string& ckpt, const std::string& content, const std::string& exemplar,
                   const std::string& third, const std::string& out) {
  const auto trainer = train::load_checkpoint(ckpt);
  model::TranslationModel& m = trainer->model();
  const bool needs_third = m.arch().domains == 3;
  if (needs_third && third.empty()) throw UsageError("this checkpoint has 3 domains; --third is required");
  if (!needs_third && !third.empty()) throw UsageError("--third given but the checkpoint has 2 domains");
  const num::Tensor x = data::load_image(content);
  const num::Tensor y = data::load_image(exemplar);
  const num::Tensor z = third.empty() ? num::Tensor() : data::load_image(third);
  const int s = m.arch().image_size;
  for (const num::Tensor* t : {&x, &y, &z}) {
    if (t->defined() && (t->dim(1) != s || t->dim(2) != s)) {
      throw std::runtime_error("input images must be " + std::to_string(s) + "x" + std::to_string(s));
    }
  }
  data::save_image(model::translate(m, x, y, z), out);
}

void evaluate(const std::string& ckpt, const std::string& data_path, std::size_t limit) {
  const auto trainer = train::load_checkpoint(ckpt);
  const data::Dataset ds = read_data(data_path);
  if (ds.image_size != trainer->model().arch().image_size) {
    throw std::runtime_error("data image size " + std::to_string(ds.image_size) + " does not match the model");
  }
  std::cout << train::evaluate(trainer->model(), trainer->extractor(), ds, limit).format();
}

int gradcheck(bool skip_total_loss) {
  train::GradCheckSuiteOptions o;
  o.total_loss = !skip_total_loss;
  int failed = 0, total = 0;
  (void)train::run_gradcheck_suite(o, [&](const train::GradCheckEntry& e) {
    ++total;
    if (!e.pass) ++failed;
    std::cout << train::format_entry(e) << std::endl;
  });
  std::cout << (total - failed) << "/" << total << " gradient checks passed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cfftgan: exemplar-based image translation with cross-domain feature fusion"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset: manifest plus PPM images");
  std::uint64_t gen_seed = 1, gen_split = 0;
  std::size_t gen_count = 64;
  int gen_size = 32;
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "Dataset seed")->capture_default_str();
  gen->add_option("--count", gen_count, "Number of scenes")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--size", gen_size, "Image size S")->capture_default_str()->check(CLI::Range(16, 4096));
  gen->add_option("--split", gen_split, "Split index; 0 is the training split")->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train from a key=value config file");
  std::string tr_config, tr_out;
  std::uint64_t tr_steps = 0;
  tr->add_option("--config", tr_config, "Config file")->required()->check(CLI::ExistingFile);
  tr->add_option("--steps", tr_steps, "Override the configured step count");
  tr->add_option("--out", tr_out, "Override the configured output directory");

  auto* tl = app.add_subcommand("translate", "Translate one content image with one exemplar");
  std::string tl_ckpt, tl_content, tl_exemplar, tl_third, tl_out;
  tl->add_option("--ckpt", tl_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  tl->add_option("--content", tl_content, "Content image x_A (PPM)")->required()->check(CLI::ExistingFile);
  tl->add_option("--exemplar", tl_exemplar, "Exemplar image y_B (PPM)")->required()->check(CLI::ExistingFile);
  tl->add_option("--third,--mask", tl_third, "Third-domain image for 3-domain models (PPM)")
      ->check(CLI::ExistingFile);
  tl->add_option("--out", tl_out, "Output PPM")->required();

  auto* ev = app.add_subcommand("eval", "Print swd, semantic_consistency and style_similarity");
  std::string ev_ckpt, ev_data;
  std::size_t ev_limit = 0;
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data, "Manifest file or directory holding manifest.txt")->required()->check(
      CLI::ExistingPath);
  ev->add_option("--limit", ev_limit, "Evaluate only the first N scenes (0: all)");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks; nonzero exit on failure");
  bool gc_quick = false;
  gc->add_flag("--quick", gc_quick, "Skip the total-objective checks on the micro model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      gen_data(gen_seed, gen_count, gen_size, gen_split, gen_out);
    } else if (tr->parsed()) {
      train::TrainConfig cfg = train::TrainConfig::load(tr_config);
      if (tr_steps > 0) cfg.steps = tr_steps;
      if (!tr_out.empty()) cfg.out_dir = tr_out;
      cfg.validate();
      const auto t = train::run_training(cfg, &std::cout);
      if (!cfg.out_dir.empty()) std::cout << "final checkpoint: " << (fs::path(cfg.out_dir) / "final.bin") << "\n";
    } else if (tl->parsed()) {
      translate_one(tl_ckpt, tl_content, tl_exemplar, tl_third, tl_out);
    } else if (ev->parsed()) {
      evaluate(ev_ckpt, ev_data, ev_limit);
    } else if (gc->parsed()) {
      return gradcheck(gc_quick);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
