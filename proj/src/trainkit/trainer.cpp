#include "cfftgan/trainkit/trainer.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "cfftgan/numcore/error.hpp"
#include "cfftgan/numcore/tape.hpp"

namespace cfftgan::train {

using num::Tape;
using num::TapeScope;

std::string StepLog::format() const {
  char buf[320];
  std::snprintf(buf, sizeof buf, "step=%llu d=%.9g g=%.9g align=%.9g match=%.9g perc=%.9g cx=%.9g adv_g=%.9g",
                static_cast<unsigned long long>(step), d, g, align, match, perc, cx, adv_g);
  return buf;
}

data::Dataset make_dataset(const TrainConfig& cfg) {
  if (!cfg.manifest.empty()) {
    data::Dataset ds = data::read_manifest(cfg.manifest);
    if (ds.image_size != cfg.image_size) {
      throw ConfigError("manifest '" + cfg.manifest + "' is for image size " + std::to_string(ds.image_size));
    }
    return ds;
  }
  return data::Dataset::generate(cfg.dataset_seed, cfg.dataset_size, cfg.image_size);
}

namespace {

model::TranslationModel build_model(const TrainConfig& cfg) {
  cfg.validate();
  model::TranslationModel m(cfg.arch_config(), cfg.seed);
  m.materialize();
  return m;
}

data::BatchOptions batch_options(const TrainConfig& cfg) {
  data::BatchOptions o;
  o.batch_size = cfg.batch_size;
  o.seed = cfg.seed;
  o.third_domain = cfg.domains == 3;
  o.augment = cfg.augment;
  return o;
}

}  // namespace

Trainer::Trainer(TrainConfig cfg)
    : cfg_(std::move(cfg)),
      dataset_(make_dataset(cfg_)),
      model_(build_model(cfg_)),
      extractor_(cfg_.extractor_seed),
      batches_(dataset_, batch_options(cfg_)),
      opt_g_(cfg_.adam_g(), model_.params(), model_.generator_params()),
      opt_d_(cfg_.adam_d(), model_.params(), model_.discriminator_params()) {}

void Trainer::set_step(std::uint64_t s) {
  step_ = s;
  batches_.seek(s * static_cast<std::uint64_t>(cfg_.batch_size));
}

StepLog Trainer::step() {
  const data::PseudoTuple batch = batches_.next();
  StepLog log;
  log.step = step_ + 1;
  try {
    Tape g_tape;
    loss::LossTerms terms;
    {
      TapeScope scope(g_tape);
      terms = loss::generator_content_terms(model_, extractor_, batch, cfg_.weights);
    }
    // D-step on the detached output. D parameters are not on g_tape yet, so
    // updating them in place leaves the generator graph intact.
    {
      Tape d_tape;
      Tensor d_loss;
      {
        TapeScope scope(d_tape);
        d_loss = loss::discriminator_loss(model_, batch, terms.output.detach(), cfg_.weights);
      }
      opt_d_.step(model_.params(), d_tape.backward(d_loss));
      log.d = d_loss.item();
    }
    {
      TapeScope scope(g_tape);
      loss::finish_generator_loss(model_, terms, cfg_.weights);
    }
    opt_g_.step(model_.params(), g_tape.backward(terms.generator));
    log.g = terms.generator.item();
    log.align = terms.align.item();
    log.match = terms.match.item();
    log.perc = terms.perc.item();
    log.cx = terms.cx.item();
    log.adv_g = terms.adv_g.item();
  } catch (const NumericError& e) {
    throw NumericError("step " + std::to_string(log.step) + ": " + e.what());
  }
  ++step_;
  return log;
}

void Trainer::run(std::uint64_t until, const std::function<void(const StepLog&)>& on_step) {
  while (step_ < until) {
    const StepLog log = step();
    if (on_step) on_step(log);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void bytes(const std::string& s) { out.insert(out.end(), s.begin(), s.end()); }
  void f32(float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    u32(bits);
  }
  void record(const std::string& name, const Tensor& t) {
    if (name.size() > 0xffff) throw FormatError("checkpoint: record name too long");
    u16(static_cast<std::uint16_t>(name.size()));
    bytes(name);
    u8(static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape()) u32(static_cast<std::uint32_t>(d));
    for (double v : t.to_vector()) f32(static_cast<float>(v));
  }
  std::vector<std::uint8_t> out;

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(b_.begin() + static_cast<long>(pos_), b_.begin() + static_cast<long>(pos_ + n));
    pos_ += n;
    return s;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) {
      throw FormatError("checkpoint: truncated (need " + std::to_string(n) + " bytes at offset " +
                        std::to_string(pos_) + ", file has " + std::to_string(b_.size()) + ")");
    }
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

struct Record {
  std::string name;
  num::Shape shape;
  std::vector<double> values;
};

// The records a trainer holds, in file order. The tensors are shared handles,
// so writing into them updates the trainer.
std::vector<std::pair<std::string, Tensor>> layout(const Trainer& t) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const std::string& n : t.model().params().names()) out.emplace_back(n, t.model().params().get(n));
  for (auto [label, opt] : {std::pair<const char*, const Adam*>{"adam_g", &t.opt_g()}, {"adam_d", &t.opt_d()}}) {
    out.emplace_back(std::string(label) + ".t", Tensor::scalar(static_cast<double>(opt->steps()), num::DType::f32));
    for (const std::string& n : opt->names()) {
      out.emplace_back(std::string(label) + ".m/" + n, opt->first_moment(n));
      out.emplace_back(std::string(label) + ".v/" + n, opt->second_moment(n));
    }
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Trainer& trainer) {
  Writer w;
  w.bytes("CFFT");
  w.u32(kCheckpointVersion);
  const std::string cfg = trainer.config().format();
  w.u32(static_cast<std::uint32_t>(cfg.size()));
  w.bytes(cfg);
  w.u64(trainer.extractor().seed());
  w.u64(trainer.step_count());
  const auto records = layout(trainer);
  w.u32(static_cast<std::uint32_t>(records.size()));
  for (const auto& [name, tensor] : records) w.record(name, tensor);
  return std::move(w.out);
}

std::unique_ptr<Trainer> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.bytes(4) != "CFFT") throw FormatError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::string cfg_text = r.bytes(r.u32());
  const std::uint64_t extractor_seed = r.u64();
  const std::uint64_t step = r.u64();
  const std::uint32_t count = r.u32();
  std::vector<Record> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    Record rec;
    rec.name = r.bytes(r.u16());
    const int rank = r.u8();
    std::size_t n = 1;
    for (int a = 0; a < rank; ++a) {
      rec.shape.push_back(static_cast<int>(r.u32()));
      n *= static_cast<std::size_t>(rec.shape.back());
    }
    if (n > bytes.size()) throw FormatError("checkpoint: truncated (record '" + rec.name + "' is larger than the file)");
    rec.values.resize(n);
    for (double& v : rec.values) v = r.f32();
    records.push_back(std::move(rec));
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes after the last record");

  TrainConfig cfg;
  try {
    cfg = TrainConfig::parse(cfg_text);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: embedded config: ") + e.what());
  }
  if (cfg.extractor_seed != extractor_seed) throw FormatError("checkpoint: extractor seed disagrees with its config");
  auto trainer = std::make_unique<Trainer>(cfg);
  auto slots = layout(*trainer);
  if (slots.size() != records.size()) {
    throw FormatError("checkpoint: " + std::to_string(records.size()) + " records, the config implies " +
                      std::to_string(slots.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].first != records[i].name || slots[i].second.shape() != records[i].shape) {
      throw FormatError("checkpoint: record " + std::to_string(i) + " '" + records[i].name + "' " +
                        num::to_string(records[i].shape) + " disagrees with the config ('" + slots[i].first + "' " +
                        num::to_string(slots[i].second.shape()) + ")");
    }
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const std::string& name = slots[i].first;
    const std::vector<double>& v = records[i].values;
    if (name == "adam_g.t") {
      trainer->opt_g().set_steps(static_cast<long>(v[0]));
    } else if (name == "adam_d.t") {
      trainer->opt_d().set_steps(static_cast<long>(v[0]));
    } else {
      Tensor dst = slots[i].second;
      for (std::size_t k = 0; k < v.size(); ++k) dst.set(k, v[k]);
    }
  }
  trainer->set_step(step);
  return trainer;
}

void save_checkpoint(const Trainer& trainer, const std::string& path) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(trainer);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open '" + tmp + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("save_checkpoint: write to '" + tmp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("save_checkpoint: cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

std::unique_ptr<Trainer> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::unique_ptr<Trainer> run_training(const TrainConfig& cfg, std::ostream* progress) {
  auto trainer = std::make_unique<Trainer>(cfg);
  std::ofstream log;
  namespace fs = std::filesystem;
  if (!cfg.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + cfg.out_dir + "': " + ec.message());
    const std::string log_path = (fs::path(cfg.out_dir) / "loss_log.txt").string();
    log.open(log_path);
    if (!log) throw std::runtime_error("cannot open '" + log_path + "' for writing");
    std::ofstream(fs::path(cfg.out_dir) / "config.txt") << cfg.format();
  }
  trainer->run(cfg.steps, [&](const StepLog& s) {
    if (log.is_open()) {
      log << s.format() << '\n';
      if (!log) throw std::runtime_error("write to loss log in '" + cfg.out_dir + "' failed");
    }
    if (progress && (s.step % cfg.log_interval == 0 || s.step == cfg.steps)) *progress << s.format() << std::endl;
    if (!cfg.out_dir.empty() && cfg.checkpoint_interval > 0 && s.step % cfg.checkpoint_interval == 0 &&
        s.step != cfg.steps) {
      save_checkpoint(*trainer, (fs::path(cfg.out_dir) / ("ckpt_" + std::to_string(s.step) + ".bin")).string());
    }
  });
  if (!cfg.out_dir.empty()) save_checkpoint(*trainer, (fs::path(cfg.out_dir) / "final.bin").string());
  return trainer;
}

}  // namespace cfftgan::train
