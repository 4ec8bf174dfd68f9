#include "cfftgan/data/dataset.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cfftgan/numcore/error.hpp"

namespace cfftgan::data {

namespace {

constexpr std::uint64_t kAugmentStream = 0x6175676d656e74ULL;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const char* field) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw FormatError(std::string("manifest: bad ") + field + " '" + s + "'");
  return v;
}

}  // namespace

Dataset Dataset::generate(std::uint64_t seed, std::size_t count, int image_size, std::uint32_t split) {
  Dataset ds;
  ds.image_size = image_size;
  ds.specs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(seed, (static_cast<std::uint64_t>(split) << 40) + i);
    ds.specs.push_back(random_scene(rng, image_size));
  }
  return ds;
}

std::string format_spec(const SceneSpec& s) {
  std::string out = to_string(s.kind);
  for (double v : {s.center_x, s.center_y, s.size, s.rotation, s.fill_hue, s.texture_freq, s.texture_angle, s.bg_hue}) {
    out += ',' + format_double(v);
  }
  out += ',' + std::to_string(s.seed);
  return out;
}

SceneSpec parse_spec(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) f.push_back(item);
  if (!line.empty() && line.back() == ',') f.emplace_back();
  if (f.size() != 10) {
    throw FormatError("manifest: expected 10 fields (" + std::string(kManifestFields) + "), got " +
                      std::to_string(f.size()));
  }
  SceneSpec s;
  try {
    s.kind = parse_shape_kind(f[0]);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  s.center_x = parse_double(f[1], "center_x");
  s.center_y = parse_double(f[2], "center_y");
  s.size = parse_double(f[3], "size");
  s.rotation = parse_double(f[4], "rotation");
  s.fill_hue = parse_double(f[5], "fill_hue");
  s.texture_freq = parse_double(f[6], "texture_freq");
  s.texture_angle = parse_double(f[7], "texture_angle");
  s.bg_hue = parse_double(f[8], "bg_hue");
  if (f[9].empty() || f[9].find_first_not_of("0123456789") != std::string::npos) {
    throw FormatError("manifest: bad seed '" + f[9] + "'");
  }
  s.seed = std::stoull(f[9]);
  return s;
}

std::string format_manifest(const Dataset& ds) {
  std::string out = "# cfftgan manifest v1 image_size=" + std::to_string(ds.image_size) + "\n# " + kManifestFields + "\n";
  for (const SceneSpec& s : ds.specs) out += format_spec(s) + '\n';
  return out;
}

Dataset parse_manifest(const std::string& text) {
  Dataset ds;
  ds.image_size = 0;
  std::stringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto k = line.find("image_size=");
      if (k != std::string::npos) ds.image_size = std::atoi(line.c_str() + k + 11);
      continue;
    }
    try {
      ds.specs.push_back(parse_spec(line));
    } catch (const FormatError& e) {
      throw FormatError(std::string(e.what()) + " on line " + std::to_string(line_no));
    }
  }
  if (ds.image_size <= 0) throw FormatError("manifest: missing 'image_size=' header");
  for (std::size_t i = 0; i < ds.specs.size(); ++i) {
    try {
      ds.specs[i].validate(ds.image_size);
    } catch (const ConfigError& e) {
      throw FormatError("manifest: spec " + std::to_string(i) + ": " + e.what());
    }
  }
  return ds;
}

void write_manifest(const Dataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << format_manifest(ds);
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

Dataset read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_manifest(ss.str());
}

Tensor stack_images(const std::vector<Tensor>& images) {
  if (images.empty()) throw ShapeError("stack_images: no images");
  const num::Shape s = images.front().shape();
  std::vector<double> v;
  for (const Tensor& t : images) {
    if (t.shape() != s) throw ShapeError("stack_images: mixed shapes");
    const std::vector<double> x = t.to_vector();
    v.insert(v.end(), x.begin(), x.end());
  }
  num::Shape out{static_cast<int>(images.size())};
  out.insert(out.end(), s.begin(), s.end());
  return Tensor::from_values(out, v, images.front().dtype());
}

Tensor batch_item(const Tensor& batch, int n) {
  if (batch.rank() < 1 || n < 0 || n >= batch.dim(0)) throw ShapeError("batch_item: index out of range");
  const num::Shape s(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t per = batch.numel() / static_cast<std::size_t>(batch.dim(0));
  const std::vector<double> v = batch.to_vector();
  return Tensor::from_values(s, std::span<const double>(v.data() + per * static_cast<std::size_t>(n), per),
                             batch.dtype());
}

BatchIterator::BatchIterator(const Dataset& dataset, BatchOptions options)
    : dataset_(&dataset), options_(options), pairs_(dataset.size()), masks_(dataset.size()) {
  if (options_.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (dataset.size() == 0) throw ConfigError("batch iterator over an empty dataset");
}

std::vector<std::size_t> BatchIterator::epoch_order(std::uint64_t epoch) const {
  std::vector<std::size_t> order(dataset_->size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(options_.seed, epoch);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
  }
  return order;
}

std::size_t BatchIterator::index_at(std::uint64_t visit) const {
  const std::uint64_t e = visit / dataset_->size();
  if (e != order_epoch_) {
    order_ = epoch_order(e);
    order_epoch_ = e;
  }
  return order_[static_cast<std::size_t>(visit % dataset_->size())];
}

AugmentDescriptor BatchIterator::augment_at(std::uint64_t visit) const {
  if (!options_.augment) return {};
  Rng rng(Rng::mix(options_.seed) ^ kAugmentStream, visit);
  return draw_augment(rng, dataset_->image_size, options_.ranges);
}

const ScenePair& BatchIterator::cached(std::size_t i) {
  if (!pairs_[i]) pairs_[i] = dataset_->pair(i);
  return *pairs_[i];
}

const Tensor& BatchIterator::cached_mask(std::size_t i) {
  if (!masks_[i].defined()) masks_[i] = dataset_->mask(i);
  return masks_[i];
}

PseudoTuple BatchIterator::next() {
  PseudoTuple t;
  std::vector<Tensor> xa, xtb, xb, third;
  for (int b = 0; b < options_.batch_size; ++b) {
    const std::uint64_t visit = position_++;
    const std::size_t i = index_at(visit);
    const ScenePair& p = cached(i);
    const AugmentDescriptor d = augment_at(visit);
    xa.push_back(p.x_a);
    xb.push_back(p.x_b);
    xtb.push_back(apply_augment(p.x_b, d));
    if (options_.third_domain) third.push_back(cached_mask(i));
    t.indices.push_back(i);
    t.augment.push_back(d);
  }
  t.x_a = stack_images(xa);
  t.x_b = stack_images(xb);
  t.x_tilde_b = stack_images(xtb);
  if (options_.third_domain) t.third = stack_images(third);
  return t;
}

}  // namespace cfftgan::data
