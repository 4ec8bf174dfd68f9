#include "cfftgan/trainkit/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cfftgan/numcore/error.hpp"

namespace cfftgan::train {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) throw ConfigError("config: " + key + ": bad number '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) throw ConfigError("config: " + key + ": bad integer '" + v + "'");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) throw ConfigError("config: " + key + ": bad integer '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: " + key + ": expected true or false, got '" + v + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  if (out.empty()) throw ConfigError("config: " + key + ": empty list");
  return out;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + num(v[i]);
  return out;
}

}  // namespace

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::micro() {
  TrainConfig c;
  c.arch = "micro";
  const fusion::CfftConfig f = fusion::CfftConfig::micro();
  c.channels = f.channels;
  c.height = f.height;
  c.width = f.width;
  c.levels = f.levels;
  c.heads = f.heads;
  c.ffn_depth = f.ffn_depth;
  c.hiformer_depth = f.hiformer_depth;
  c.batch_size = 2;
  c.dataset_size = 16;
  return c;
}

model::ArchConfig TrainConfig::arch_config() const {
  model::ArchConfig a;
  if (arch == "desk") {
    a = model::ArchConfig::desk();
  } else if (arch == "micro") {
    a = model::ArchConfig::micro();
  } else if (arch == "large") {
    a = model::ArchConfig::large();
  } else {
    throw ConfigError("config: unknown arch '" + arch + "' (desk, micro, large)");
  }
  a.fusion.channels = channels;
  a.fusion.height = height;
  a.fusion.width = width;
  a.fusion.levels = levels;
  a.fusion.heads = heads;
  a.fusion.ffn_depth = ffn_depth;
  a.fusion.hiformer_depth = hiformer_depth;
  a.fusion.hiformer_enabled = hiformer_enabled;
  a.domains = domains;
  if (!a.encoder.empty()) a.encoder.back().channels = channels;
  if (image_size != a.image_size) {
    throw ConfigError("config: image_size " + std::to_string(image_size) + " does not match the " + arch +
                      " architecture (" + std::to_string(a.image_size) + ")");
  }
  a.validate();
  return a;
}

void TrainConfig::validate() const {
  adam_g().validate();
  adam_d().validate();
  if (steps < 1) throw ConfigError("config: steps must be >= 1");
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (manifest.empty() && dataset_size < 1) throw ConfigError("config: dataset_size must be >= 1");
  if (domains != 2 && domains != 3) throw ConfigError("config: domains must be 2 or 3");
  if (log_interval < 1) throw ConfigError("config: log_interval must be >= 1");
  weights.validate();
  (void)arch_config();
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  const std::string& v = value;
  if (key == "arch") arch = v;
  else if (key == "seed") seed = to_u64(key, v);
  else if (key == "steps") steps = to_u64(key, v);
  else if (key == "batch_size") batch_size = to_int(key, v);
  else if (key == "image_size") image_size = to_int(key, v);
  else if (key == "dataset_seed") dataset_seed = to_u64(key, v);
  else if (key == "dataset_size") dataset_size = to_u64(key, v);
  else if (key == "manifest") manifest = v;
  else if (key == "lr_g") lr_g = to_double(key, v);
  else if (key == "lr_d") lr_d = to_double(key, v);
  else if (key == "beta1") beta1 = to_double(key, v);
  else if (key == "beta2") beta2 = to_double(key, v);
  else if (key == "adam_eps") adam_eps = to_double(key, v);
  else if (key == "channels") channels = to_int(key, v);
  else if (key == "height") height = to_int(key, v);
  else if (key == "width") width = to_int(key, v);
  else if (key == "levels") levels = to_int(key, v);
  else if (key == "heads") heads = to_int(key, v);
  else if (key == "ffn_depth") ffn_depth = to_int(key, v);
  else if (key == "hiformer_depth") hiformer_depth = to_int(key, v);
  else if (key == "hiformer_enabled") hiformer_enabled = to_bool(key, v);
  else if (key == "domains") domains = to_int(key, v);
  else if (key == "extractor_seed") extractor_seed = to_u64(key, v);
  else if (key == "w_align") weights.align = to_double(key, v);
  else if (key == "w_match") weights.match = to_double(key, v);
  else if (key == "w_perc") weights.perc = to_double(key, v);
  else if (key == "w_cx") weights.cx = to_double(key, v);
  else if (key == "w_adv") weights.adv = to_double(key, v);
  else if (key == "mu") weights.mu = to_list(key, v);
  else if (key == "omega") weights.omega = to_list(key, v);
  else if (key == "augment") augment = to_bool(key, v);
  else if (key == "log_interval") log_interval = to_u64(key, v);
  else if (key == "checkpoint_interval") checkpoint_interval = to_u64(key, v);
  else if (key == "out_dir") out_dir = v;
  else throw ConfigError("config: unknown key '" + key + "'");
}

std::string TrainConfig::format() const {
  std::ostringstream os;
  os << "arch=" << arch << "\n"
     << "seed=" << seed << "\n"
     << "steps=" << steps << "\n"
     << "batch_size=" << batch_size << "\n"
     << "image_size=" << image_size << "\n"
     << "dataset_seed=" << dataset_seed << "\n"
     << "dataset_size=" << dataset_size << "\n"
     << "manifest=" << manifest << "\n"
     << "lr_g=" << num(lr_g) << "\n"
     << "lr_d=" << num(lr_d) << "\n"
     << "beta1=" << num(beta1) << "\n"
     << "beta2=" << num(beta2) << "\n"
     << "adam_eps=" << num(adam_eps) << "\n"
     << "channels=" << channels << "\n"
     << "height=" << height << "\n"
     << "width=" << width << "\n"
     << "levels=" << levels << "\n"
     << "heads=" << heads << "\n"
     << "ffn_depth=" << ffn_depth << "\n"
     << "hiformer_depth=" << hiformer_depth << "\n"
     << "hiformer_enabled=" << (hiformer_enabled ? "true" : "false") << "\n"
     << "domains=" << domains << "\n"
     << "extractor_seed=" << extractor_seed << "\n"
     << "w_align=" << num(weights.align) << "\n"
     << "w_match=" << num(weights.match) << "\n"
     << "w_perc=" << num(weights.perc) << "\n"
     << "w_cx=" << num(weights.cx) << "\n"
     << "w_adv=" << num(weights.adv) << "\n"
     << "mu=" << list(weights.mu) << "\n"
     << "omega=" << list(weights.omega) << "\n"
     << "augment=" << (augment ? "true" : "false") << "\n"
     << "log_interval=" << log_interval << "\n"
     << "checkpoint_interval=" << checkpoint_interval << "\n"
     << "out_dir=" << out_dir << "\n";
  return os.str();
}

TrainConfig TrainConfig::parse(const std::string& text) {
  std::vector<std::pair<int, std::pair<std::string, std::string>>> entries;
  std::stringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value, got '" + line + "'");
    }
    entries.push_back({line_no, {trim(line.substr(0, eq)), trim(line.substr(eq + 1))}});
  }
  // Defaults come from the named preset, wherever `arch` appears.
  TrainConfig c;
  for (const auto& [n, kv] : entries) {
    if (kv.first == "arch" && kv.second == "micro") c = micro();
  }
  for (const auto& [n, kv] : entries) {
    try {
      c.set(kv.first, kv.second);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(n) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

}  // namespace cfftgan::train
