#include "deconvparse/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "deconvparse/errors.hpp"

namespace deconvparse {

namespace {

// key -> default value ("" = no default; the key must be set to be read).
const std::map<std::string, std::string>& key_registry() {
  static const std::map<std::string, std::string> registry = {
      // dataset synthesis
      {"classes", "5"},
      {"channels", "3"},
      {"image_size", "64"},
      {"train_count", "200"},
      {"test_count", "50"},
      {"seed", "0"},
      // multi-patch grid
      {"patches_m", "4"},
      {"patches_n", "4"},
      // architecture
      {"conv_maps", "12,12"},
      {"conv_kernels", "5,7"},
      {"conv_pools", "2,2"},
      {"deconv_maps", "24,24,32"},
      {"deconv_kernels", "3,3,3"},
      {"deconv_pool_depth", "2,2,2"},
      {"deconv_pool_spatial", "1,1,2"},
      {"head_mode", "softmax"},
      // training schedule
      {"epochs_conv", "5"},
      {"epochs_deconv", "3"},
      {"epochs_head", "10"},
      {"lr_conv", "0.01"},
      {"lr_head", "0.005"},
      {"dropout_input", "0.2"},
      {"dropout_hidden", "0.5"},
      {"dropout_fc", "0.6975"},
      {"pixels_per_step", "64"},
      {"balance_classes", "true"},
      {"trunk_shared", "true"},
      // deconvolutional stack
      {"deconv_lambda", "1"},
      {"shrink_beta", "0.05"},
      {"ista_train_iters", "20"},
      {"ista_eval_iters", "40"},
      {"cg_tol", "1e-6"},
      {"cg_max_iters", "200"},
      {"filter_update_batch", "48"},
      {"unit_normalize", "true"},
      {"deconv_target", "conv"},
      // preprocessing
      {"lcn_window", "5"},
      {"standardize_per_image", "false"},
      // paths (no defaults)
      {"data_dir", ""},
      {"model_file", ""},
      {"input_image", ""},
      // experiment protocols
      {"ablation_mode", "remove"},
      {"ablation_seeds", "0,1,2,3,4"},
      {"seedstudy_variants", "Deconv-5,CNN-5"},
      {"seedstudy_runs", "20"},
  };
  return registry;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [k, v] : key_registry()) out.push_back(k);
    return out;
  }();
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key_registry().find(key) == key_registry().end()) {
    throw ConfigError("unknown key '" + key + "'");
  }
  values_[key] = value;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key_registry().find(key) == key_registry().end()) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": unknown key '" + key + "'");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool RunConfig::has(const std::string& key) const {
  return values_.find(key) != values_.end();
}

const std::string& RunConfig::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it != values_.end()) return it->second;
  const auto reg = key_registry().find(key);
  if (reg == key_registry().end()) {
    throw ConfigError("unknown key '" + key + "'");
  }
  if (reg->second.empty()) {
    throw ConfigError("missing required key '" + key + "'");
  }
  return reg->second;
}

void RunConfig::require(const std::string& key) const {
  const auto reg = key_registry().find(key);
  if (reg == key_registry().end()) {
    throw ConfigError("unknown key '" + key + "'");
  }
  if (!has(key) && reg->second.empty()) {
    throw ConfigError("missing required key '" + key + "'");
  }
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  const std::string& v = raw(key);
  try {
    std::size_t pos = 0;
    const std::int64_t out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': malformed integer '" + v + "'");
  }
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = raw(key);
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': malformed number '" + v + "'");
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = raw(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v +
                    "'");
}

const std::string& RunConfig::get_string(const std::string& key) const {
  return raw(key);
}

std::vector<std::int64_t> RunConfig::get_int_list(
    const std::string& key) const {
  const std::string& v = raw(key);
  std::vector<std::int64_t> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    try {
      std::size_t pos = 0;
      out.push_back(std::stoll(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': malformed list entry '" + tok +
                        "'");
    }
  }
  return out;
}

std::vector<std::string> RunConfig::get_string_list(
    const std::string& key) const {
  const std::string& v = raw(key);
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

NetworkConfig RunConfig::network_config() const {
  NetworkConfig cfg;
  cfg.classes = static_cast<std::size_t>(get_int("classes"));
  cfg.channels = static_cast<std::size_t>(get_int("channels"));
  cfg.image_h = cfg.image_w = static_cast<std::size_t>(get_int("image_size"));
  cfg.grid_m = static_cast<std::size_t>(get_int("patches_m"));
  cfg.grid_n = static_cast<std::size_t>(get_int("patches_n"));
  cfg.seed = static_cast<std::uint64_t>(get_int("seed"));

  const auto cm = get_int_list("conv_maps");
  const auto ck = get_int_list("conv_kernels");
  const auto cp = get_int_list("conv_pools");
  if (cm.size() != ck.size() || cm.size() != cp.size()) {
    throw ConfigError("conv_maps/conv_kernels/conv_pools lengths differ");
  }
  cfg.conv_stages.clear();
  for (std::size_t i = 0; i < cm.size(); ++i) {
    cfg.conv_stages.push_back(
        {static_cast<std::size_t>(cm[i]), static_cast<std::size_t>(ck[i]),
         PoolRegion{1, static_cast<std::size_t>(cp[i]),
                    static_cast<std::size_t>(cp[i])}});
  }

  const auto dm = get_int_list("deconv_maps");
  const auto dk = get_int_list("deconv_kernels");
  const auto dd = get_int_list("deconv_pool_depth");
  const auto dsp = get_int_list("deconv_pool_spatial");
  if (dm.size() != dk.size() || dm.size() != dd.size() ||
      dm.size() != dsp.size()) {
    throw ConfigError("deconv layer spec lists have different lengths");
  }
  cfg.deconv_layers.clear();
  for (std::size_t i = 0; i < dm.size(); ++i) {
    cfg.deconv_layers.push_back(
        {static_cast<std::size_t>(dm[i]), static_cast<std::size_t>(dk[i]),
         PoolRegion{static_cast<std::size_t>(dd[i]),
                    static_cast<std::size_t>(dsp[i]),
                    static_cast<std::size_t>(dsp[i])}});
  }

  const std::string mode = get_string("head_mode");
  if (mode == "softmax") {
    cfg.head_mode = HeadMode::softmax;
  } else if (mode == "sigmoid") {
    cfg.head_mode = HeadMode::sigmoid;
  } else {
    throw ConfigError("head_mode must be softmax or sigmoid, got '" + mode +
                      "'");
  }

  cfg.epochs_conv = static_cast<std::size_t>(get_int("epochs_conv"));
  cfg.epochs_deconv = static_cast<std::size_t>(get_int("epochs_deconv"));
  cfg.epochs_head = static_cast<std::size_t>(get_int("epochs_head"));
  cfg.lr_conv = get_double("lr_conv");
  cfg.lr_head = get_double("lr_head");
  cfg.dropout.input = get_double("dropout_input");
  cfg.dropout.hidden = get_double("dropout_hidden");
  cfg.dropout.fc = get_double("dropout_fc");
  cfg.pixels_per_step = static_cast<std::size_t>(get_int("pixels_per_step"));
  cfg.balance_classes = get_bool("balance_classes");
  cfg.trunk_shared = get_bool("trunk_shared");

  cfg.deconv_lambda = get_double("deconv_lambda");
  cfg.shrink_beta = get_double("shrink_beta");
  cfg.ista_train_iters =
      static_cast<std::size_t>(get_int("ista_train_iters"));
  cfg.ista_eval_iters = static_cast<std::size_t>(get_int("ista_eval_iters"));
  cfg.cg_tol = get_double("cg_tol");
  cfg.cg_max_iters = static_cast<std::size_t>(get_int("cg_max_iters"));
  cfg.filter_update_batch =
      static_cast<std::size_t>(get_int("filter_update_batch"));
  cfg.unit_normalize = get_bool("unit_normalize");

  const std::string target = get_string("deconv_target");
  if (target == "conv") {
    cfg.deconv_target = DeconvTarget::conv_features;
  } else if (target == "image") {
    cfg.deconv_target = DeconvTarget::raw_image;
  } else {
    throw ConfigError("deconv_target must be conv or image, got '" + target +
                      "'");
  }

  cfg.lcn_window = static_cast<std::size_t>(get_int("lcn_window"));
  cfg.standardize_per_image = get_bool("standardize_per_image");

  if (cfg.deconv_lambda <= 0.0) {
    throw ConfigError("deconv_lambda must be positive");
  }
  if (cfg.shrink_beta < 0.0) {
    throw ConfigError("shrink_beta must be nonnegative");
  }
  return cfg;
}

}  // namespace deconvparse
