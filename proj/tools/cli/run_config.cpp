// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli/run_config.hpp"

#include <array>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include "fastprotect/errors.hpp"

namespace fastprotect::cli {

namespace pt = boost::property_tree;

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

// Shortest text that reads back to the same double.
std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  for (int p = 1; p <= 17; ++p) {
    std::ostringstream t;
    t << std::setprecision(p) << v;
    if (std::stod(t.str()) == v) return t.str();
  }
  return os.str();
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"run", {"seed"}},
      {"encoder", {"seed", "num_stages", "base_channels", "latent_channels", "downsample_factor"}},
      {"train",
       {"lr", "beta1", "beta2", "adam_epsilon", "batch_size", "steps", "k", "eta", "base_resolution", "train_global"}},
      {"loss", {"lambda_ml", "layers"}},
      {"scaling", {"alpha_boost", "beta", "c"}},
      {"pgd", {"steps", "step_len"}},
      {"paths", {"data", "model", "output"}},
  };
  return keys;
}

template <typename T>
void read(const pt::ptree& tree, const std::string& key, T& out) {
  const auto v = tree.get_optional<std::string>(key);
  if (!v) return;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (*v == "true" || *v == "1") {
        out = true;
      } else if (*v == "false" || *v == "0") {
        out = false;
      } else {
        throw ConfigError("");
      }
    } else if constexpr (std::is_same_v<T, std::string> || std::is_same_v<T, std::filesystem::path>) {
      out = *v;
    } else {
      out = tree.get<T>(key);
    }
  } catch (const std::exception&) {
    throw ConfigError("bad value '" + *v + "' for " + key);
  }
}

}  // namespace

void RunConfig::validate() const {
  encoder.validate();
  train.validate();
  scaling.validate();
  pgd.validate();
  if (pgd.eta != train.eta) throw ConfigError("pgd eta must match train eta");
}

std::string RunConfig::to_ini() const {
  std::ostringstream o;
  o << "[run]\nseed=" << seed << "\n\n";
  o << "[encoder]\nseed=" << encoder.seed << "\nnum_stages=" << encoder.num_stages
    << "\nbase_channels=" << encoder.base_channels << "\nlatent_channels=" << encoder.latent_channels
    << "\ndownsample_factor=" << encoder.downsample_factor << "\n\n";
  o << "[train]\nlr=" << num(train.lr) << "\nbeta1=" << num(train.beta1) << "\nbeta2=" << num(train.beta2)
    << "\nadam_epsilon=" << num(train.adam_epsilon) << "\nbatch_size=" << train.batch_size
    << "\nsteps=" << train.steps << "\nk=" << train.k << "\neta=" << train.eta
    << "\nbase_resolution=" << train.base_resolution << "\ntrain_global=" << (train.train_global ? "true" : "false")
    << "\n\n";
  o << "[loss]\nlambda_ml=" << num(train.loss.lambda_ml) << "\nlayers=" << join(train.loss.layer_names) << "\n\n";
  o << "[scaling]\nalpha_boost=" << num(scaling.alpha_boost) << "\nbeta=" << num(scaling.beta)
    << "\nc=" << scaling.c << "\n\n";
  o << "[pgd]\nsteps=" << pgd.pgd_steps << "\nstep_len=" << num(pgd.pgd_step_len) << "\n\n";
  o << "[paths]\ndata=" << paths.data.generic_string() << "\nmodel=" << paths.model.generic_string()
    << "\noutput=" << paths.output.generic_string() << "\n";
  return o.str();
}

std::string RunConfig::hash() const {
  const std::string text = to_ini();
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 failed");
  }
  std::ostringstream o;
  for (unsigned int i = 0; i < len; ++i) o << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return o.str();
}

RunConfig RunConfig::parse(const std::string& ini_text) {
  pt::ptree tree;
  try {
    std::istringstream in(ini_text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) throw ConfigError("config: unknown section [" + section + "]");
    if (body.empty() && !body.data().empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, _] : body) {
      if (!it->second.contains(key)) throw ConfigError("config: unknown key " + section + "." + key);
    }
  }

  RunConfig c;
  read(tree, "run.seed", c.seed);
  read(tree, "encoder.seed", c.encoder.seed);
  read(tree, "encoder.num_stages", c.encoder.num_stages);
  read(tree, "encoder.base_channels", c.encoder.base_channels);
  read(tree, "encoder.latent_channels", c.encoder.latent_channels);
  read(tree, "encoder.downsample_factor", c.encoder.downsample_factor);
  read(tree, "train.lr", c.train.lr);
  read(tree, "train.beta1", c.train.beta1);
  read(tree, "train.beta2", c.train.beta2);
  read(tree, "train.adam_epsilon", c.train.adam_epsilon);
  read(tree, "train.batch_size", c.train.batch_size);
  read(tree, "train.steps", c.train.steps);
  read(tree, "train.k", c.train.k);
  read(tree, "train.eta", c.train.eta);
  read(tree, "train.base_resolution", c.train.base_resolution);
  read(tree, "train.train_global", c.train.train_global);
  read(tree, "loss.lambda_ml", c.train.loss.lambda_ml);
  std::string layers;
  read(tree, "loss.layers", layers);
  if (!layers.empty()) c.train.loss.layer_names = split(layers);
  read(tree, "scaling.alpha_boost", c.scaling.alpha_boost);
  read(tree, "scaling.beta", c.scaling.beta);
  read(tree, "scaling.c", c.scaling.c);
  read(tree, "pgd.steps", c.pgd.pgd_steps);
  read(tree, "pgd.step_len", c.pgd.pgd_step_len);
  read(tree, "paths.data", c.paths.data);
  read(tree, "paths.model", c.paths.model);
  read(tree, "paths.output", c.paths.output);
  c.pgd.eta = c.train.eta;
  c.train.seed = c.seed;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace fastprotect::cli
