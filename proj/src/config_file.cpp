#include "edgeshield/config_file.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "edgeshield/hash.hpp"

namespace edgeshield {

namespace {

void reject_unknown(const YAML::Node& node, const std::string& where, const std::set<std::string>& known) {
  if (!node.IsMap()) throw ConfigError(where + " must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!known.count(key)) {
      throw ConfigError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <typename V>
void read(const YAML::Node& node, const char* key, V& out, const std::string& where) {
  const YAML::Node value = node[key];
  if (!value) return;
  try {
    out = value.as<V>();
  } catch (const YAML::Exception&) {
    throw ConfigError("bad value for '" + (where.empty() ? std::string(key) : where + "." + key) + "'");
  }
}

// Shortest decimal that round-trips a double.
std::string number(double v) {
  char buf[40];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  ExperimentConfig c;
  if (!root || root.IsNull()) {
    c.validate();
    return c;
  }
  reject_unknown(root, "",
                 {"data", "models", "epsilon", "canny", "attack_surface", "retrain", "train", "seeds",
                  "visualize", "output"});
  if (auto d = root["data"]) {
    reject_unknown(d, "data", {"source", "per_class", "noise", "image_size", "channels", "train_fraction"});
    read(d, "source", c.data.source, "data");
    read(d, "per_class", c.data.per_class, "data");
    read(d, "noise", c.data.noise, "data");
    read(d, "image_size", c.data.image_size, "data");
    read(d, "channels", c.data.channels, "data");
    read(d, "train_fraction", c.data.train_fraction, "data");
  }
  read(root, "models", c.models, "");
  if (auto e = root["epsilon"]) {
    reject_unknown(e, "epsilon", {"impact", "edge", "retrain", "visual"});
    read(e, "impact", c.epsilon.impact, "epsilon");
    read(e, "edge", c.epsilon.edge, "epsilon");
    read(e, "retrain", c.epsilon.retrain, "epsilon");
    read(e, "visual", c.epsilon.visual, "epsilon");
  }
  if (auto k = root["canny"]) {
    reject_unknown(k, "canny", {"low", "high"});
    read(k, "low", c.canny_low, "canny");
    read(k, "high", c.canny_high, "canny");
  }
  if (root["attack_surface"]) {
    std::string s;
    read(root, "attack_surface", s, "");
    try {
      c.attack_surface = attack_surface_from_string(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (auto r = root["retrain"]) {
    reject_unknown(r, "retrain", {"per_side", "from_scratch"});
    read(r, "per_side", c.retrain.per_side, "retrain");
    read(r, "from_scratch", c.retrain.from_scratch, "retrain");
  }
  if (auto t = root["train"]) {
    reject_unknown(t, "train",
                   {"epochs", "batch_size", "learning_rate", "early_stopping_patience", "lr_factor",
                    "lr_patience", "min_lr", "validation_fraction"});
    read(t, "epochs", c.train.epochs, "train");
    read(t, "batch_size", c.train.batch_size, "train");
    read(t, "learning_rate", c.train.learning_rate, "train");
    read(t, "early_stopping_patience", c.train.early_stopping_patience, "train");
    read(t, "lr_factor", c.train.lr_factor, "train");
    read(t, "lr_patience", c.train.lr_patience, "train");
    read(t, "min_lr", c.train.min_lr, "train");
    read(t, "validation_fraction", c.train.validation_fraction, "train");
  }
  if (auto s = root["seeds"]) {
    reject_unknown(s, "seeds", {"data", "init", "sampling"});
    read(s, "data", c.seeds.data, "seeds");
    read(s, "init", c.seeds.init, "seeds");
    read(s, "sampling", c.seeds.sampling, "seeds");
  }
  if (auto v = root["visualize"]) {
    reject_unknown(v, "visualize", {"indices", "patch"});
    read(v, "indices", c.visualize.indices, "visualize");
    read(v, "patch", c.visualize.patch, "visualize");
  }
  if (root["output"]) {
    std::string out;
    read(root, "output", out, "");
    c.output = out;
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "source" << YAML::Value << YAML::DoubleQuoted << c.data.source;
  out << YAML::Key << "per_class" << YAML::Value << c.data.per_class;
  out << YAML::Key << "noise" << YAML::Value << number(c.data.noise);
  out << YAML::Key << "image_size" << YAML::Value << c.data.image_size;
  out << YAML::Key << "channels" << YAML::Value << c.data.channels;
  out << YAML::Key << "train_fraction" << YAML::Value << number(c.data.train_fraction);
  out << YAML::EndMap;
  out << YAML::Key << "models" << YAML::Value << YAML::Flow << c.models;
  out << YAML::Key << "epsilon" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "impact" << YAML::Value << number(c.epsilon.impact);
  out << YAML::Key << "edge" << YAML::Value << number(c.epsilon.edge);
  out << YAML::Key << "retrain" << YAML::Value << number(c.epsilon.retrain);
  out << YAML::Key << "visual" << YAML::Value << number(c.epsilon.visual);
  out << YAML::EndMap;
  out << YAML::Key << "canny" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "low" << YAML::Value << number(c.canny_low);
  out << YAML::Key << "high" << YAML::Value << number(c.canny_high);
  out << YAML::EndMap;
  out << YAML::Key << "attack_surface" << YAML::Value << to_string(c.attack_surface);
  out << YAML::Key << "retrain" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "per_side" << YAML::Value << c.retrain.per_side;
  out << YAML::Key << "from_scratch" << YAML::Value << c.retrain.from_scratch;
  out << YAML::EndMap;
  out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "epochs" << YAML::Value << c.train.epochs;
  out << YAML::Key << "batch_size" << YAML::Value << c.train.batch_size;
  out << YAML::Key << "learning_rate" << YAML::Value << number(c.train.learning_rate);
  out << YAML::Key << "early_stopping_patience" << YAML::Value << c.train.early_stopping_patience;
  out << YAML::Key << "lr_factor" << YAML::Value << number(c.train.lr_factor);
  out << YAML::Key << "lr_patience" << YAML::Value << c.train.lr_patience;
  out << YAML::Key << "min_lr" << YAML::Value << number(c.train.min_lr);
  out << YAML::Key << "validation_fraction" << YAML::Value << number(c.train.validation_fraction);
  out << YAML::EndMap;
  out << YAML::Key << "seeds" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "data" << YAML::Value << c.seeds.data;
  out << YAML::Key << "init" << YAML::Value << c.seeds.init;
  out << YAML::Key << "sampling" << YAML::Value << c.seeds.sampling;
  out << YAML::EndMap;
  out << YAML::Key << "visualize" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "indices" << YAML::Value << YAML::Flow << c.visualize.indices;
  out << YAML::Key << "patch" << YAML::Value << c.visualize.patch;
  out << YAML::EndMap;
  out << YAML::Key << "output" << YAML::Value << YAML::DoubleQuoted << c.output.string();
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string config_hash(const ExperimentConfig& config) {
  // The output location does not affect results.
  ExperimentConfig canonical = config;
  canonical.output.clear();
  return fnv1a64_hex(serialize_config(canonical));
}

}  // namespace edgeshield
