#include "scn/app/config.hpp"

#include <cstdlib>
#include <fstream>
#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "scn/core/errors.hpp"
#include "scn/train/model.hpp"

namespace scn::app {

using capsule::LayerSpec;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T out{};
  if constexpr (std::is_unsigned_v<T>) {
    if (!value.empty() && value[0] == '-') throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
  }
  is >> out;
  if (!is || !(is >> std::ws).eof()) throw ConfigError(key + ": cannot parse '" + value + "'");
  return out;
}

// Splits "a=1 b = 2 kind" into tokens with '=' glued to its neighbours.
std::vector<std::string> layer_tokens(const std::string& line) {
  std::string glued;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '=') {
      while (!glued.empty() && (glued.back() == ' ' || glued.back() == '\t')) glued.pop_back();
      glued += '=';
      while (i + 1 < line.size() && (line[i + 1] == ' ' || line[i + 1] == '\t')) ++i;
    } else {
      glued += line[i];
    }
  }
  std::istringstream is(glued);
  std::vector<std::string> tokens;
  for (std::string t; is >> t;) tokens.push_back(t);
  return tokens;
}

struct LayerDraft {
  std::map<std::string, std::string> fields;
  std::size_t line = 0;
};

void add_layer_tokens(LayerDraft& draft, const std::vector<std::string>& tokens) {
  for (const auto& t : tokens) {
    const auto eq = t.find('=');
    std::string key = eq == std::string::npos ? "kind" : t.substr(0, eq);
    std::string value = eq == std::string::npos ? t : t.substr(eq + 1);
    if (draft.fields.count(key)) throw ConfigError("layer field '" + key + "' given twice");
    draft.fields[key] = value;
  }
}

LayerSpec build_layer(const LayerDraft& draft) {
  static const std::set<std::string> known = {"kind", "n", "c", "k", "stride", "pad", "activation"};
  for (const auto& [key, value] : draft.fields) {
    if (!known.count(key)) throw ConfigError("unknown layer key '" + key + "'");
  }
  const auto kind_it = draft.fields.find("kind");
  if (kind_it == draft.fields.end()) throw ConfigError("layer block without kind");
  const auto kind = capsule::parse_layer_kind(kind_it->second);
  if (!kind) throw ConfigError("unknown layer kind '" + kind_it->second + "'");

  LayerSpec spec;
  spec.kind = *kind;
  auto get = [&](const std::string& key) -> std::optional<std::size_t> {
    const auto it = draft.fields.find(key);
    if (it == draft.fields.end()) return std::nullopt;
    return parse_number<std::size_t>(key, it->second);
  };
  auto require = [&](const std::string& key) {
    const auto v = get(key);
    if (!v) throw ConfigError(kind_it->second + " layer needs '" + key + "'");
    return *v;
  };
  using capsule::LayerKind;
  switch (spec.kind) {
    case LayerKind::conv:
      spec.n = require("n");
      spec.k = require("k");
      break;
    case LayerKind::sc_conv:
      spec.n = require("n");
      spec.c = require("c");
      spec.k = require("k");
      break;
    case LayerKind::sc_fc:
      spec.n = require("n");
      spec.c = require("c");
      break;
    case LayerKind::sc_meanpool:
      spec.k = require("k");
      break;
    case LayerKind::activation:
    case LayerKind::upsample:
      break;
  }
  const std::string shape_keys = spec.kind == LayerKind::conv      ? "nk"
                                 : spec.kind == LayerKind::sc_conv   ? "nck"
                                 : spec.kind == LayerKind::sc_fc     ? "nc"
                                 : spec.kind == LayerKind::sc_meanpool ? "k"
                                                                       : "";
  for (const char key : std::string("nck")) {
    if (draft.fields.count(std::string(1, key)) && shape_keys.find(key) == std::string::npos) {
      throw ConfigError(std::string("layer key '") + key + "' does not apply to " + kind_it->second);
    }
  }
  spec.stride = get("stride");
  spec.pad = get("pad");
  if (const auto it = draft.fields.find("activation"); it != draft.fields.end()) {
    const auto act = capsule::parse_activation(it->second);
    if (!act) throw ConfigError("unknown activation '" + it->second + "'");
    spec.activation = *act;
  } else if (spec.kind == LayerKind::activation) {
    throw ConfigError("activation layer needs 'activation'");
  }
  return spec;
}

}  // namespace

LayerSpec parse_layer_spec(const std::string& line) {
  LayerDraft draft;
  add_layer_tokens(draft, layer_tokens(line));
  return build_layer(draft);
}

train::TrainConfig parse_config_text(const std::string& text) {
  static const std::vector<std::string> required = {"optimizer", "learning_rate", "epochs",
                                                    "batch_size", "seed", "input"};
  static const std::set<std::string> optional = {"beta1", "beta2", "momentum", "adam_epsilon",
                                                 "newton_schulz_iters", "train_limit", "test_limit"};
  std::map<std::string, std::string> values;
  std::vector<LayerDraft> layers;
  bool in_layer = false;

  std::istringstream in(text);
  std::string raw;
  for (std::size_t lineno = 1; std::getline(in, raw); ++lineno) {
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    try {
      if (line.rfind("[layer]", 0) == 0) {
        in_layer = true;
        layers.push_back({{}, lineno});
        add_layer_tokens(layers.back(), layer_tokens(line.substr(7)));
        continue;
      }
      if (line.front() == '[') throw ConfigError("unknown section " + line);
      if (in_layer) {
        add_layer_tokens(layers.back(), layer_tokens(line));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + line + "'");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      const bool known = optional.count(key) ||
                         std::find(required.begin(), required.end(), key) != required.end();
      if (!known) throw ConfigError("unknown key '" + key + "'");
      if (values.count(key)) throw ConfigError("key '" + key + "' given twice");
      values[key] = value;
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }

  std::vector<std::string> missing;
  for (const auto& key : required) {
    if (!values.count(key)) missing.push_back(key);
  }
  if (layers.empty()) missing.push_back("[layer]");
  if (!missing.empty()) {
    std::string msg = "missing required keys:";
    for (const auto& m : missing) msg += " " + m;
    throw ConfigError(msg);
  }

  train::TrainConfig cfg;
  const auto& opt = values["optimizer"];
  if (opt == "adam") {
    cfg.optimizer = train::OptimizerKind::adam;
  } else if (opt == "sgd_momentum") {
    cfg.optimizer = train::OptimizerKind::sgd_momentum;
  } else {
    throw ConfigError("unknown optimizer '" + opt + "'");
  }
  cfg.learning_rate = parse_number<double>("learning_rate", values["learning_rate"]);
  cfg.epochs = parse_number<std::size_t>("epochs", values["epochs"]);
  cfg.batch_size = parse_number<std::size_t>("batch_size", values["batch_size"]);
  cfg.seed = parse_number<std::uint64_t>("seed", values["seed"]);
  if (values.count("beta1")) cfg.beta1 = parse_number<double>("beta1", values["beta1"]);
  if (values.count("beta2")) cfg.beta2 = parse_number<double>("beta2", values["beta2"]);
  if (values.count("momentum")) cfg.momentum = parse_number<double>("momentum", values["momentum"]);
  if (values.count("adam_epsilon")) cfg.adam_epsilon = parse_number<double>("adam_epsilon", values["adam_epsilon"]);
  if (values.count("newton_schulz_iters")) {
    cfg.newton_schulz_iters = parse_number<int>("newton_schulz_iters", values["newton_schulz_iters"]);
  }
  if (values.count("train_limit")) cfg.train_limit = parse_number<std::size_t>("train_limit", values["train_limit"]);
  if (values.count("test_limit")) cfg.test_limit = parse_number<std::size_t>("test_limit", values["test_limit"]);

  {
    std::istringstream is(values["input"]);
    std::size_t c = 0, h = 0, w = 0;
    if (!(is >> c >> h >> w) || !(is >> std::ws).eof() || c == 0 || h == 0 || w == 0) {
      throw ConfigError("input: expected 'C H W', got '" + values["input"] + "'");
    }
    cfg.input = {c, h, w, 0, 0};
  }
  for (const auto& draft : layers) {
    try {
      cfg.architecture.push_back(build_layer(draft));
    } catch (const ConfigError& e) {
      throw ConfigError("layer at line " + std::to_string(draft.line) + ": " + e.what());
    }
  }

  cfg.validate();
  try {
    const auto shapes = train::propagate_shapes(cfg.input, cfg.architecture);
    const auto& head = shapes.back();
    if (!head.is_capsule() || head.height != 1 || head.width != 1) {
      throw ShapeError("the last layer must produce a 1x1 capsule field, got " + head.describe());
    }
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("invalid architecture: ") + e.what());
  }
  return cfg;
}

train::TrainConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string format_config(const train::TrainConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "optimizer = " << train::to_string(c.optimizer) << '\n'
     << "learning_rate = " << c.learning_rate << '\n'
     << "beta1 = " << c.beta1 << '\n'
     << "beta2 = " << c.beta2 << '\n'
     << "momentum = " << c.momentum << '\n'
     << "adam_epsilon = " << c.adam_epsilon << '\n'
     << "epochs = " << c.epochs << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "seed = " << c.seed << '\n'
     << "newton_schulz_iters = " << c.newton_schulz_iters << '\n'
     << "train_limit = " << c.train_limit << '\n'
     << "test_limit = " << c.test_limit << '\n'
     << "input = " << c.input.channels << ' ' << c.input.height << ' ' << c.input.width << '\n';
  for (const auto& spec : c.architecture) os << "\n[layer] " << spec.describe() << '\n';
  return os.str();
}

void apply_env_overrides(train::TrainConfig& config) {
  if (const char* s = std::getenv("SCN_SEED"); s && *s) {
    config.seed = parse_number<std::uint64_t>("SCN_SEED", s);
  }
}

}  // namespace scn::app
