// SPDX-License-Identifier: Apache-2.0
#include "arcl/run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "arcl/errors.hpp"

namespace arcl {

const char* run_mode_name(RunMode m) noexcept {
  switch (m) {
    case RunMode::seq_ft: return "seq_ft";
    case RunMode::arcl: return "arcl";
    case RunMode::both: return "both";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string text = trim(raw);
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc() || ptr != last) {
    throw ConfigError(key, "expected a number, got '" + raw + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string t = trim(raw);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(key, "expected true or false, got '" + raw + "'");
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define ARCL_INT(section, key, path)                                                         \
  Field {                                                                                    \
    section, key, [](RunConfig& c, const std::string& k, const std::string& v) {             \
      c.path = parse_number<int>(k, v); },                                                   \
        [](const RunConfig& c) { return std::to_string(c.path); }                            \
  }
#define ARCL_DOUBLE(section, key, path)                                                      \
  Field {                                                                                    \
    section, key, [](RunConfig& c, const std::string& k, const std::string& v) {             \
      c.path = parse_number<double>(k, v); },                                                \
        [](const RunConfig& c) { return format_double(c.path); }                             \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      ARCL_INT("model", "image_side", experiment.model.image_side),
      ARCL_INT("model", "patch_side", experiment.model.patch_side),
      ARCL_INT("model", "embed_dim", experiment.model.embed_dim),
      ARCL_INT("model", "depth", experiment.model.depth),
      ARCL_INT("model", "heads", experiment.model.heads),
      ARCL_INT("model", "ffn_hidden", experiment.model.ffn_hidden),
      ARCL_INT("model", "classes_per_task", experiment.model.classes_per_task),
      ARCL_INT("model", "tasks", experiment.model.tasks),
      ARCL_DOUBLE("model", "init_std", experiment.model.init_std),
      ARCL_DOUBLE("model", "norm_eps", experiment.model.norm_eps),

      ARCL_INT("data", "train_per_class", experiment.stream.train_per_class),
      ARCL_INT("data", "test_per_class", experiment.stream.test_per_class),
      ARCL_DOUBLE("data", "noise_std", experiment.stream.noise_std),
      ARCL_DOUBLE("data", "glyph_amplitude", experiment.stream.glyph_amplitude),
      ARCL_DOUBLE("data", "amplitude_jitter", experiment.stream.amplitude_jitter),
      ARCL_INT("data", "cells_per_class", experiment.stream.cells_per_class),
      ARCL_INT("data", "distractors", experiment.stream.distractors),

      ARCL_INT("train", "epochs", experiment.harness.epochs),
      ARCL_INT("train", "batch_size", experiment.harness.batch_size),
      ARCL_INT("train", "drift_probe_per_class", experiment.harness.drift_probe_per_class),
      ARCL_INT("train", "threads", experiment.harness.threads),

      ARCL_DOUBLE("optim", "lr_projection", experiment.optim.lr_projection),
      ARCL_DOUBLE("optim", "lr_classifier", experiment.optim.lr_classifier),
      ARCL_DOUBLE("optim", "beta1", experiment.optim.adam.beta1),
      ARCL_DOUBLE("optim", "beta2", experiment.optim.adam.beta2),
      ARCL_DOUBLE("optim", "adam_eps", experiment.optim.adam.eps),
      ARCL_DOUBLE("optim", "eps_ratio", experiment.optim.ratio.eps_ratio),
      ARCL_DOUBLE("optim", "r_max", experiment.optim.ratio.r_max),
      Field{"optim", "masked_moments",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.experiment.optim.masked_moments = parse_bool(k, v);
            },
            [](const RunConfig& c) { return std::string(c.experiment.optim.masked_moments ? "true" : "false"); }},

      Field{"run", "seed",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.seed = parse_number<std::uint64_t>(k, v);
            },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      Field{"run", "mode",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              const std::string t = trim(v);
              if (t == "both") {
                c.mode = RunMode::both;
              } else {
                try {
                  c.mode = parse_mode(t) == Mode::arcl ? RunMode::arcl : RunMode::seq_ft;
                } catch (const ConfigError&) {
                  throw ConfigError(k, "expected arcl, seq_ft or both, got '" + v + "'");
                }
              }
            },
            [](const RunConfig& c) { return std::string(run_mode_name(c.mode)); }},
      Field{"run", "out",
            [](RunConfig& c, const std::string&, const std::string& v) { c.out = trim(v); },
            [](const RunConfig& c) { return c.out; }},
  };
  return all;
}

#undef ARCL_INT
#undef ARCL_DOUBLE

const Field& find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (key == f.key) return f;
  }
  throw ConfigError(key, "unknown configuration key");
}

}  // namespace

void RunConfig::validate() const { experiment.validate(); }

const std::vector<std::pair<std::string, std::string>>& config_keys() {
  static const auto keys = [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const Field& f : fields()) out.emplace_back(f.section, f.key);
    return out;
  }();
  return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  find_field(key).set(config, key, value);
}

std::string get_config_value(const RunConfig& config, const std::string& key) {
  return find_field(key).get(config);
}

RunConfig parse_run_config(std::istream& ini) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(ini, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config", std::string("malformed INI: ") + e.what());
  }
  RunConfig config;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(section, "keys must live inside a [section]");
    }
    for (const auto& [key, value] : body) {
      const Field& f = find_field(key);
      if (section != f.section) {
        throw ConfigError(key, "belongs in section [" + std::string(f.section) + "], found in [" + section + "]");
      }
      f.set(config, key, value.data());
    }
  }
  return config;
}

RunConfig load_run_config(const std::string& source, const Overrides& overrides) {
  RunConfig config;
  if (source != "default") {
    std::ifstream in(source);
    if (!in) throw ConfigError("config", "cannot read config file '" + source + "'");
    config = parse_run_config(in);
  }
  for (const auto& [key, value] : overrides) set_config_value(config, key, value);
  config.validate();
  return config;
}

std::string to_ini(const RunConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const Field& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(config) << '\n';
  }
  return out.str();
}

}  // namespace arcl
