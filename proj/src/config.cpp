#include "qaface/config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <vector>

namespace qaface {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_list(const std::vector<double>& values) {
  std::string out;
  for (size_t k = 0; k < values.size(); ++k) {
    if (k > 0) out += ",";
    out += format_double(values[k]);
  }
  return out;
}

std::string format_list_i64(const std::vector<int64_t>& values) {
  std::string out;
  for (size_t k = 0; k < values.size(); ++k) {
    if (k > 0) out += ",";
    out += std::to_string(values[k]);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  const char* begin = text.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end != begin + text.size() || text.empty() || !std::isfinite(v))
    throw InvalidValueError(key, "'" + text + "' is not a finite number");
  return v;
}

int64_t parse_i64(const std::string& key, const std::string& text) {
  const char* begin = text.c_str();
  char* end = nullptr;
  long long v = std::strtoll(begin, &end, 10);
  if (end != begin + text.size() || text.empty())
    throw InvalidValueError(key, "'" + text + "' is not an integer");
  return v;
}

uint64_t parse_u64(const std::string& key, const std::string& text) {
  const char* begin = text.c_str();
  char* end = nullptr;
  unsigned long long v = std::strtoull(begin, &end, 10);
  if (end != begin + text.size() || text.empty() || text[0] == '-')
    throw InvalidValueError(key, "'" + text + "' is not an unsigned integer");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw InvalidValueError(key, "'" + text + "' is not a boolean (true/false)");
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream is(text);
  while (std::getline(is, part, ',')) parts.push_back(part);
  return parts;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split_commas(text)) out.push_back(parse_double(key, part));
  if (out.empty()) throw InvalidValueError(key, "empty list");
  return out;
}

std::vector<int64_t> parse_i64_list(const std::string& key, const std::string& text) {
  std::vector<int64_t> out;
  for (const auto& part : split_commas(text)) out.push_back(parse_i64(key, part));
  return out;
}

struct KeyEntry {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<KeyEntry>& registry() {
  static const std::vector<KeyEntry> keys = {
      {"seed", [](RunConfig& c, const std::string& v) { apply_seed(c, parse_u64("seed", v)); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"train.epochs",
       [](RunConfig& c, const std::string& v) { c.exp.train.epochs = parse_i64("train.epochs", v); },
       [](const RunConfig& c) { return std::to_string(c.exp.train.epochs); }},
      {"train.batch_size",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.batch_size = parse_i64("train.batch_size", v);
       },
       [](const RunConfig& c) { return std::to_string(c.exp.train.batch_size); }},
      {"train.lr_initial",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.lr.initial = parse_double("train.lr_initial", v);
       },
       [](const RunConfig& c) { return format_double(c.exp.train.lr.initial); }},
      {"train.lr_decay_factor",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.lr.decay_factor = parse_double("train.lr_decay_factor", v);
       },
       [](const RunConfig& c) { return format_double(c.exp.train.lr.decay_factor); }},
      {"train.lr_decay_epochs",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.lr.decay_epochs = parse_i64_list("train.lr_decay_epochs", v);
       },
       [](const RunConfig& c) { return format_list_i64(c.exp.train.lr.decay_epochs); }},
      {"train.sgd_momentum",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.sgd_momentum = parse_double("train.sgd_momentum", v);
       },
       [](const RunConfig& c) { return format_double(c.exp.train.sgd_momentum); }},
      {"train.weight_decay",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.weight_decay = parse_double("train.weight_decay", v);
       },
       [](const RunConfig& c) { return format_double(c.exp.train.weight_decay); }},
      {"train.train_backbone",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.train_backbone = parse_bool("train.train_backbone", v);
       },
       [](const RunConfig& c) { return c.exp.train.train_backbone ? "true" : "false"; }},
      {"backbone.hidden_dim",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.hidden_dim = parse_i64("backbone.hidden_dim", v);
       },
       [](const RunConfig& c) { return std::to_string(c.exp.train.hidden_dim); }},
      {"backbone.bias",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.backbone_bias = parse_bool("backbone.bias", v);
       },
       [](const RunConfig& c) { return c.exp.train.backbone_bias ? "true" : "false"; }},
      {"margin.scale",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.margin.scale = parse_double("margin.scale", v);
       },
       [](const RunConfig& c) { return format_double(c.exp.train.margin.scale); }},
      {"margin.multiplicative",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.margin.multiplicative = parse_double("margin.multiplicative", v);
       },
       [](const RunConfig& c) { return format_double(c.exp.train.margin.multiplicative); }},
      {"margin.additive",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.margin.additive = parse_double("margin.additive", v);
       },
       [](const RunConfig& c) { return format_double(c.exp.train.margin.additive); }},
      {"margin.cosine",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.margin.cosine = parse_double("margin.cosine", v);
       },
       [](const RunConfig& c) { return format_double(c.exp.train.margin.cosine); }},
      {"injection.mode",
       [](RunConfig& c, const std::string& v) {
         if (v == "off") c.exp.train.injection.mode = InjectionMode::off;
         else if (v == "vpl_uniform") c.exp.train.injection.mode = InjectionMode::vpl_uniform;
         else if (v == "quality_aware") c.exp.train.injection.mode = InjectionMode::quality_aware;
         else throw InvalidValueError("injection.mode", "'" + v + "' is not off/vpl_uniform/quality_aware");
       },
       [](const RunConfig& c) -> std::string {
         switch (c.exp.train.injection.mode) {
           case InjectionMode::off: return "off";
           case InjectionMode::vpl_uniform: return "vpl_uniform";
           case InjectionMode::quality_aware: return "quality_aware";
         }
         return "off";
       }},
      {"injection.tau",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.injection.tau = parse_double("injection.tau", v);
       },
       [](const RunConfig& c) { return format_double(c.exp.train.injection.tau); }},
      {"injection.lambda",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.injection.lambda = parse_double("injection.lambda", v);
       },
       [](const RunConfig& c) { return format_double(c.exp.train.injection.lambda); }},
      {"injection.start_epoch",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.injection.start_epoch = parse_i64("injection.start_epoch", v);
       },
       [](const RunConfig& c) { return std::to_string(c.exp.train.injection.start_epoch); }},
      {"injection.delta_t",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.delta_t = parse_i64("injection.delta_t", v);
       },
       [](const RunConfig& c) { return std::to_string(c.exp.train.delta_t); }},
      {"injection.in_place",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.injection.in_place = parse_bool("injection.in_place", v);
       },
       [](const RunConfig& c) { return c.exp.train.injection.in_place ? "true" : "false"; }},
      {"quality.alpha",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.ema_alpha = parse_double("quality.alpha", v);
       },
       [](const RunConfig& c) { return format_double(c.exp.train.ema_alpha); }},
      {"quality.ema_orientation",
       [](RunConfig& c, const std::string& v) {
         if (v == "batch") c.exp.train.ema_orientation = EmaOrientation::batch_weighted;
         else if (v == "history") c.exp.train.ema_orientation = EmaOrientation::history_weighted;
         else throw InvalidValueError("quality.ema_orientation", "'" + v + "' is not batch/history");
       },
       [](const RunConfig& c) {
         return c.exp.train.ema_orientation == EmaOrientation::batch_weighted ? "batch"
                                                                                  : "history";
       }},
      {"quality.stats_source",
       [](RunConfig& c, const std::string& v) {
         if (v == "momentum") c.exp.train.stats_source = StatsSource::momentum;
         else if (v == "main") c.exp.train.stats_source = StatsSource::main;
         else throw InvalidValueError("quality.stats_source", "'" + v + "' is not momentum/main");
       },
       [](const RunConfig& c) {
         return c.exp.train.stats_source == StatsSource::momentum ? "momentum" : "main";
       }},
      {"encoder.gamma",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.encoder_gamma = parse_double("encoder.gamma", v);
       },
       [](const RunConfig& c) { return format_double(c.exp.train.encoder_gamma); }},
      {"dataset.num_classes",
       [](RunConfig& c, const std::string& v) {
         c.exp.dataset.num_classes = parse_i64("dataset.num_classes", v);
       },
       [](const RunConfig& c) { return std::to_string(c.exp.dataset.num_classes); }},
      {"dataset.samples_per_class",
       [](RunConfig& c, const std::string& v) {
         c.exp.dataset.samples_per_class = parse_i64("dataset.samples_per_class", v);
       },
       [](const RunConfig& c) { return std::to_string(c.exp.dataset.samples_per_class); }},
      {"dataset.input_dim",
       [](RunConfig& c, const std::string& v) {
         c.exp.dataset.input_dim = parse_i64("dataset.input_dim", v);
       },
       [](const RunConfig& c) { return std::to_string(c.exp.dataset.input_dim); }},
      {"dataset.embedding_dim",
       [](RunConfig& c, const std::string& v) {
         c.exp.dataset.embedding_dim = parse_i64("dataset.embedding_dim", v);
       },
       [](const RunConfig& c) { return std::to_string(c.exp.dataset.embedding_dim); }},
      {"dataset.mix",
       [](RunConfig& c, const std::string& v) {
         auto list = parse_double_list("dataset.mix", v);
         if (list.size() != 3) throw InvalidValueError("dataset.mix", "needs 3 fractions");
         for (int t = 0; t < 3; ++t) c.exp.dataset.mix[static_cast<size_t>(t)] = list[static_cast<size_t>(t)];
       },
       [](const RunConfig& c) {
         return format_list({c.exp.dataset.mix[0], c.exp.dataset.mix[1], c.exp.dataset.mix[2]});
       }},
      {"dataset.angular_std",
       [](RunConfig& c, const std::string& v) {
         auto list = parse_double_list("dataset.angular_std", v);
         if (list.size() != 3) throw InvalidValueError("dataset.angular_std", "needs 3 values");
         for (int t = 0; t < 3; ++t)
           c.exp.dataset.tiers[static_cast<size_t>(t)].angular_std = list[static_cast<size_t>(t)];
       },
       [](const RunConfig& c) {
         return format_list({c.exp.dataset.tiers[0].angular_std, c.exp.dataset.tiers[1].angular_std,
                             c.exp.dataset.tiers[2].angular_std});
       }},
      {"dataset.attenuation",
       [](RunConfig& c, const std::string& v) {
         auto list = parse_double_list("dataset.attenuation", v);
         if (list.size() != 3) throw InvalidValueError("dataset.attenuation", "needs 3 values");
         for (int t = 0; t < 3; ++t)
           c.exp.dataset.tiers[static_cast<size_t>(t)].attenuation = list[static_cast<size_t>(t)];
       },
       [](const RunConfig& c) {
         return format_list({c.exp.dataset.tiers[0].attenuation, c.exp.dataset.tiers[1].attenuation,
                             c.exp.dataset.tiers[2].attenuation});
       }},
      {"dataset.distractor",
       [](RunConfig& c, const std::string& v) {
         if (v == "uniform") c.exp.dataset.distractor = DistractorMode::uniform;
         else if (v == "cluster") c.exp.dataset.distractor = DistractorMode::planted_cluster;
         else throw InvalidValueError("dataset.distractor", "'" + v + "' is not uniform/cluster");
       },
       [](const RunConfig& c) {
         return c.exp.dataset.distractor == DistractorMode::uniform ? "uniform" : "cluster";
       }},
      {"dataset.distractor_angular_std",
       [](RunConfig& c, const std::string& v) {
         c.exp.dataset.distractor_angular_std = parse_double("dataset.distractor_angular_std", v);
       },
       [](const RunConfig& c) { return format_double(c.exp.dataset.distractor_angular_std); }},
      {"dataset.antipodal",
       [](RunConfig& c, const std::string& v) {
         c.exp.dataset.antipodal_directions = parse_bool("dataset.antipodal", v);
       },
       [](const RunConfig& c) { return c.exp.dataset.antipodal_directions ? "true" : "false"; }},
      {"augment.probability",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.augment.probability = parse_double("augment.probability", v);
       },
       [](const RunConfig& c) { return format_double(c.exp.train.augment.probability); }},
      {"augment.level_min",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.augment.level_min = parse_double("augment.level_min", v);
       },
       [](const RunConfig& c) { return format_double(c.exp.train.augment.level_min); }},
      {"augment.level_max",
       [](RunConfig& c, const std::string& v) {
         c.exp.train.augment.level_max = parse_double("augment.level_max", v);
       },
       [](const RunConfig& c) { return format_double(c.exp.train.augment.level_max); }},
      {"eval.pairs",
       [](RunConfig& c, const std::string& v) { c.exp.eval_pairs = parse_i64("eval.pairs", v); },
       [](const RunConfig& c) { return std::to_string(c.exp.eval_pairs); }},
      {"eval.far_grid",
       [](RunConfig& c, const std::string& v) { c.exp.far_grid = parse_double_list("eval.far_grid", v); },
       [](const RunConfig& c) { return format_list(c.exp.far_grid); }},
  };
  return keys;
}

const KeyEntry* find_key(const std::string& name) {
  for (const auto& entry : registry())
    if (name == entry.name) return &entry;
  return nullptr;
}

std::string trim(const std::string& text) {
  size_t begin = text.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  size_t end = text.find_last_not_of(" \t\r");
  return text.substr(begin, end - begin + 1);
}

void validate_run_config(const RunConfig& config) {
  config.exp.train.validate();
  config.exp.dataset.validate();
  if (config.exp.eval_pairs < 1) throw InvalidValueError("eval.pairs", "must be >= 1");
  if (config.exp.far_grid.empty()) throw InvalidValueError("eval.far_grid", "must be nonempty");
  for (double far : config.exp.far_grid)
    if (!(far > 0.0 && far <= 1.0)) throw InvalidValueError("eval.far_grid", "levels must be in (0, 1]");
}

}  // namespace

RunConfig default_run_config() {
  RunConfig config;
  config.exp.train.injection.mode = InjectionMode::quality_aware;
  apply_seed(config, 1);
  return config;
}

void apply_seed(RunConfig& config, uint64_t seed) {
  config.seed = seed;
  config.exp.train.seed = seed;
  config.exp.dataset.seed = derive_seed(seed, "dataset");
}

RunConfig parse_config(const std::string& text) {
  RunConfig config = default_run_config();
  std::istringstream is(text);
  std::string raw_line;
  int line_no = 0;
  while (std::getline(is, raw_line)) {
    ++line_no;
    std::string line = raw_line;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(line_no, static_cast<int>(raw_line.size()), "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(line_no, 1, "empty key");
    if (value.empty()) throw ParseError(line_no, static_cast<int>(eq + 2), "empty value");
    const KeyEntry* entry = find_key(key);
    if (!entry) throw UnknownKeyError(key);
    entry->set(config, value);
    config.explicit_keys.insert(key);
  }
  validate_run_config(config);
  return config;
}

std::string canonical_config(const RunConfig& config) {
  std::string out;
  for (const auto& entry : registry()) {
    out += entry.name;
    out += " = ";
    out += entry.get(config);
    out += "\n";
  }
  return out;
}

uint64_t config_hash(const RunConfig& config) { return fnv1a64(canonical_config(config)); }

std::string run_log(const RunConfig& config) {
  std::string out;
  for (const auto& entry : registry()) {
    out += entry.name;
    out += " = ";
    out += entry.get(config);
    out += config.explicit_keys.count(entry.name) ? "  # explicit" : "  # default";
    out += "\n";
  }
  return out;
}

}  // namespace qaface
