#include "rankprompt/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "rankprompt/errors.hpp"

namespace rankprompt {
namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got \"" + v + "\"");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got \"" + v + "\"");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got \"" + v + "\"");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_u64(key, item));
  }
  return out;
}

std::string from_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct KeySpec {
  std::string name;
  bool prompt_only;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs = [] {
    std::vector<KeySpec> k;
    auto add = [&](std::string name, bool prompt_only, auto set, auto get) {
      k.push_back({std::move(name), prompt_only, set, get});
    };
#define RP_SIZE(key, field, prompt)                                                               \
  add(key, prompt, [](RunConfig& c, const std::string& v) { c.field = to_u64(key, v); },          \
      [](const RunConfig& c) { return std::to_string(c.field); })
#define RP_REAL(key, field, prompt)                                                               \
  add(key, prompt, [](RunConfig& c, const std::string& v) { c.field = to_double(key, v); },       \
      [](const RunConfig& c) { return fmt_double(c.field); })
#define RP_BOOL(key, field, prompt)                                                               \
  add(key, prompt, [](RunConfig& c, const std::string& v) { c.field = to_bool(key, v); },         \
      [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); })

    add("method", false, [](RunConfig& c, const std::string& v) { c.model.method = parse_method(v); },
        [](const RunConfig& c) { return std::string(to_string(c.model.method)); });
    RP_SIZE("seed", seed, false);
    RP_SIZE("num_seeds", num_seeds, false);
    RP_SIZE("encoder_seed", encoder_seed, false);
    add("output_dir", false, [](RunConfig& c, const std::string& v) { c.output_dir = v; },
        [](const RunConfig& c) { return c.output_dir; });
    add("data_csv", false, [](RunConfig& c, const std::string& v) { c.data.csv_path = v; },
        [](const RunConfig& c) { return c.data.csv_path; });
    RP_SIZE("num_ranks", model.prompt.num_ranks, false);
    RP_SIZE("per_rank", data.per_rank, false);
    RP_SIZE("input_dim", model.input_dim, false);
    RP_REAL("noise_sigma", data.noise_sigma, false);
    RP_REAL("train_fraction", data.train_fraction, false);
    RP_SIZE("hidden_dim", model.hidden_dim, false);
    RP_SIZE("latent_dim", model.latent_dim, false);
    RP_SIZE("num_base_ranks", model.prompt.num_base_ranks, true);
    RP_SIZE("num_context", model.prompt.num_context, true);
    RP_SIZE("word_dim", model.prompt.word_dim, true);
    add("interpolation", true,
        [](RunConfig& c, const std::string& v) { c.model.prompt.interpolation = parse_interpolation(v); },
        [](const RunConfig& c) { return std::string(to_string(c.model.prompt.interpolation)); });
    RP_REAL("epsilon", model.prompt.epsilon, true);
    RP_BOOL("tune_rank", model.prompt.tune_rank, true);
    RP_BOOL("tune_ctx", model.prompt.tune_ctx, true);
    RP_BOOL("init_ctx", model.prompt.init_ctx, true);
    RP_SIZE("epochs", train.epochs, false);
    RP_SIZE("batch_size", train.batch_size, false);
    RP_REAL("learning_rate", train.learning_rate, false);
    RP_REAL("lr_decay_factor", train.lr_decay_factor, false);
    add("decay_epochs", false,
        [](RunConfig& c, const std::string& v) { c.train.decay_epochs = to_list("decay_epochs", v); },
        [](const RunConfig& c) { return from_list(c.train.decay_epochs); });
    RP_REAL("adam_beta1", train.adam_beta1, false);
    RP_REAL("adam_beta2", train.adam_beta2, false);
    RP_REAL("adam_eps", train.adam_eps, false);
    RP_REAL("temperature", train.temperature, false);
    RP_REAL("last_layer_lr_mult", train.last_layer_lr_mult, false);
    add("predict_rule", false, [](RunConfig& c, const std::string& v) { c.predict_rule = parse_predict_rule(v); },
        [](const RunConfig& c) { return std::string(to_string(c.predict_rule)); });
    RP_SIZE("jobs", jobs, false);
#undef RP_SIZE
#undef RP_REAL
#undef RP_BOOL
    return k;
  }();
  return specs;
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  if (num_seeds < 1) throw ConfigError("num_seeds must be >= 1");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (data.per_rank < 1) throw ConfigError("per_rank must be >= 1");
  if (!(data.noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0)) throw ConfigError("train_fraction must be in (0, 1)");
  if (model.input_dim < 1 || model.hidden_dim < 1 || model.latent_dim < 1) {
    throw ConfigError("input_dim, hidden_dim and latent_dim must be >= 1");
  }
  if (model.method == Method::OrdinalClip) {
    model.prompt.validate();
  } else if (model.method != Method::Baseline) {
    PromptConfig p = model.prompt;
    p.num_base_ranks = p.num_ranks;
    p.validate();
  } else if (model.prompt.num_ranks < 2) {
    throw ConfigError("num_ranks must be >= 2");
  }
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& k : key_specs()) out.push_back(k.name);
    return out;
  }();
  return names;
}

RunConfig parse_config(const std::string& text, bool require_output_dir) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("file.", 0) == 0 || key.rfind("metric.", 0) == 0) continue;
    const auto& specs = key_specs();
    auto it = std::find_if(specs.begin(), specs.end(), [&](const KeySpec& k) { return k.name == key; });
    if (it == specs.end()) {
      std::string valid;
      for (const auto& k : specs) valid += (valid.empty() ? "" : ", ") + k.name;
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key \"" + key + "\"; valid keys: " + valid);
    }
    it->set(cfg, value);
    seen.insert(key);
  }
  if (require_output_dir && (!seen.count("output_dir") || cfg.output_dir.empty())) {
    throw ConfigError("missing required key \"output_dir\"");
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path, bool require_output_dir) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), require_output_dir);
}

std::string render_config(const RunConfig& cfg) {
  std::string out;
  const bool prompts = cfg.model.method != Method::Baseline;
  for (const auto& k : key_specs()) {
    if (k.prompt_only && !prompts) continue;
    out += k.name + " = " + k.get(cfg) + "\n";
  }
  return out;
}

}  // namespace rankprompt
