#include "tdm/config.hpp"

#include <fstream>

#include <json.hpp>

namespace tdm {

using nlohmann::json;

namespace {

json defaults_json() {
  return json{
      {"data", {{"dataset", ""}, {"skeleton", ""}}},
      {"model",
       {{"num_layers", 2},
        {"num_heads", 4},
        {"model_dim", 64},
        {"ffn_dim", 128},
        {"max_positions", 512},
        {"dropout_rate", 0.0},
        {"cross_attention", true},
        {"condition_bias", true}}},
      {"schedule", {{"kind", "cosine"}, {"steps", 1000}, {"offset", 0.008}}},
      {"sampler", {{"iterations", 5}, {"noise_mode", "fresh"}, {"seed", 1234}}},
      {"train",
       {{"learning_rate", 1e-3},
        {"beta1", 0.9},
        {"beta2", 0.999},
        {"adam_epsilon", 1e-8},
        {"batch_size", 8},
        {"max_steps", 1000},
        {"seed", 1},
        {"checkpoint_interval", 500},
        {"log_interval", 10},
        {"lambda", 0.1},
        {"grad_clip", 1.0},
        {"target_joint_loss", 0.0}}},
      {"out_dir", "runs/default"},
  };
}

void merge_into(json& base, const json& user, const std::string& prefix) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key()))
      throw ConfigError("unknown config field '" + path + "'");
    if (base[it.key()].is_object()) {
      if (!it.value().is_object())
        throw ConfigError("config field '" + path + "' must be an object");
      merge_into(base[it.key()], it.value(), path);
    } else {
      base[it.key()] = it.value();
    }
  }
}

void apply_override(json& base, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + spec + "' is not of the form path.to.field=value");
  const std::string path = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);

  json* cursor = &base;
  size_t start = 0;
  std::vector<std::string> parts;
  while (true) {
    const size_t dot = path.find('.', start);
    parts.push_back(path.substr(start, dot == std::string::npos ? dot : dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!cursor->contains(parts[i]) || !(*cursor)[parts[i]].is_object())
      throw ConfigError("override '" + spec + "': unknown section '" + parts[i] + "'");
    cursor = &(*cursor)[parts[i]];
  }
  const std::string& leaf = parts.back();
  if (!cursor->contains(leaf))
    throw ConfigError("override '" + spec + "': unknown field '" + leaf + "'");
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // bare strings are taken literally
  }
  if ((*cursor)[leaf].is_object())
    throw ConfigError("override '" + spec + "' targets a section, not a field");
  (*cursor)[leaf] = value;
}

template <class T>
T field(const json& j, const std::string& section, const char* name) {
  try {
    return j.at(name).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config field '" + section + "." + name + "': " + e.what());
  }
}

RunConfig from_json(const json& j) {
  RunConfig cfg;
  const json& data = j.at("data");
  cfg.dataset_path = field<std::string>(data, "data", "dataset");
  cfg.skeleton_path = field<std::string>(data, "data", "skeleton");

  const json& m = j.at("model");
  cfg.model.num_layers = field<int>(m, "model", "num_layers");
  cfg.model.num_heads = field<int>(m, "model", "num_heads");
  cfg.model.model_dim = field<int>(m, "model", "model_dim");
  cfg.model.ffn_dim = field<int>(m, "model", "ffn_dim");
  cfg.model.max_positions = field<int>(m, "model", "max_positions");
  cfg.model.dropout_rate = field<double>(m, "model", "dropout_rate");
  cfg.model.cross_attention = field<bool>(m, "model", "cross_attention");
  cfg.model.condition_bias = field<bool>(m, "model", "condition_bias");

  const json& s = j.at("schedule");
  cfg.schedule_kind = field<std::string>(s, "schedule", "kind");
  cfg.schedule_steps = field<int>(s, "schedule", "steps");
  cfg.schedule_offset = field<double>(s, "schedule", "offset");

  const json& sa = j.at("sampler");
  cfg.sampler.iterations = field<int>(sa, "sampler", "iterations");
  cfg.sampler.noise_mode = noise_mode_from_string(field<std::string>(sa, "sampler", "noise_mode"));
  cfg.sampler_seed = field<std::uint64_t>(sa, "sampler", "seed");

  const json& t = j.at("train");
  cfg.train.learning_rate = field<double>(t, "train", "learning_rate");
  cfg.train.beta1 = field<double>(t, "train", "beta1");
  cfg.train.beta2 = field<double>(t, "train", "beta2");
  cfg.train.adam_epsilon = field<double>(t, "train", "adam_epsilon");
  cfg.train.batch_size = field<int>(t, "train", "batch_size");
  cfg.train.max_steps = field<long>(t, "train", "max_steps");
  cfg.train.seed = field<std::uint64_t>(t, "train", "seed");
  cfg.train.checkpoint_interval = field<long>(t, "train", "checkpoint_interval");
  cfg.train.log_interval = field<long>(t, "train", "log_interval");
  cfg.train.lambda = field<double>(t, "train", "lambda");
  cfg.train.grad_clip = field<double>(t, "train", "grad_clip");
  cfg.train.target_joint_loss = field<double>(t, "train", "target_joint_loss");

  cfg.out_dir = field<std::string>(j, "(root)", "out_dir");
  return cfg;
}

RunConfig build(json merged, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) apply_override(merged, o);
  RunConfig cfg = from_json(merged);
  cfg.validate();
  return cfg;
}

}  // namespace

void RunConfig::validate() const {
  try {
    model.validate();
  } catch (const DenoiserError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  if (schedule_kind != "cosine")
    throw ConfigError("schedule.kind '" + schedule_kind +
                      "' is reserved but not implemented (only 'cosine' is)");
  if (schedule_steps < 1) throw ConfigError("schedule.steps must be >= 1");
  if (schedule_offset <= 0.0) throw ConfigError("schedule.offset must be positive");
  if (sampler.iterations < 1 || sampler.iterations > schedule_steps)
    throw ConfigError("sampler.iterations must lie in [1, schedule.steps]");
  try {
    train.validate();
  } catch (const TrainingError& e) {
    throw ConfigError(e.what());
  }
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

SkeletonTopology RunConfig::load_topology() const {
  return skeleton_path.empty() ? SkeletonTopology::toy_upper_body()
                               : SkeletonTopology::load(skeleton_path);
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json user;
  try {
    user = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  json merged = defaults_json();
  merge_into(merged, user, "");
  return build(std::move(merged), overrides);
}

RunConfig default_run_config(const std::vector<std::string>& overrides) {
  return build(defaults_json(), overrides);
}

}  // namespace tdm
