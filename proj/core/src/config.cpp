#include "vmamba/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json_io.hpp"

namespace vmamba {

namespace {

using nlohmann::json;
using Setter = std::function<void(const json&)>;

void apply(const json& j, const std::string& section, const std::map<std::string, Setter>& setters) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown key '" + key + "' in config section '" + section + "'");
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + section + "." + key + "': " + e.what());
    } catch (const ContractError& e) {
      throw ConfigError("bad value for '" + section + "." + key + "': " + e.what());
    }
  }
}

template <typename V>
Setter set(V& field) {
  return [&field](const json& v) { field = v.get<V>(); };
}

train::TrainConfig train_from_json(const json& j, train::TrainConfig c) {
  apply(j, "train",
        {{"lr", set(c.lr)},
         {"beta1", set(c.beta1)},
         {"beta2", set(c.beta2)},
         {"adam_eps", set(c.adam_eps)},
         {"weight_decay", set(c.weight_decay)},
         {"warmup_epochs", set(c.warmup_epochs)},
         {"epochs", set(c.epochs)},
         {"batch_size", set(c.batch_size)},
         {"label_smoothing", set(c.label_smoothing)},
         {"seed", set(c.seed)},
         {"threads", set(c.threads)}});
  return c;
}

train::DatasetConfig data_from_json(const json& j, train::DatasetConfig c) {
  apply(j, "data",
        {{"train_samples", set(c.train_samples)},
         {"eval_samples", set(c.eval_samples)},
         {"frames", set(c.frames)},
         {"size", set(c.size)},
         {"bar", set(c.bar)},
         {"noise_std", set(c.noise_std)},
         {"seed", set(c.seed)}});
  return c;
}

json train_to_json(const train::TrainConfig& c) {
  return {{"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"weight_decay", c.weight_decay},
          {"warmup_epochs", c.warmup_epochs},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"label_smoothing", c.label_smoothing},
          {"seed", c.seed},
          {"threads", c.threads}};
}

json data_to_json(const train::DatasetConfig& c) {
  return {{"train_samples", c.train_samples}, {"eval_samples", c.eval_samples}, {"frames", c.frames},
          {"size", c.size},                   {"bar", c.bar},                   {"noise_std", c.noise_std},
          {"seed", c.seed}};
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace

namespace detail {

json model_config_to_json(const model::ModelConfig& c) {
  json j;
  j["depth"] = c.depth;
  j["dim"] = c.dim;
  j["state_size"] = c.state_size;
  j["dt_rank"] = c.resolved_dt_rank();
  j["conv_kernel"] = c.conv_kernel;
  j["tubelet"] = {c.tubelet.st, c.tubelet.sh, c.tubelet.sw};
  j["channels"] = c.channels;
  j["frames"] = c.frames;
  j["height"] = c.height;
  j["width"] = c.width;
  j["num_classes"] = c.num_classes;
  j["pe_mode"] = video::to_string(c.pe_mode);
  j["pe_init"] = video::to_string(c.pe_init);
  j["backward"] = order::to_string(c.backward);
  j["class_token"] = c.class_token;
  j["discretization"] = c.discretization == ssm::Discretization::kExactZoh ? "exact" : "simplified";
  return j;
}

model::ModelConfig model_config_from_json(const json& j, model::ModelConfig c) {
  apply(j, "model",
        {{"depth", set(c.depth)},
         {"dim", set(c.dim)},
         {"state_size", set(c.state_size)},
         {"dt_rank", set(c.dt_rank)},
         {"conv_kernel", set(c.conv_kernel)},
         {"tubelet",
          [&c](const json& v) {
            const auto t = v.get<std::vector<std::size_t>>();
            if (t.size() != 3) throw ContractError("tubelet must list [st, sh, sw]");
            c.tubelet = {t[0], t[1], t[2]};
          }},
         {"channels", set(c.channels)},
         {"frames", set(c.frames)},
         {"height", set(c.height)},
         {"width", set(c.width)},
         {"num_classes", set(c.num_classes)},
         {"pe_mode", [&c](const json& v) { c.pe_mode = video::parse_pe_mode(v.get<std::string>()); }},
         {"pe_init", [&c](const json& v) { c.pe_init = video::parse_pe_init(v.get<std::string>()); }},
         {"backward", [&c](const json& v) { c.backward = order::parse_backward_strategy(v.get<std::string>()); }},
         {"class_token", set(c.class_token)},
         {"discretization", [&c](const json& v) {
            const auto s = v.get<std::string>();
            if (s == "exact") {
              c.discretization = ssm::Discretization::kExactZoh;
            } else if (s == "simplified") {
              c.discretization = ssm::Discretization::kSimplified;
            } else {
              throw ContractError("discretization must be 'exact' or 'simplified'");
            }
          }}});
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid model config: ") + e.what());
  }
  return c;
}

}  // namespace detail

RunConfig parse_run_config(const std::string& json_text) {
  const json j = parse_text(json_text);
  if (!j.is_object()) throw ConfigError("config root must be an object");
  RunConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "model") {
      cfg.model = detail::model_config_from_json(value, cfg.model);
    } else if (key == "train") {
      cfg.train = train_from_json(value, cfg.train);
    } else if (key == "data") {
      cfg.data = data_from_json(value, cfg.data);
    } else {
      throw ConfigError("unknown top-level config key '" + key + "'");
    }
  }
  try {
    cfg.train.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("invalid train config: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string to_json(const RunConfig& cfg, int indent) {
  json j;
  j["model"] = detail::model_config_to_json(cfg.model);
  j["train"] = train_to_json(cfg.train);
  j["data"] = data_to_json(cfg.data);
  return j.dump(indent);
}

std::string to_json(const model::ModelConfig& cfg, int indent) {
  return detail::model_config_to_json(cfg).dump(indent);
}

model::ModelConfig parse_model_config(const std::string& json_text) {
  return detail::model_config_from_json(parse_text(json_text), model::ModelConfig{});
}

}  // namespace vmamba
