#include "bonekin/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <variant>

#include <json.hpp>

#include "bonekin/errors.hpp"

namespace bonekin {

namespace {

using FieldPtr = std::variant<int*, double*, bool*, std::string*, uint64_t*>;
using FieldMap = std::map<std::string, FieldPtr>;

FieldMap generator_fields(GeneratorConfig& g) {
  return {
      {"actors", &g.actors},
      {"videos_per_actor", &g.videos_per_actor},
      {"frames", &g.frames},
      {"length_jitter", &g.length_jitter},
      {"motion_sinusoids", &g.motion_sinusoids},
      {"motion_freq_max", &g.motion_freq_max},
      {"noise_sigma", &g.noise_sigma},
      {"p_occ", &g.p_occ},
      {"width", &g.width},
      {"height", &g.height},
      {"seed", &g.seed},
  };
}

FieldMap train_fields(TrainConfig& t) {
  return {
      {"lambda_d", &t.lambda_d},
      {"lambda_l", &t.lambda_l},
      {"lambda_j", &t.lambda_j},
      {"lambda_js", &t.lambda_js},
      {"gamma", &t.gamma},
      {"l", &t.l},
      {"batch", &t.batch},
      {"d", &t.d},
      {"s", &t.s},
      {"num_subnets", &t.num_subnets},
      {"channels", &t.channels},
      {"length_blocks", &t.length_blocks},
      {"dropout", &t.dropout},
      {"lr", &t.lr},
      {"lr_decay", &t.lr_decay},
      {"epochs", &t.epochs},
      {"steps_per_epoch", &t.steps_per_epoch},
      {"seed", &t.seed},
      {"composition", &t.composition},
      {"model", &t.model},
      {"strategy", &t.strategy},
      {"strategy_m", &t.strategy_m},
      {"causal", &t.causal},
      {"vis_fusion", &t.vis_fusion},
      {"augment", &t.augment},
      {"attention", &t.attention},
      {"val_actors", &t.val_actors},
      {"eval_stride", &t.eval_stride},
  };
}

void assign_json(const std::string& key, FieldPtr ptr, const nlohmann::json& v) {
  try {
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          *p = v.get<T>();
        },
        ptr);
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("ill-typed value for config key \"" + key + "\"");
  }
}

void assign_string(const std::string& key, FieldPtr ptr, const std::string& v) {
  try {
    std::visit(
        [&]<typename P>(P* p) {
          if constexpr (std::is_same_v<P, std::string>) {
            *p = v;
          } else if constexpr (std::is_same_v<P, bool>) {
            if (v == "true" || v == "1") *p = true;
            else if (v == "false" || v == "0") *p = false;
            else throw ConfigError("ill-typed value for config key \"" + key + "\"");
          } else if constexpr (std::is_same_v<P, int>) {
            *p = std::stoi(v);
          } else if constexpr (std::is_same_v<P, uint64_t>) {
            *p = std::stoull(v);
          } else {
            *p = std::stod(v);
          }
        },
        ptr);
  } catch (const std::logic_error&) {
    throw ConfigError("ill-typed value for config key \"" + key + "\"");
  }
}

void apply_section(const std::string& section, FieldMap fields,
                   const nlohmann::json& obj) {
  if (!obj.is_object())
    throw ConfigError("config section \"" + section + "\" must be an object");
  for (const auto& [key, value] : obj.items()) {
    auto it = fields.find(key);
    if (it == fields.end())
      throw ConfigError("unknown config key \"" + section + "." + key + "\"");
    assign_json(section + "." + key, it->second, value);
  }
}

nlohmann::json section_to_json(FieldMap fields) {
  nlohmann::json out;
  for (const auto& [key, ptr] : fields)
    std::visit([&](auto* p) { out[key] = *p; }, ptr);
  return out;
}

}  // namespace

CliConfig load_config(const std::string& path,
                      const std::map<std::string, std::string>& overrides) {
  CliConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(text);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
      }
      for (const auto& [section, body] : j.items()) {
        if (section == "generator")
          apply_section("generator", generator_fields(cfg.generator), body);
        else if (section == "train")
          apply_section("train", train_fields(cfg.train), body);
        else
          throw ConfigError("unknown config section \"" + section + "\"");
      }
    }
  }
  for (const auto& [key, value] : overrides) {
    const auto dot = key.find('.');
    if (dot == std::string::npos)
      throw ConfigError("override key must be section.field: " + key);
    const std::string section = key.substr(0, dot);
    const std::string field = key.substr(dot + 1);
    FieldMap fields;
    if (section == "generator") fields = generator_fields(cfg.generator);
    else if (section == "train") fields = train_fields(cfg.train);
    else throw ConfigError("unknown config section \"" + section + "\"");
    auto it = fields.find(field);
    if (it == fields.end())
      throw ConfigError("unknown config key \"" + key + "\"");
    assign_string(key, it->second, value);
  }
  return cfg;
}

std::string config_to_json(const CliConfig& cfg) {
  CliConfig copy = cfg;
  nlohmann::json out;
  out["generator"] = section_to_json(generator_fields(copy.generator));
  out["train"] = section_to_json(train_fields(copy.train));
  return out.dump(2);
}

std::string config_hash(const TrainConfig& cfg) {
  TrainConfig copy = cfg;
  const std::string text = section_to_json(train_fields(copy)).dump();
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

}  // namespace bonekin
