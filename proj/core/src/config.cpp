#include "capsule_nlu/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace capsnlu {

using nlohmann::json;

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kJoint: return "joint";
    case TrainMode::kSlotOnly: return "slot_only";
    case TrainMode::kTwoStage: return "two_stage";
  }
  return "joint";
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "joint") return TrainMode::kJoint;
  if (s == "slot_only") return TrainMode::kSlotOnly;
  if (s == "two_stage") return TrainMode::kTwoStage;
  throw ConfigError("unknown mode '" + s + "' (expected joint, slot_only or two_stage)");
}

void ModelConfig::validate() const {
  if (d_w < 1 || d_h < 1 || d_p < 1 || d_l < 1) throw ConfigError("dimensions must be >= 1");
  if (iter_slot < 1 || iter_intent < 1) throw ConfigError("routing iteration counts must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(m_minus >= 0.0 && m_minus < m_plus && m_plus <= 1.0)) {
    throw ConfigError("margins must satisfy 0 <= m_minus < m_plus <= 1");
  }
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
  if (loss_weight_slot < 0.0) throw ConfigError("loss_weight_slot must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(rmsprop_decay >= 0.0 && rmsprop_decay < 1.0)) throw ConfigError("rmsprop_decay must lie in [0, 1)");
  if (!(rmsprop_eps > 0.0)) throw ConfigError("rmsprop_eps must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "d_w", "d_h", "d_p", "d_l", "iter_slot", "iter_intent",
      "lambda", "m_plus", "m_minus", "alpha", "loss_weight_slot",
      "dropout", "lr", "rmsprop_decay", "rmsprop_eps",
      "batch_size", "max_epochs", "patience", "seed",
      "mode", "lowercase", "teacher_force_intent"};
  return keys;
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

}  // namespace

ModelConfig parse_model_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a flat JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");
  }

  ModelConfig cfg;
  read_if(j, "d_w", cfg.d_w);
  read_if(j, "d_h", cfg.d_h);
  read_if(j, "d_p", cfg.d_p);
  read_if(j, "d_l", cfg.d_l);
  read_if(j, "iter_slot", cfg.iter_slot);
  read_if(j, "iter_intent", cfg.iter_intent);
  read_if(j, "lambda", cfg.lambda);
  read_if(j, "m_plus", cfg.m_plus);
  read_if(j, "m_minus", cfg.m_minus);
  read_if(j, "alpha", cfg.alpha);
  read_if(j, "loss_weight_slot", cfg.loss_weight_slot);
  read_if(j, "dropout", cfg.dropout);
  read_if(j, "lr", cfg.lr);
  read_if(j, "rmsprop_decay", cfg.rmsprop_decay);
  read_if(j, "rmsprop_eps", cfg.rmsprop_eps);
  read_if(j, "batch_size", cfg.batch_size);
  read_if(j, "max_epochs", cfg.max_epochs);
  read_if(j, "patience", cfg.patience);
  read_if(j, "seed", cfg.seed);
  if (j.contains("mode")) cfg.mode = train_mode_from_string(j.at("mode").get<std::string>());
  read_if(j, "lowercase", cfg.lowercase);
  read_if(j, "teacher_force_intent", cfg.teacher_force_intent);

  cfg.validate();
  return cfg;
}

ModelConfig load_model_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_model_config(ss.str());
}

std::string model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["d_w"] = cfg.d_w;
  j["d_h"] = cfg.d_h;
  j["d_p"] = cfg.d_p;
  j["d_l"] = cfg.d_l;
  j["iter_slot"] = cfg.iter_slot;
  j["iter_intent"] = cfg.iter_intent;
  j["lambda"] = cfg.lambda;
  j["m_plus"] = cfg.m_plus;
  j["m_minus"] = cfg.m_minus;
  j["alpha"] = cfg.alpha;
  j["loss_weight_slot"] = cfg.loss_weight_slot;
  j["dropout"] = cfg.dropout;
  j["lr"] = cfg.lr;
  j["rmsprop_decay"] = cfg.rmsprop_decay;
  j["rmsprop_eps"] = cfg.rmsprop_eps;
  j["batch_size"] = cfg.batch_size;
  j["max_epochs"] = cfg.max_epochs;
  j["patience"] = cfg.patience;
  j["seed"] = cfg.seed;
  j["mode"] = to_string(cfg.mode);
  j["lowercase"] = cfg.lowercase;
  j["teacher_force_intent"] = cfg.teacher_force_intent;
  return j.dump(2);
}

}  // namespace capsnlu
