#pragma once

#include <string>

#include "capsule_nlu/errors.hpp"

namespace capsnlu {

enum class TrainMode { kJoint, kSlotOnly, kTwoStage };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);

// Full model + training configuration. Serialized as a flat JSON object;
// unknown keys are rejected.
struct ModelConfig {
  // capsule dimensions
  int d_w = 1024;  // word embedding size
  int d_h = 512;   // LSTM hidden units per direction
  int d_p = 512;   // slot prediction-vector size
  int d_l = 128;   // intent capsule size
  int iter_slot = 2;
  int iter_intent = 2;

  // loss
  double lambda = 0.5;
  double m_plus = 0.8;
  double m_minus = 0.2;
  double alpha = 0.1;  // re-routing coefficient
  double loss_weight_slot = 1.0;

  // optimization
  double dropout = 0.2;
  double lr = 0.001;
  double rmsprop_decay = 0.9;
  double rmsprop_eps = 1e-8;
  int batch_size = 32;
  int max_epochs = 50;
  int patience = 10;
  uint64_t seed = 42;

  TrainMode mode = TrainMode::kJoint;
  bool lowercase = false;
  bool teacher_force_intent = false;

  void validate() const;
  bool has_intent_path() const { return mode != TrainMode::kSlotOnly; }
};

// Flat JSON (de)serialization. parse rejects unknown keys and validates
// ranges; every key is optional and falls back to the default above.
ModelConfig parse_model_config(const std::string& json_text);
ModelConfig load_model_config(const std::string& path);
std::string model_config_to_json(const ModelConfig& cfg);

}  // namespace capsnlu
