#pragma once

#include <optional>
#include <string>

#include "capsule_nlu/evaluator.hpp"
#include "capsule_nlu/model.hpp"
#include "capsule_nlu/optimizer.hpp"

namespace capsnlu {

struct EpochRecord {
  int epoch = 0;
  int phase = 1;  // two-stage training reports its phase; 1 otherwise
  double train_loss = 0.0;
  double valid_slot_f1 = 0.0;
  std::optional<double> valid_intent_acc;   // absent in slot-only training
  std::optional<double> valid_overall_acc;
  bool improved = false;

  std::string to_json() const;
};

struct TrainResult {
  CapsuleModel<float> model;  // best checkpoint by the selection metric
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  MetricsReport best_valid;
  // FNV-1a over the slot-path parameter bytes at the start and end of
  // two-stage phase 2; equal by construction (the block is frozen).
  uint64_t slot_path_hash_phase2_start = 0;
  uint64_t slot_path_hash_phase2_end = 0;
};

// Runs the full optimization loop: seeded init, shuffled mini-batches,
// RMSProp with global-norm clipping at 5.0, per-epoch validation, best
// checkpoint by validation overall accuracy (slot F1 when there is no
// intent path), early stop after `patience` epochs without improvement.
// two_stage first minimizes the slot loss, then freezes the slot path and
// minimizes the intent loss.
TrainResult train(const ModelConfig& cfg, std::span<const AnnotatedUtterance> train_utts,
                  std::span<const AnnotatedUtterance> valid_utts);

// Convenience wrapper: loads train/valid splits from data_dir, trains, and
// when out_path is non-empty writes the checkpoint there and the per-epoch
// metrics log beside it (<out_path>.log, one JSON object per line).
TrainResult train_from_dir(const ModelConfig& cfg, const std::string& data_dir,
                           const std::string& out_path);

uint64_t fnv1a_hash_params(NamedParams<float>& params);

}  // namespace capsnlu
