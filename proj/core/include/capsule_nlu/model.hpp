#pragma once

#include <optional>

#include "capsule_nlu/capsules.hpp"
#include "capsule_nlu/config.hpp"
#include "capsule_nlu/corpus.hpp"
#include "capsule_nlu/encoder.hpp"
#include "capsule_nlu/grad_check.hpp"
#include "capsule_nlu/objective.hpp"

namespace capsnlu {

// Everything produced by one utterance pass. Losses are built on the same
// tape by the caller from the exposed pieces.
template <typename S>
struct ForwardResult {
  Tensor<S> hidden;                          // [2H x T]
  std::vector<Tensor<S>> slot_preds;         // K x [D_P x T]
  RoutingOutcome<S> slot_routing;            // first pass
  std::optional<RoutingOutcome<S>> slot_rerouted;
  std::optional<RoutingOutcome<S>> intent_routing;
  std::vector<Tensor<S>> intent_norm_scalars;  // L tape scalars
  std::vector<S> intent_norms;                 // plain values
  int predicted_intent = -1;

  // Re-routed agreement when the intent path ran, first-pass otherwise.
  const Tensor<S>& final_agreement() const {
    return slot_rerouted.has_value() ? slot_rerouted->agreement : slot_routing.agreement;
  }
  std::vector<int> predicted_tags() const;
};

struct ForwardOptions {
  bool training = false;        // enables dropout
  bool run_intent_path = true;  // SlotCaps only when false
  // >= 0 routes the re-routing pass toward this gold intent (teacher
  // forcing); otherwise the predicted winner is used.
  int force_intent = -1;
  Rng* dropout_rng = nullptr;   // required when training with dropout > 0
};

template <typename S>
struct CapsuleModel {
  ModelConfig config;
  Vocabulary vocab;
  LabelSchema schema;

  EncoderParams<S> encoder;
  SlotCapsParams<S> slot_caps;
  IntentCapsParams<S> intent_caps;  // undefined tensors in slot_only mode

  bool has_intent_path() const { return config.has_intent_path(); }

  // Named views over every trainable tensor, in a fixed order (checkpoint
  // and optimizer contract).
  NamedParams<S> named_params();
  // The slot path: embeddings, both LSTMs and the SlotCaps transforms --
  // the block frozen during two-stage phase 2.
  NamedParams<S> slot_path_params();
  NamedParams<S> intent_path_params();

  ForwardResult<S> forward(Tape<S>& tape, std::span<const int> token_ids,
                           const ForwardOptions& opts) const;

  // Which loss to build on top of the forward pass. kModeDefault follows
  // the configured mode; the explicit selections drive the two-stage
  // phases, whose forward semantics stay identical to joint training.
  enum class LossSelect { kModeDefault, kSlotOnly, kIntentOnly };

  // Scalar training loss for one utterance. Without an intent path the
  // slot loss reads the first-pass agreement; with it, the re-routed one.
  Tensor<S> utterance_loss(Tape<S>& tape, std::span<const int> token_ids,
                           std::span<const int> gold_tags, int gold_intent,
                           const ForwardOptions& opts,
                           LossSelect select = LossSelect::kModeDefault) const;
};

template <typename S>
CapsuleModel<S> init_model(const ModelConfig& cfg, const Vocabulary& vocab,
                           const LabelSchema& schema, Rng& rng);

extern template struct ForwardResult<float>;
extern template struct ForwardResult<double>;
extern template struct CapsuleModel<float>;
extern template struct CapsuleModel<double>;
extern template CapsuleModel<float> init_model<float>(const ModelConfig&, const Vocabulary&, const LabelSchema&, Rng&);
extern template CapsuleModel<double> init_model<double>(const ModelConfig&, const Vocabulary&, const LabelSchema&, Rng&);

}  // namespace capsnlu
