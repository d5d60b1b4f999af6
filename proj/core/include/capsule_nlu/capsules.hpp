#pragma once

#include <optional>
#include <span>
#include <vector>

#include "capsule_nlu/rng.hpp"
#include "capsule_nlu/tape.hpp"

namespace capsnlu {

// Per-slot affine transforms turning word states into prediction vectors.
template <typename S>
struct SlotCapsParams {
  Tensor<S> w;  // [K x D_P x 2H]
  Tensor<S> b;  // [D_P x K]

  int num_slots() const { return w.dim(0); }
  int pred_dim() const { return w.dim(1); }
};

// Per-intent transforms plus the re-routing bilinear map.
template <typename S>
struct IntentCapsParams {
  Tensor<S> w;           // [L x D_L x D_P]
  Tensor<S> b;           // [D_L x L]
  Tensor<S> rerouting;   // [D_P x D_L]

  int num_intents() const { return w.dim(0); }
  int intent_dim() const { return w.dim(1); }
};

template <typename S>
SlotCapsParams<S> init_slot_caps(int num_slots, int pred_dim, int input_dim, Rng& rng);
template <typename S>
IntentCapsParams<S> init_intent_caps(int num_intents, int intent_dim, int pred_dim, Rng& rng);

// Result of one routing pass. Orientation: rows index output capsules,
// columns index inputs, so logits and agreement are [K_out x N_in] and
// each agreement column sums to 1.
template <typename S>
struct RoutingOutcome {
  Tensor<S> logits;                 // b, after the final update
  Tensor<S> agreement;              // c, as of the final iteration
  std::vector<Tensor<S>> outputs;   // v_k (or u_l), one [D x 1] per output capsule
  int iterations = 0;
};

// p_{k|t} = tanh(W_k h_t + b_k) for every slot k; one [D_P x T] matrix per
// slot. hidden is the [2H x T] encoder output.
template <typename S>
std::vector<Tensor<S>> slot_prediction_vectors(Tape<S>& tape, const SlotCapsParams<S>& params,
                                               const Tensor<S>& hidden);

// q_{l|k} = tanh(W_l v_k + b_l) for every intent l; one [D_L x K] matrix
// per intent, built from the K slot capsule outputs.
template <typename S>
std::vector<Tensor<S>> intent_prediction_vectors(Tape<S>& tape, const IntentCapsParams<S>& params,
                                                 std::span<const Tensor<S>> slot_outputs);

// Routing-by-agreement over unrolled iterations, differentiable through the
// agreement values. preds holds one [D x N_in] matrix per output capsule.
// input_mask (optional, [1 x N_in] of 0/1) removes masked inputs from every
// weighted sum; their agreement column is never read. logit_bias (optional,
// [K_out x N_in]) is added to the logits at every update -- the re-routing
// hook.
template <typename S>
RoutingOutcome<S> dynamic_routing(Tape<S>& tape, std::span<const Tensor<S>> preds, int iterations,
                                  const Tensor<S>* input_mask = nullptr,
                                  const Tensor<S>* logit_bias = nullptr);

// Second slot-routing pass from zero logits where every update gains the
// bilinear term alpha * p_{k|t}^T W_RR u_hat. u_hat (the winning intent
// activation, [D_L x 1]) is treated as a constant.
template <typename S>
RoutingOutcome<S> re_route(Tape<S>& tape, std::span<const Tensor<S>> slot_preds, int iterations,
                           const Tensor<S>& u_hat, const Tensor<S>& rerouting_w, S alpha,
                           const Tensor<S>* input_mask = nullptr);

// argmax_k c[k][t] per unmasked position, ties to the smallest slot id.
std::vector<int> slot_tags_from_agreement(std::span<const float> agreement, int num_slots,
                                          int num_positions, std::span<const uint8_t> mask = {});
std::vector<int> slot_tags_from_agreement(std::span<const double> agreement, int num_slots,
                                          int num_positions, std::span<const uint8_t> mask = {});

// argmax_l |u_l| plus all norms; ties to the smallest intent id.
template <typename S>
std::pair<int, std::vector<S>> predict_intent(std::span<const Tensor<S>> intent_outputs);

extern template struct SlotCapsParams<float>;
extern template struct SlotCapsParams<double>;
extern template struct IntentCapsParams<float>;
extern template struct IntentCapsParams<double>;
extern template struct RoutingOutcome<float>;
extern template struct RoutingOutcome<double>;
extern template SlotCapsParams<float> init_slot_caps<float>(int, int, int, Rng&);
extern template SlotCapsParams<double> init_slot_caps<double>(int, int, int, Rng&);
extern template IntentCapsParams<float> init_intent_caps<float>(int, int, int, Rng&);
extern template IntentCapsParams<double> init_intent_caps<double>(int, int, int, Rng&);
extern template std::vector<Tensor<float>> slot_prediction_vectors<float>(Tape<float>&, const SlotCapsParams<float>&, const Tensor<float>&);
extern template std::vector<Tensor<double>> slot_prediction_vectors<double>(Tape<double>&, const SlotCapsParams<double>&, const Tensor<double>&);
extern template std::vector<Tensor<float>> intent_prediction_vectors<float>(Tape<float>&, const IntentCapsParams<float>&, std::span<const Tensor<float>>);
extern template std::vector<Tensor<double>> intent_prediction_vectors<double>(Tape<double>&, const IntentCapsParams<double>&, std::span<const Tensor<double>>);
extern template RoutingOutcome<float> dynamic_routing<float>(Tape<float>&, std::span<const Tensor<float>>, int, const Tensor<float>*, const Tensor<float>*);
extern template RoutingOutcome<double> dynamic_routing<double>(Tape<double>&, std::span<const Tensor<double>>, int, const Tensor<double>*, const Tensor<double>*);
extern template RoutingOutcome<float> re_route<float>(Tape<float>&, std::span<const Tensor<float>>, int, const Tensor<float>&, const Tensor<float>&, float, const Tensor<float>*);
extern template RoutingOutcome<double> re_route<double>(Tape<double>&, std::span<const Tensor<double>>, int, const Tensor<double>&, const Tensor<double>&, double, const Tensor<double>*);
extern template std::pair<int, std::vector<float>> predict_intent<float>(std::span<const Tensor<float>>);
extern template std::pair<int, std::vector<double>> predict_intent<double>(std::span<const Tensor<double>>);

}  // namespace capsnlu
