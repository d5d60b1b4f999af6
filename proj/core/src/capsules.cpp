#include "capsule_nlu/capsules.hpp"

#include "capsule_nlu/encoder.hpp"

namespace capsnlu {

template <typename S>
SlotCapsParams<S> init_slot_caps(int num_slots, int pred_dim, int input_dim, Rng& rng) {
  SlotCapsParams<S> p;
  p.w = Tensor<S>::zeros({num_slots, pred_dim, input_dim}, /*needs_grad=*/true);
  const double bound = std::sqrt(6.0 / (pred_dim + input_dim));
  for (S& v : p.w.value()) v = static_cast<S>(rng.uniform(-bound, bound));
  p.b = Tensor<S>::zeros({pred_dim, num_slots}, /*needs_grad=*/true);
  return p;
}

template <typename S>
IntentCapsParams<S> init_intent_caps(int num_intents, int intent_dim, int pred_dim, Rng& rng) {
  IntentCapsParams<S> p;
  p.w = Tensor<S>::zeros({num_intents, intent_dim, pred_dim}, /*needs_grad=*/true);
  const double bound = std::sqrt(6.0 / (intent_dim + pred_dim));
  for (S& v : p.w.value()) v = static_cast<S>(rng.uniform(-bound, bound));
  p.b = Tensor<S>::zeros({intent_dim, num_intents}, /*needs_grad=*/true);
  p.rerouting = xavier_init<S>({pred_dim, intent_dim}, pred_dim, intent_dim, rng);
  return p;
}

template <typename S>
std::vector<Tensor<S>> slot_prediction_vectors(Tape<S>& tape, const SlotCapsParams<S>& params,
                                               const Tensor<S>& hidden) {
  const int num_slots = params.num_slots();
  std::vector<Tensor<S>> preds;
  preds.reserve(static_cast<size_t>(num_slots));
  for (int k = 0; k < num_slots; ++k) {
    Tensor<S> wk = tape.select_matrix(params.w, k);
    Tensor<S> bk = tape.select_col(params.b, k);
    preds.push_back(tape.tanh(tape.add_col_broadcast(tape.matmul(wk, hidden), bk)));
  }
  return preds;
}

template <typename S>
std::vector<Tensor<S>> intent_prediction_vectors(Tape<S>& tape, const IntentCapsParams<S>& params,
                                                 std::span<const Tensor<S>> slot_outputs) {
  Tensor<S> v_mat = tape.concat_cols(slot_outputs);  // [D_P x K]
  const int num_intents = params.num_intents();
  std::vector<Tensor<S>> preds;
  preds.reserve(static_cast<size_t>(num_intents));
  for (int l = 0; l < num_intents; ++l) {
    Tensor<S> wl = tape.select_matrix(params.w, l);
    Tensor<S> bl = tape.select_col(params.b, l);
    preds.push_back(tape.tanh(tape.add_col_broadcast(tape.matmul(wl, v_mat), bl)));
  }
  return preds;
}

template <typename S>
RoutingOutcome<S> dynamic_routing(Tape<S>& tape, std::span<const Tensor<S>> preds, int iterations,
                                  const Tensor<S>* input_mask, const Tensor<S>* logit_bias) {
  if (iterations < 1) throw ConfigError("dynamic_routing: iterations must be >= 1");
  if (preds.empty()) throw DimensionError("dynamic_routing: no output capsules");
  const int k_out = static_cast<int>(preds.size());
  const int n_in = preds[0].dim(1);
  for (const auto& p : preds) {
    if (p.rank() != 2 || p.dim(1) != n_in || p.dim(0) != preds[0].dim(0)) {
      throw DimensionError("dynamic_routing: prediction matrices must share one [D x N] shape");
    }
  }
  if (input_mask != nullptr) {
    if (input_mask->rank() != 2 || input_mask->dim(0) != 1 || input_mask->dim(1) != n_in) {
      throw DimensionError("dynamic_routing: input mask must be [1 x N]");
    }
    S total = S(0);
    for (S m : input_mask->value()) total += m;
    if (!(total > S(0))) throw ConfigError("dynamic_routing: every input is masked");
  }

  RoutingOutcome<S> outcome;
  outcome.iterations = iterations;
  Tensor<S> logits = Tensor<S>::zeros({k_out, n_in});

  for (int iter = 0; iter < iterations; ++iter) {
    Tensor<S> agreement = tape.softmax(logits, /*axis=*/0);  // per input column over outputs
    std::vector<Tensor<S>> outputs(static_cast<size_t>(k_out));
    std::vector<Tensor<S>> delta_rows(static_cast<size_t>(k_out));
    for (int k = 0; k < k_out; ++k) {
      Tensor<S> weights = tape.select_row(agreement, k);  // [1 x N]
      if (input_mask != nullptr) weights = tape.mul(weights, *input_mask);
      Tensor<S> s_k = tape.matmul(preds[static_cast<size_t>(k)], weights, false, true);  // [D x 1]
      Tensor<S> v_k = tape.squash(s_k);
      outputs[static_cast<size_t>(k)] = v_k;
      // agreement update row: (p_{k|t} . v_k) for every input t
      delta_rows[static_cast<size_t>(k)] = tape.matmul(v_k, preds[static_cast<size_t>(k)], true, false);
    }
    Tensor<S> delta = tape.concat_rows(std::span<const Tensor<S>>(delta_rows));
    logits = tape.add(logits, delta);
    if (logit_bias != nullptr) logits = tape.add(logits, *logit_bias);

    outcome.agreement = agreement;
    outcome.outputs = std::move(outputs);
  }
  outcome.logits = logits;
  return outcome;
}

template <typename S>
RoutingOutcome<S> re_route(Tape<S>& tape, std::span<const Tensor<S>> slot_preds, int iterations,
                           const Tensor<S>& u_hat, const Tensor<S>& rerouting_w, S alpha,
                           const Tensor<S>* input_mask) {
  // The bilinear term does not depend on the routing state, so it is built
  // once and added at every logit update.
  std::vector<Tensor<S>> bias_rows;
  bias_rows.reserve(slot_preds.size());
  Tensor<S> projected = tape.matmul(rerouting_w, u_hat);  // [D_P x 1]
  for (const auto& p_k : slot_preds) {
    Tensor<S> row = tape.matmul(projected, p_k, true, false);  // [1 x T]
    bias_rows.push_back(tape.scale_add(row, alpha, S(0)));
  }
  Tensor<S> bias = tape.concat_rows(std::span<const Tensor<S>>(bias_rows));  // [K x T]
  return dynamic_routing(tape, slot_preds, iterations, input_mask, &bias);
}

namespace {

template <typename S>
std::vector<int> tags_from_agreement_impl(std::span<const S> agreement, int num_slots,
                                          int num_positions, std::span<const uint8_t> mask) {
  std::vector<int> tags;
  for (int t = 0; t < num_positions; ++t) {
    if (!mask.empty() && mask[static_cast<size_t>(t)] == 0) continue;
    int best = 0;
    S best_val = agreement[static_cast<size_t>(t)];
    for (int k = 1; k < num_slots; ++k) {
      const S v = agreement[static_cast<size_t>(k) * num_positions + t];
      if (v > best_val) {
        best_val = v;
        best = k;
      }
    }
    tags.push_back(best);
  }
  return tags;
}

}  // namespace

std::vector<int> slot_tags_from_agreement(std::span<const float> agreement, int num_slots,
                                          int num_positions, std::span<const uint8_t> mask) {
  return tags_from_agreement_impl<float>(agreement, num_slots, num_positions, mask);
}

std::vector<int> slot_tags_from_agreement(std::span<const double> agreement, int num_slots,
                                          int num_positions, std::span<const uint8_t> mask) {
  return tags_from_agreement_impl<double>(agreement, num_slots, num_positions, mask);
}

template <typename S>
std::pair<int, std::vector<S>> predict_intent(std::span<const Tensor<S>> intent_outputs) {
  std::vector<S> norms;
  norms.reserve(intent_outputs.size());
  for (const auto& u : intent_outputs) {
    S ss = S(0);
    for (S v : u.value()) ss += v * v;
    norms.push_back(std::sqrt(ss));
  }
  int best = 0;
  for (size_t l = 1; l < norms.size(); ++l) {
    if (norms[l] > norms[static_cast<size_t>(best)]) best = static_cast<int>(l);
  }
  return {best, std::move(norms)};
}

template struct SlotCapsParams<float>;
template struct SlotCapsParams<double>;
template struct IntentCapsParams<float>;
template struct IntentCapsParams<double>;
template struct RoutingOutcome<float>;
template struct RoutingOutcome<double>;
template SlotCapsParams<float> init_slot_caps<float>(int, int, int, Rng&);
template SlotCapsParams<double> init_slot_caps<double>(int, int, int, Rng&);
template IntentCapsParams<float> init_intent_caps<float>(int, int, int, Rng&);
template IntentCapsParams<double> init_intent_caps<double>(int, int, int, Rng&);
template std::vector<Tensor<float>> slot_prediction_vectors<float>(Tape<float>&, const SlotCapsParams<float>&, const Tensor<float>&);
template std::vector<Tensor<double>> slot_prediction_vectors<double>(Tape<double>&, const SlotCapsParams<double>&, const Tensor<double>&);
template std::vector<Tensor<float>> intent_prediction_vectors<float>(Tape<float>&, const IntentCapsParams<float>&, std::span<const Tensor<float>>);
template std::vector<Tensor<double>> intent_prediction_vectors<double>(Tape<double>&, const IntentCapsParams<double>&, std::span<const Tensor<double>>);
template RoutingOutcome<float> dynamic_routing<float>(Tape<float>&, std::span<const Tensor<float>>, int, const Tensor<float>*, const Tensor<float>*);
template RoutingOutcome<double> dynamic_routing<double>(Tape<double>&, std::span<const Tensor<double>>, int, const Tensor<double>*, const Tensor<double>*);
template RoutingOutcome<float> re_route<float>(Tape<float>&, std::span<const Tensor<float>>, int, const Tensor<float>&, const Tensor<float>&, float, const Tensor<float>*);
template RoutingOutcome<double> re_route<double>(Tape<double>&, std::span<const Tensor<double>>, int, const Tensor<double>&, const Tensor<double>&, double, const Tensor<double>*);
template std::pair<int, std::vector<float>> predict_intent<float>(std::span<const Tensor<float>>);
template std::pair<int, std::vector<double>> predict_intent<double>(std::span<const Tensor<double>>);

}  // namespace capsnlu
