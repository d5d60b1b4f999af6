#include "capsule_nlu/model.hpp"

namespace capsnlu {

template <typename S>
std::vector<int> ForwardResult<S>::predicted_tags() const {
  const Tensor<S>& c = final_agreement();
  return slot_tags_from_agreement(std::span<const S>(c.value()), c.dim(0), c.dim(1));
}

template <typename S>
NamedParams<S> CapsuleModel<S>::slot_path_params() {
  return {
      {"embedding", encoder.embedding},
      {"lstm_fw.w_x", encoder.fw.w_x}, {"lstm_fw.w_h", encoder.fw.w_h}, {"lstm_fw.b", encoder.fw.b},
      {"lstm_bw.w_x", encoder.bw.w_x}, {"lstm_bw.w_h", encoder.bw.w_h}, {"lstm_bw.b", encoder.bw.b},
      {"slot.w", slot_caps.w}, {"slot.b", slot_caps.b},
  };
}

template <typename S>
NamedParams<S> CapsuleModel<S>::intent_path_params() {
  if (!has_intent_path()) return {};
  return {
      {"intent.w", intent_caps.w},
      {"intent.b", intent_caps.b},
      {"reroute.w", intent_caps.rerouting},
  };
}

template <typename S>
NamedParams<S> CapsuleModel<S>::named_params() {
  NamedParams<S> all = slot_path_params();
  for (auto& p : intent_path_params()) all.push_back(std::move(p));
  return all;
}

template <typename S>
ForwardResult<S> CapsuleModel<S>::forward(Tape<S>& tape, std::span<const int> token_ids,
                                          const ForwardOptions& opts) const {
  if (token_ids.empty()) throw DimensionError("forward: empty utterance");
  for (int id : token_ids) {
    if (id < 0 || id >= vocab.size()) {
      throw SchemaError("forward: token id " + std::to_string(id) + " outside vocabulary of size " +
                        std::to_string(vocab.size()));
    }
  }

  ForwardResult<S> r;
  Tensor<S> embedded = embed(tape, encoder, token_ids);
  r.hidden = bilstm_encode(tape, encoder, embedded);

  if (opts.training && config.dropout > 0.0) {
    if (opts.dropout_rng == nullptr) throw ConfigError("forward: dropout requires an rng during training");
    // inverted dropout; the mask is a constant for the backward pass
    Tensor<S> mask = Tensor<S>::zeros(r.hidden.shape());
    const S keep_scale = static_cast<S>(1.0 / (1.0 - config.dropout));
    for (S& v : mask.value()) {
      v = opts.dropout_rng->bernoulli(config.dropout) ? S(0) : keep_scale;
    }
    r.hidden = tape.mul(r.hidden, mask);
  }

  r.slot_preds = slot_prediction_vectors(tape, slot_caps, r.hidden);
  r.slot_routing = dynamic_routing(tape, std::span<const Tensor<S>>(r.slot_preds), config.iter_slot);

  const bool want_intent = opts.run_intent_path && has_intent_path();
  if (want_intent) {
    std::vector<Tensor<S>> intent_preds =
        intent_prediction_vectors(tape, intent_caps, std::span<const Tensor<S>>(r.slot_routing.outputs));
    r.intent_routing = dynamic_routing(tape, std::span<const Tensor<S>>(intent_preds), config.iter_intent);

    for (const auto& u : r.intent_routing->outputs) {
      r.intent_norm_scalars.push_back(tape.l2_norm(u));
    }
    auto [winner, norms] = predict_intent(std::span<const Tensor<S>>(r.intent_routing->outputs));
    r.predicted_intent = winner;
    r.intent_norms = std::move(norms);

    const int routed_to = opts.force_intent >= 0 ? opts.force_intent : winner;
    if (routed_to >= static_cast<int>(r.intent_routing->outputs.size())) {
      throw SchemaError("forward: forced intent id " + std::to_string(routed_to) + " out of range");
    }
    // the winner's activation is a constant for the backward pass
    Tensor<S> u_hat = r.intent_routing->outputs[static_cast<size_t>(routed_to)].detached();
    r.slot_rerouted = re_route(tape, std::span<const Tensor<S>>(r.slot_preds), config.iter_slot, u_hat,
                               intent_caps.rerouting, static_cast<S>(config.alpha));
  }
  return r;
}

template <typename S>
Tensor<S> CapsuleModel<S>::utterance_loss(Tape<S>& tape, std::span<const int> token_ids,
                                          std::span<const int> gold_tags, int gold_intent,
                                          const ForwardOptions& opts, LossSelect select) const {
  ForwardResult<S> r = forward(tape, token_ids, opts);

  LossConfig lc;
  lc.lambda = config.lambda;
  lc.m_plus = config.m_plus;
  lc.m_minus = config.m_minus;
  lc.loss_weight_slot = config.loss_weight_slot;
  lc.mode = config.mode;

  if (!r.intent_routing.has_value() || select == LossSelect::kSlotOnly) {
    return slot_loss(tape, r.final_agreement(), gold_tags);
  }
  Tensor<S> l_intent =
      intent_loss(tape, std::span<const Tensor<S>>(r.intent_norm_scalars), gold_intent, lc);
  if (select == LossSelect::kIntentOnly) return l_intent;
  Tensor<S> l_slot = slot_loss(tape, r.final_agreement(), gold_tags);
  return joint_loss(tape, l_slot, l_intent, lc);
}

template <typename S>
CapsuleModel<S> init_model(const ModelConfig& cfg, const Vocabulary& vocab,
                           const LabelSchema& schema, Rng& rng) {
  cfg.validate();
  CapsuleModel<S> m;
  m.config = cfg;
  m.vocab = vocab;
  m.schema = schema;
  m.encoder = init_encoder_params<S>(vocab.size(), cfg.d_w, cfg.d_h, rng);
  m.slot_caps = init_slot_caps<S>(schema.num_slots(), cfg.d_p, 2 * cfg.d_h, rng);
  if (cfg.has_intent_path()) {
    m.intent_caps = init_intent_caps<S>(schema.num_intents(), cfg.d_l, cfg.d_p, rng);
  }
  return m;
}

template struct ForwardResult<float>;
template struct ForwardResult<double>;
template struct CapsuleModel<float>;
template struct CapsuleModel<double>;
template CapsuleModel<float> init_model<float>(const ModelConfig&, const Vocabulary&, const LabelSchema&, Rng&);
template CapsuleModel<double> init_model<double>(const ModelConfig&, const Vocabulary&, const LabelSchema&, Rng&);

}  // namespace capsnlu
