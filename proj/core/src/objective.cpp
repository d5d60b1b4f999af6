#include "capsule_nlu/objective.hpp"

namespace capsnlu {

template <typename S>
Tensor<S> slot_loss(Tape<S>& tape, const Tensor<S>& agreement, std::span<const int> gold_tags,
                    std::span<const uint8_t> mask) {
  const int num_slots = agreement.dim(0);
  const int num_positions = agreement.dim(1);
  if (static_cast<int>(gold_tags.size()) != num_positions) {
    throw DimensionError("slot_loss: got " + std::to_string(gold_tags.size()) + " gold tags for " +
                         std::to_string(num_positions) + " positions");
  }
  std::vector<int> rows, cols;
  for (int t = 0; t < num_positions; ++t) {
    if (!mask.empty() && mask[static_cast<size_t>(t)] == 0) continue;
    const int gold = gold_tags[static_cast<size_t>(t)];
    if (gold < 0 || gold >= num_slots) {
      throw SchemaError("slot_loss: gold tag id " + std::to_string(gold) + " outside [0, " +
                        std::to_string(num_slots) + ")");
    }
    rows.push_back(gold);
    cols.push_back(t);
  }
  if (rows.empty()) throw DimensionError("slot_loss: every position is masked");

  Tensor<S> picked = tape.gather_entries(agreement, rows, cols);
  Tensor<S> logs = tape.log(tape.clamp_min(picked, S(1e-12)));
  return tape.scale_add(tape.sum_all(logs), S(-1), S(0));
}

template <typename S>
Tensor<S> intent_loss(Tape<S>& tape, std::span<const Tensor<S>> norm_scalars, int gold_intent,
                      const LossConfig& cfg) {
  cfg.validate();
  const int num_intents = static_cast<int>(norm_scalars.size());
  if (gold_intent < 0 || gold_intent >= num_intents) {
    throw SchemaError("intent_loss: gold intent id " + std::to_string(gold_intent) + " outside [0, " +
                      std::to_string(num_intents) + ")");
  }
  Tensor<S> total;
  for (int l = 0; l < num_intents; ++l) {
    const Tensor<S>& norm = norm_scalars[static_cast<size_t>(l)];
    Tensor<S> term;
    if (l == gold_intent) {
      Tensor<S> hinge = tape.relu(tape.scale_add(norm, S(-1), static_cast<S>(cfg.m_plus)));
      term = tape.mul(hinge, hinge);
    } else {
      Tensor<S> hinge = tape.relu(tape.scale_add(norm, S(1), static_cast<S>(-cfg.m_minus)));
      term = tape.scale_add(tape.mul(hinge, hinge), static_cast<S>(cfg.lambda), S(0));
    }
    total = total.defined() ? tape.add(total, term) : term;
  }
  return total;
}

template <typename S>
Tensor<S> joint_loss(Tape<S>& tape, const Tensor<S>& slot, const Tensor<S>& intent,
                     const LossConfig& cfg) {
  return tape.add(tape.scale_add(slot, static_cast<S>(cfg.loss_weight_slot), S(0)), intent);
}

template Tensor<float> slot_loss<float>(Tape<float>&, const Tensor<float>&, std::span<const int>, std::span<const uint8_t>);
template Tensor<double> slot_loss<double>(Tape<double>&, const Tensor<double>&, std::span<const int>, std::span<const uint8_t>);
template Tensor<float> intent_loss<float>(Tape<float>&, std::span<const Tensor<float>>, int, const LossConfig&);
template Tensor<double> intent_loss<double>(Tape<double>&, std::span<const Tensor<double>>, int, const LossConfig&);
template Tensor<float> joint_loss<float>(Tape<float>&, const Tensor<float>&, const Tensor<float>&, const LossConfig&);
template Tensor<double> joint_loss<double>(Tape<double>&, const Tensor<double>&, const Tensor<double>&, const LossConfig&);

}  // namespace capsnlu
