#pragma once

#include <span>

#include "capsule_nlu/config.hpp"
#include "capsule_nlu/tape.hpp"

namespace capsnlu {

struct LossConfig {
  double lambda = 0.5;    // down-weighting coefficient for non-gold margins
  double m_plus = 0.8;
  double m_minus = 0.2;
  double loss_weight_slot = 1.0;
  TrainMode mode = TrainMode::kJoint;

  void validate() const {
    if (!(m_minus >= 0.0 && m_minus < m_plus && m_plus <= 1.0)) {
      throw ConfigError("margins must satisfy 0 <= m_minus < m_plus <= 1");
    }
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  }
};

// -sum over unmasked positions t of log c[gold_t][t], with c clamped below
// at 1e-12 before the log. agreement is [K x T]; mask may be empty (all
// positions real). Utterance-level value; batch averaging is the caller's.
template <typename S>
Tensor<S> slot_loss(Tape<S>& tape, const Tensor<S>& agreement, std::span<const int> gold_tags,
                    std::span<const uint8_t> mask = {});

// Max-margin over intent activation norms:
// sum_l [l == gold] max(0, m+ - |u_l|)^2 + lambda [l != gold] max(0, |u_l| - m-)^2
template <typename S>
Tensor<S> intent_loss(Tape<S>& tape, std::span<const Tensor<S>> norm_scalars, int gold_intent,
                      const LossConfig& cfg);

// loss_weight_slot * slot + intent.
template <typename S>
Tensor<S> joint_loss(Tape<S>& tape, const Tensor<S>& slot, const Tensor<S>& intent,
                     const LossConfig& cfg);

extern template Tensor<float> slot_loss<float>(Tape<float>&, const Tensor<float>&, std::span<const int>, std::span<const uint8_t>);
extern template Tensor<double> slot_loss<double>(Tape<double>&, const Tensor<double>&, std::span<const int>, std::span<const uint8_t>);
extern template Tensor<float> intent_loss<float>(Tape<float>&, std::span<const Tensor<float>>, int, const LossConfig&);
extern template Tensor<double> intent_loss<double>(Tape<double>&, std::span<const Tensor<double>>, int, const LossConfig&);
extern template Tensor<float> joint_loss<float>(Tape<float>&, const Tensor<float>&, const Tensor<float>&, const LossConfig&);
extern template Tensor<double> joint_loss<double>(Tape<double>&, const Tensor<double>&, const Tensor<double>&, const LossConfig&);

}  // namespace capsnlu
