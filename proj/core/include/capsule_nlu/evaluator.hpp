#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "capsule_nlu/model.hpp"

namespace capsnlu {

// A typed, inclusive token span extracted from a BIO tag run.
struct Span {
  std::string label;
  int start = 0;
  int end = 0;  // inclusive

  auto operator<=>(const Span&) const = default;
};

// Maximal B-X (I-X)* runs become spans. Tolerant mode per the conlleval
// convention: an I-X with no live X span opens a new one.
std::vector<Span> extract_spans(std::span<const std::string> tags);

struct SpanF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int64_t tp = 0, fp = 0, fn = 0;
};

// Micro-averaged exact-match span scoring over parallel tag-sequence lists.
SpanF1 span_f1(std::span<const std::vector<std::string>> pred,
               std::span<const std::vector<std::string>> gold);

struct MetricsReport {
  double slot_p = 0.0;
  double slot_r = 0.0;
  double slot_f1 = 0.0;
  double intent_acc = 0.0;
  double overall_acc = 0.0;   // intent and full tag sequence both correct
  double sentence_slot_acc = 0.0;  // full tag sequence correct (diagnostic)
  int64_t n = 0;
  bool has_intent = true;
  // (gold intent, predicted intent) -> count
  std::map<std::pair<std::string, std::string>, int64_t> intent_confusion;

  // {"slot_p":..., "slot_r":..., "slot_f1":..., "intent_acc":...,
  //  "overall_acc":..., "n":...}; intent keys omitted for slot-only models.
  std::string to_json() const;
};

// Runs inference over a parsed split and aggregates all metrics.
MetricsReport evaluate(const CapsuleModel<float>& model,
                       std::span<const AnnotatedUtterance> utterances);

// Per-utterance inference outcome used by evaluate and the CLI.
struct Prediction {
  std::vector<std::string> tags;
  std::string intent;  // empty for slot-only models
};
Prediction predict_utterance(const CapsuleModel<float>& model, std::span<const std::string> tokens);

// Interpretability record: routing agreements for both slot passes, the
// slot->intent agreement, intent norms and the decisions.
struct AgreementDump {
  std::vector<std::string> tokens;
  std::vector<std::string> slot_labels;
  std::vector<std::string> intent_labels;
  std::vector<std::vector<double>> c_word_slot_first;    // K rows x T
  std::vector<std::vector<double>> c_word_slot_reroute;  // K rows x T
  std::vector<std::vector<double>> c_slot_intent;        // L rows x K
  std::vector<double> intent_norms;                      // L
  std::vector<std::string> pred_tags;
  std::string pred_intent;

  std::string to_json() const;
  static AgreementDump from_json(const std::string& text);
};

AgreementDump dump_agreement(const CapsuleModel<float>& model, std::span<const std::string> tokens);

}  // namespace capsnlu
