#include "capsule_nlu/evaluator.hpp"

#include <json.hpp>

#include "capsule_nlu/log.hpp"

namespace capsnlu {

using nlohmann::json;

std::vector<Span> extract_spans(std::span<const std::string> tags) {
  std::vector<Span> spans;
  std::string open_type;
  int open_start = -1;
  auto close = [&](int end) {
    if (open_start >= 0) spans.push_back({open_type, open_start, end});
    open_start = -1;
    open_type.clear();
  };
  for (int t = 0; t < static_cast<int>(tags.size()); ++t) {
    const std::string& tag = tags[static_cast<size_t>(t)];
    if (tag.size() > 2 && tag[0] == 'B' && tag[1] == '-') {
      close(t - 1);
      open_type = tag.substr(2);
      open_start = t;
    } else if (tag.size() > 2 && tag[0] == 'I' && tag[1] == '-') {
      const std::string type = tag.substr(2);
      if (open_start >= 0 && type == open_type) continue;  // span continues
      close(t - 1);
      open_type = type;  // tolerant start, conlleval convention
      open_start = t;
    } else {
      close(t - 1);
    }
  }
  close(static_cast<int>(tags.size()) - 1);
  return spans;
}

SpanF1 span_f1(std::span<const std::vector<std::string>> pred,
               std::span<const std::vector<std::string>> gold) {
  if (pred.size() != gold.size()) {
    throw DimensionError("span_f1: " + std::to_string(pred.size()) + " predicted sequences vs " +
                         std::to_string(gold.size()) + " gold sequences");
  }
  SpanF1 out;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != gold[i].size()) {
      throw DimensionError("span_f1: sequence " + std::to_string(i) + " length mismatch: " +
                           std::to_string(pred[i].size()) + " vs " + std::to_string(gold[i].size()));
    }
    auto p_spans = extract_spans(pred[i]);
    auto g_spans = extract_spans(gold[i]);
    std::vector<bool> matched(g_spans.size(), false);
    for (const auto& ps : p_spans) {
      bool hit = false;
      for (size_t g = 0; g < g_spans.size(); ++g) {
        if (!matched[g] && g_spans[g] == ps) {
          matched[g] = true;
          hit = true;
          break;
        }
      }
      if (hit) ++out.tp; else ++out.fp;
    }
    for (bool m : matched) {
      if (!m) ++out.fn;
    }
  }
  out.precision = out.tp + out.fp > 0 ? static_cast<double>(out.tp) / (out.tp + out.fp) : 0.0;
  out.recall = out.tp + out.fn > 0 ? static_cast<double>(out.tp) / (out.tp + out.fn) : 0.0;
  out.f1 = out.precision + out.recall > 0.0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

std::string MetricsReport::to_json() const {
  json j;
  j["slot_p"] = slot_p;
  j["slot_r"] = slot_r;
  j["slot_f1"] = slot_f1;
  if (has_intent) {
    j["intent_acc"] = intent_acc;
    j["overall_acc"] = overall_acc;
  }
  j["n"] = n;
  return j.dump();
}

Prediction predict_utterance(const CapsuleModel<float>& model, std::span<const std::string> tokens) {
  if (tokens.empty()) throw FormatError("predict: empty utterance");
  const std::vector<int> ids = encode_tokens(tokens, model.vocab, model.config.lowercase);
  Tape<float> tape;
  ForwardResult<float> r = model.forward(tape, ids, {.training = false});
  Prediction out;
  for (int tag : r.predicted_tags()) out.tags.push_back(model.schema.slot_tag(tag));
  if (model.has_intent_path()) out.intent = model.schema.intent(r.predicted_intent);
  return out;
}

MetricsReport evaluate(const CapsuleModel<float>& model,
                       std::span<const AnnotatedUtterance> utterances) {
  if (utterances.empty()) throw FormatError("evaluate: empty dataset");

  MetricsReport report;
  report.has_intent = model.has_intent_path();
  report.n = static_cast<int64_t>(utterances.size());

  std::vector<std::vector<std::string>> pred_tags, gold_tags;
  int64_t intent_hits = 0, sentence_slot_hits = 0, overall_hits = 0;

  for (const auto& u : utterances) {
    std::vector<std::string> gold = u.slot_tags;
    for (auto& tag : gold) {
      if (model.schema.slot_id(tag) < 0) {
        log::info("evaluate: unseen gold tag '" + tag + "' mapped to O");
        tag = "O";
      }
    }
    Prediction p = predict_utterance(model, u.tokens);
    const bool slots_exact = (p.tags == gold);
    sentence_slot_hits += slots_exact;
    if (report.has_intent) {
      const bool intent_hit = (p.intent == u.intent);
      intent_hits += intent_hit;
      overall_hits += (intent_hit && slots_exact);
      ++report.intent_confusion[{u.intent, p.intent}];
    }
    pred_tags.push_back(std::move(p.tags));
    gold_tags.push_back(std::move(gold));
  }

  const SpanF1 f1 = span_f1(pred_tags, gold_tags);
  report.slot_p = f1.precision;
  report.slot_r = f1.recall;
  report.slot_f1 = f1.f1;
  report.sentence_slot_acc = static_cast<double>(sentence_slot_hits) / static_cast<double>(report.n);
  if (report.has_intent) {
    report.intent_acc = static_cast<double>(intent_hits) / static_cast<double>(report.n);
    report.overall_acc = static_cast<double>(overall_hits) / static_cast<double>(report.n);
  }
  return report;
}

namespace {

std::vector<std::vector<double>> matrix_rows(const Tensor<float>& m) {
  std::vector<std::vector<double>> rows(static_cast<size_t>(m.dim(0)));
  for (int i = 0; i < m.dim(0); ++i) {
    rows[static_cast<size_t>(i)].resize(static_cast<size_t>(m.dim(1)));
    for (int j = 0; j < m.dim(1); ++j) rows[static_cast<size_t>(i)][static_cast<size_t>(j)] = m.at(i, j);
  }
  return rows;
}

}  // namespace

AgreementDump dump_agreement(const CapsuleModel<float>& model, std::span<const std::string> tokens) {
  if (!model.has_intent_path()) {
    throw SchemaError("dump_agreement: the loaded model was trained without an intent path");
  }
  if (tokens.empty()) throw FormatError("dump_agreement: empty utterance");

  const std::vector<int> ids = encode_tokens(tokens, model.vocab, model.config.lowercase);
  Tape<float> tape;
  ForwardResult<float> r = model.forward(tape, ids, {.training = false});

  AgreementDump d;
  d.tokens.assign(tokens.begin(), tokens.end());
  d.slot_labels = model.schema.slot_tags();
  d.intent_labels = model.schema.intents();
  d.c_word_slot_first = matrix_rows(r.slot_routing.agreement);
  d.c_word_slot_reroute = matrix_rows(r.slot_rerouted->agreement);
  d.c_slot_intent = matrix_rows(r.intent_routing->agreement);
  d.intent_norms.assign(r.intent_norms.begin(), r.intent_norms.end());
  for (int tag : r.predicted_tags()) d.pred_tags.push_back(model.schema.slot_tag(tag));
  d.pred_intent = model.schema.intent(r.predicted_intent);
  return d;
}

std::string AgreementDump::to_json() const {
  json j;
  j["tokens"] = tokens;
  j["slot_labels"] = slot_labels;
  j["intent_labels"] = intent_labels;
  j["c_word_slot_first"] = c_word_slot_first;
  j["c_word_slot_reroute"] = c_word_slot_reroute;
  j["c_slot_intent"] = c_slot_intent;
  j["intent_norms"] = intent_norms;
  j["pred_tags"] = pred_tags;
  j["pred_intent"] = pred_intent;
  return j.dump(2);
}

AgreementDump AgreementDump::from_json(const std::string& text) {
  try {
    json j = json::parse(text);
    AgreementDump d;
    d.tokens = j.at("tokens").get<std::vector<std::string>>();
    d.slot_labels = j.at("slot_labels").get<std::vector<std::string>>();
    d.intent_labels = j.at("intent_labels").get<std::vector<std::string>>();
    d.c_word_slot_first = j.at("c_word_slot_first").get<std::vector<std::vector<double>>>();
    d.c_word_slot_reroute = j.at("c_word_slot_reroute").get<std::vector<std::vector<double>>>();
    d.c_slot_intent = j.at("c_slot_intent").get<std::vector<std::vector<double>>>();
    d.intent_norms = j.at("intent_norms").get<std::vector<double>>();
    d.pred_tags = j.at("pred_tags").get<std::vector<std::string>>();
    d.pred_intent = j.at("pred_intent").get<std::string>();
    return d;
  } catch (const json::exception& e) {
    throw FormatError(std::string("agreement dump: bad JSON: ") + e.what());
  }
}

}  // namespace capsnlu
