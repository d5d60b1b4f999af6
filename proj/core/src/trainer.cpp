#include "capsule_nlu/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "capsule_nlu/checkpoint.hpp"
#include "capsule_nlu/log.hpp"

namespace capsnlu {

using nlohmann::json;

namespace {

constexpr float kClipNorm = 5.0f;

struct EncodedUtterance {
  std::vector<int> token_ids;
  std::vector<int> tag_ids;
  int intent_id = -1;
};

std::vector<EncodedUtterance> encode_all(std::span<const AnnotatedUtterance> utts,
                                         const CapsuleModel<float>& model, EncodeMode mode) {
  std::vector<EncodedUtterance> out;
  out.reserve(utts.size());
  for (const auto& u : utts) {
    const Batch b = encode_batch({&u, 1}, model.vocab, model.schema, model.config.lowercase, mode);
    EncodedUtterance e;
    e.token_ids.assign(b.token_ids.begin(), b.token_ids.end());
    e.tag_ids.assign(b.tag_ids.begin(), b.tag_ids.end());
    e.intent_id = b.intent_ids[0];
    out.push_back(std::move(e));
  }
  return out;
}

double selection_metric(const MetricsReport& m) {
  return m.has_intent ? m.overall_acc : m.slot_f1;
}

// One optimization phase: epochs of shuffled batches over `loss_select`,
// updating only `trainable`. Restores the best parameter snapshot into the
// model before returning.
struct PhaseOutcome {
  int best_epoch = 0;
  MetricsReport best_valid;
};

PhaseOutcome run_phase(CapsuleModel<float>& model, std::span<const EncodedUtterance> train_enc,
                       std::span<const AnnotatedUtterance> valid_utts,
                       CapsuleModel<float>::LossSelect loss_select, bool run_intent_path,
                       NamedParams<float> trainable, Rng& shuffle_rng, Rng& dropout_rng,
                       int phase_index, std::vector<EpochRecord>& log_out) {
  const ModelConfig& cfg = model.config;
  Rmsprop<float> opt(static_cast<float>(cfg.lr), static_cast<float>(cfg.rmsprop_decay),
                     static_cast<float>(cfg.rmsprop_eps));

  std::vector<size_t> order(train_enc.size());
  std::iota(order.begin(), order.end(), size_t{0});

  PhaseOutcome outcome;
  double best_metric = -1.0;
  std::vector<std::vector<float>> best_snapshot;
  auto all_params = model.named_params();
  int stale_epochs = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int64_t seen = 0;

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      const int batch_index = static_cast<int>(start / static_cast<size_t>(cfg.batch_size));

      for (auto& [name, p] : all_params) {
        (void)name;
        p.zero_grad();
      }
      Tape<float> tape;
      Tensor<float> batch_loss;
      for (size_t i = start; i < stop; ++i) {
        const EncodedUtterance& u = train_enc[order[i]];
        ForwardOptions opts;
        opts.training = true;
        opts.dropout_rng = &dropout_rng;
        opts.run_intent_path = run_intent_path;
        if (run_intent_path && cfg.teacher_force_intent) opts.force_intent = u.intent_id;
        Tensor<float> l = model.utterance_loss(tape, u.token_ids, u.tag_ids, u.intent_id, opts, loss_select);
        batch_loss = batch_loss.defined() ? tape.add(batch_loss, l) : l;
      }
      batch_loss = tape.scale_add(batch_loss, 1.0f / static_cast<float>(stop - start), 0.0f);

      const float loss_value = batch_loss.item();
      if (!std::isfinite(loss_value)) {
        throw NumericError("training diverged: non-finite loss in epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_index));
      }
      epoch_loss += static_cast<double>(loss_value) * static_cast<double>(stop - start);
      seen += static_cast<int64_t>(stop - start);

      tape.backward(batch_loss);
      const float gnorm = Rmsprop<float>::clip_global_norm(trainable, kClipNorm);
      if (gnorm > kClipNorm) {
        log::info("gradient norm " + std::to_string(gnorm) + " clipped to " + std::to_string(kClipNorm) +
                  " (epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) + ")");
      }
      opt.step(trainable);
    }

    const MetricsReport valid = evaluate(model, valid_utts);
    const double metric = selection_metric(valid);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = phase_index;
    rec.train_loss = epoch_loss / static_cast<double>(seen);
    rec.valid_slot_f1 = valid.slot_f1;
    if (valid.has_intent) {
      rec.valid_intent_acc = valid.intent_acc;
      rec.valid_overall_acc = valid.overall_acc;
    }
    rec.improved = metric > best_metric;
    log_out.push_back(rec);
    log::info("epoch " + std::to_string(epoch) + " loss " + std::to_string(rec.train_loss) +
              " valid metric " + std::to_string(metric));

    if (metric > best_metric) {
      best_metric = metric;
      outcome.best_epoch = epoch;
      outcome.best_valid = valid;
      best_snapshot.clear();
      for (auto& [name, p] : all_params) {
        (void)name;
        best_snapshot.emplace_back(p.value().begin(), p.value().end());
      }
      stale_epochs = 0;
    } else if (++stale_epochs >= cfg.patience) {
      log::info("early stop after " + std::to_string(cfg.patience) + " epochs without improvement");
      break;
    }
  }

  if (!best_snapshot.empty()) {
    for (size_t i = 0; i < all_params.size(); ++i) {
      std::copy(best_snapshot[i].begin(), best_snapshot[i].end(), all_params[i].second.value().begin());
    }
  }
  return outcome;
}

}  // namespace

uint64_t fnv1a_hash_params(NamedParams<float>& params) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (auto& [name, p] : params) {
    mix(name.data(), name.size());
    mix(p.value().data(), p.value().size() * sizeof(float));
  }
  return h;
}

std::string EpochRecord::to_json() const {
  json j;
  j["epoch"] = epoch;
  j["phase"] = phase;
  j["train_loss"] = train_loss;
  j["valid_slot_f1"] = valid_slot_f1;
  if (valid_intent_acc.has_value()) j["valid_intent_acc"] = *valid_intent_acc;
  if (valid_overall_acc.has_value()) j["valid_overall_acc"] = *valid_overall_acc;
  j["improved"] = improved;
  return j.dump();
}

TrainResult train(const ModelConfig& cfg, std::span<const AnnotatedUtterance> train_utts,
                  std::span<const AnnotatedUtterance> valid_utts) {
  cfg.validate();
  if (train_utts.empty()) throw FormatError("train: empty training set");
  if (valid_utts.empty()) throw FormatError("train: empty validation set");

  const VocabAndSchema vs = build_vocab(train_utts, /*min_count=*/1, cfg.lowercase);
  Rng master(cfg.seed);
  Rng init_rng = master.fork(1);
  Rng shuffle_rng = master.fork(2);
  Rng dropout_rng = master.fork(3);

  TrainResult result;
  result.model = init_model<float>(cfg, vs.vocab, vs.schema, init_rng);
  CapsuleModel<float>& model = result.model;

  const auto train_enc = encode_all(train_utts, model, EncodeMode::kStrict);

  using Select = CapsuleModel<float>::LossSelect;
  switch (cfg.mode) {
    case TrainMode::kJoint: {
      auto phase = run_phase(model, train_enc, valid_utts, Select::kModeDefault,
                             /*run_intent_path=*/true, model.named_params(), shuffle_rng, dropout_rng,
                             1, result.log);
      result.best_epoch = phase.best_epoch;
      result.best_valid = phase.best_valid;
      break;
    }
    case TrainMode::kSlotOnly: {
      auto phase = run_phase(model, train_enc, valid_utts, Select::kSlotOnly,
                             /*run_intent_path=*/false, model.named_params(), shuffle_rng, dropout_rng,
                             1, result.log);
      result.best_epoch = phase.best_epoch;
      result.best_valid = phase.best_valid;
      break;
    }
    case TrainMode::kTwoStage: {
      // Phase 1: slot filling only. The intent path is neither run nor
      // updated, so validation selects on slot F1.
      {
        CapsuleModel<float> slot_view = model;  // shares parameter nodes
        slot_view.config.mode = TrainMode::kSlotOnly;
        auto phase = run_phase(slot_view, train_enc, valid_utts, Select::kSlotOnly,
                               /*run_intent_path=*/false, slot_view.slot_path_params(), shuffle_rng,
                               dropout_rng, 1, result.log);
        (void)phase;
      }
      // Phase 2: slot path frozen, intent loss only.
      auto slot_params = model.slot_path_params();
      result.slot_path_hash_phase2_start = fnv1a_hash_params(slot_params);
      auto phase2 = run_phase(model, train_enc, valid_utts, Select::kIntentOnly,
                              /*run_intent_path=*/true, model.intent_path_params(), shuffle_rng,
                              dropout_rng, 2, result.log);
      result.slot_path_hash_phase2_end = fnv1a_hash_params(slot_params);
      result.best_epoch = phase2.best_epoch;
      result.best_valid = phase2.best_valid;
      break;
    }
  }
  return result;
}

TrainResult train_from_dir(const ModelConfig& cfg, const std::string& data_dir,
                           const std::string& out_path) {
  const auto train_utts = load_split(data_dir, "train");
  const auto valid_utts = load_split(data_dir, "valid");
  TrainResult result = train(cfg, train_utts, valid_utts);

  if (!out_path.empty()) {
    // checkpoint plus the per-epoch metrics log beside it
    save_checkpoint(result.model, out_path);
    std::ofstream log_file(out_path + ".log");
    if (!log_file) throw FormatError("cannot write metrics log: " + out_path + ".log");
    for (const auto& rec : result.log) log_file << rec.to_json() << "\n";
  }
  return result;
}

}  // namespace capsnlu
