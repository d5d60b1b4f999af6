// Command-line front end: train / eval / predict / inspect.
//
// Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric
// failure. CAPSULE_NLU_LOG=error|info|debug controls stderr verbosity.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "capsule_nlu/checkpoint.hpp"
#include "capsule_nlu/evaluator.hpp"
#include "capsule_nlu/log.hpp"
#include "capsule_nlu/trainer.hpp"

namespace {

using namespace capsnlu;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

int run_train(const std::string& data_dir, const std::string& config_path, const std::string& out_path,
              std::optional<uint64_t> seed, std::optional<std::string> mode) {
  ModelConfig cfg = config_path.empty() ? ModelConfig{} : load_model_config(config_path);
  if (seed.has_value()) cfg.seed = *seed;
  if (mode.has_value()) cfg.mode = train_mode_from_string(*mode);
  cfg.validate();

  TrainResult result = train_from_dir(cfg, data_dir, out_path);
  std::cout << "best epoch " << result.best_epoch << ": " << result.best_valid.to_json() << "\n";
  std::cout << "checkpoint written to " << out_path << " (log: " << out_path << ".log)\n";
  return kExitOk;
}

int run_eval(const std::string& model_path, const std::string& data_dir, const std::string& split,
             bool as_json) {
  CapsuleModel<float> model = load_checkpoint(model_path);
  const auto utts = load_split(data_dir, split);
  const MetricsReport report = evaluate(model, utts);
  if (as_json) {
    std::cout << report.to_json() << "\n";
    return kExitOk;
  }
  std::cout << "split: " << split << " (" << report.n << " utterances)\n";
  std::printf("slot precision  %.4f\n", report.slot_p);
  std::printf("slot recall     %.4f\n", report.slot_r);
  std::printf("slot F1         %.4f\n", report.slot_f1);
  if (report.has_intent) {
    std::printf("intent accuracy %.4f\n", report.intent_acc);
    std::printf("overall accuracy %.4f\n", report.overall_acc);
  }
  return kExitOk;
}

int predict_one(const CapsuleModel<float>& model, const std::string& line) {
  const std::vector<std::string> tokens = split_whitespace(line);
  if (tokens.empty()) throw FormatError("predict: empty utterance");
  const Prediction p = predict_utterance(model, tokens);
  for (size_t i = 0; i < tokens.size(); ++i) {
    std::cout << tokens[i] << "\t" << p.tags[i] << "\n";
  }
  if (model.has_intent_path()) std::cout << "intent: " << p.intent << "\n";
  return kExitOk;
}

int run_predict(const std::string& model_path, const std::string& text, bool from_stdin) {
  CapsuleModel<float> model = load_checkpoint(model_path);
  if (from_stdin) {
    std::string line;
    while (std::getline(std::cin, line)) {
      if (split_whitespace(line).empty()) continue;
      predict_one(model, line);
    }
    return kExitOk;
  }
  return predict_one(model, text);
}

int run_inspect(const std::string& model_path, const std::string& text, const std::string& out_path) {
  CapsuleModel<float> model = load_checkpoint(model_path);
  const std::vector<std::string> tokens = split_whitespace(text);
  if (tokens.empty()) throw FormatError("inspect: empty utterance");
  const AgreementDump dump = dump_agreement(model, tokens);
  std::ofstream out(out_path);
  if (!out) throw FormatError("cannot write agreement dump: " + out_path);
  out << dump.to_json() << "\n";
  log::info("agreement dump written to " + out_path);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"capsule-routed joint slot filling and intent detection"};
  app.require_subcommand(1);

  std::string data_dir, config_path, out_path, model_path, split = "test", text;
  std::optional<uint64_t> seed;
  std::optional<std::string> mode;
  bool as_json = false, from_stdin = false;

  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  train_cmd->add_option("--data", data_dir, "dataset directory")->required();
  train_cmd->add_option("--config", config_path, "flat JSON config file");
  train_cmd->add_option("--out", out_path, "checkpoint output path")->required();
  train_cmd->add_option("--seed", seed, "override the config seed");
  train_cmd->add_option("--mode", mode, "joint|slot_only|two_stage")
      ->check(CLI::IsMember({"joint", "slot_only", "two_stage"}));

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  eval_cmd->add_option("--model", model_path, "checkpoint path")->required();
  eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
  eval_cmd->add_option("--split", split, "train|valid|test")
      ->required()
      ->check(CLI::IsMember({"train", "valid", "test"}));
  eval_cmd->add_flag("--json", as_json, "print the metrics report as JSON");

  auto* predict_cmd = app.add_subcommand("predict", "tag an utterance and detect its intent");
  predict_cmd->add_option("--model", model_path, "checkpoint path")->required();
  auto* text_opt = predict_cmd->add_option("--text", text, "whitespace-tokenized utterance");
  auto* stdin_flag = predict_cmd->add_flag("--stdin", from_stdin, "read one utterance per line");
  text_opt->excludes(stdin_flag);

  auto* inspect_cmd = app.add_subcommand("inspect", "write the routing agreement dump for an utterance");
  inspect_cmd->add_option("--model", model_path, "checkpoint path")->required();
  inspect_cmd->add_option("--text", text, "whitespace-tokenized utterance")->required();
  inspect_cmd->add_option("--out", out_path, "output JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return run_train(data_dir, config_path, out_path, seed, mode);
    if (eval_cmd->parsed()) return run_eval(model_path, data_dir, split, as_json);
    if (predict_cmd->parsed()) {
      if (!from_stdin && text.empty()) {
        std::cerr << "predict requires --text or --stdin\n";
        return kExitUsage;
      }
      return run_predict(model_path, text, from_stdin);
    }
    if (inspect_cmd->parsed()) return run_inspect(model_path, text, out_path);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DimensionError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
