#include <benchmark/benchmark.h>

#include "capsule_nlu/capsules.hpp"
#include "capsule_nlu/encoder.hpp"
#include "capsule_nlu/model.hpp"

namespace {

using namespace capsnlu;

void BM_Matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(7);
  Tensor<float> a = xavier_init<float>({n, n}, n, n, rng);
  Tensor<float> b = xavier_init<float>({n, n}, n, n, rng);
  for (auto _ : state) {
    Tape<float> tape;
    Tensor<float> c = tape.matmul(a, b);
    benchmark::DoNotOptimize(c.value().data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(128)->Arg(512);

void BM_DynamicRouting(benchmark::State& state) {
  const int num_slots = 72, seq_len = 9, dim = 64;
  Rng rng(7);
  std::vector<Tensor<float>> preds;
  for (int k = 0; k < num_slots; ++k) {
    preds.push_back(xavier_init<float>({dim, seq_len}, dim, seq_len, rng));
  }
  for (auto _ : state) {
    Tape<float> tape;
    auto outcome = dynamic_routing<float>(tape, preds, static_cast<int>(state.range(0)));
    benchmark::DoNotOptimize(outcome.agreement.value().data());
  }
}
BENCHMARK(BM_DynamicRouting)->Arg(1)->Arg(2)->Arg(3);

void BM_BilstmForward(benchmark::State& state) {
  const int seq_len = static_cast<int>(state.range(0));
  Rng rng(7);
  EncoderParams<float> enc = init_encoder_params<float>(64, 64, 64, rng);
  std::vector<int> ids(static_cast<size_t>(seq_len));
  for (auto& id : ids) id = static_cast<int>(rng.uniform_int(64));
  for (auto _ : state) {
    Tape<float> tape;
    Tensor<float> h = bilstm_encode(tape, enc, embed(tape, enc, ids));
    benchmark::DoNotOptimize(h.value().data());
  }
}
BENCHMARK(BM_BilstmForward)->Arg(9)->Arg(24);

void BM_ForwardBackward(benchmark::State& state) {
  ModelConfig cfg;
  cfg.d_w = 64;
  cfg.d_h = 64;
  cfg.d_p = 32;
  cfg.d_l = 16;
  Rng rng(7);
  Vocabulary vocab;
  for (int i = 0; i < 50; ++i) vocab.add("tok" + std::to_string(i));
  LabelSchema schema({"O", "B-a", "I-a", "B-b"}, {"x", "y"});
  CapsuleModel<float> model = init_model<float>(cfg, vocab, schema, rng);
  std::vector<int> ids = {2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<int> tags = {0, 1, 2, 0, 3, 0, 0, 0};
  for (auto _ : state) {
    Tape<float> tape;
    Tensor<float> loss = model.utterance_loss(tape, ids, tags, 1, {.training = false});
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.item());
    for (auto& [name, p] : model.named_params()) {
      (void)name;
      p.zero_grad();
    }
  }
}
BENCHMARK(BM_ForwardBackward);

}  // namespace

BENCHMARK_MAIN();
