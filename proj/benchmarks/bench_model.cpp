#include <benchmark/benchmark.h>

#include <random>

#include "ibowimg/inference.hpp"
#include "ibowimg/synth.hpp"
#include "ibowimg/text.hpp"
#include "ibowimg/train.hpp"

using namespace ibowimg;

namespace {

// V words, d_e = 256, d_v image channels, A answers, weights in [-0.08, 0.08].
Model make_model(std::size_t vocab, std::size_t image, std::size_t answers) {
  Model m;
  std::vector<std::string> words, names;
  for (std::size_t i = 0; i < vocab; ++i) words.push_back("w" + std::to_string(i));
  for (std::size_t i = 0; i < answers; ++i) names.push_back("a" + std::to_string(i));
  m.words = WordDict(words, 1);
  m.answers = AnswerDict(names, 1);
  m.params = init_params<float>({vocab, 256, image, answers}, 1);
  return m;
}

std::string question(std::size_t vocab) {
  std::mt19937_64 rng(3);
  std::string q;
  for (int i = 0; i < 12; ++i) q += "w" + std::to_string(rng() % vocab) + " ";
  return q;
}

void BM_Forward(benchmark::State& state) {
  const auto answers = static_cast<std::size_t>(state.range(0));
  const auto image = static_cast<std::size_t>(state.range(1));
  const auto m = make_model(5000, image, answers);
  const auto img = synth::random_features(1, static_cast<std::uint32_t>(image), 2)[0].values;
  const auto bow = encode_bow(tokenize(question(5000)), m.words);
  for (auto _ : state) benchmark::DoNotOptimize(forward(m.params, bow, img));
}
BENCHMARK(BM_Forward)->Args({1000, 1024})->Args({10000, 1024})->Unit(benchmark::kMicrosecond);

void BM_PredictTop3(benchmark::State& state) {
  const auto m = make_model(5000, 1024, static_cast<std::size_t>(state.range(0)));
  const auto img = synth::random_features(1, 1024, 2)[0].values;
  const auto q = question(5000);
  for (auto _ : state) benchmark::DoNotOptimize(predict_topk(m, q, img, 3));
}
BENCHMARK(BM_PredictTop3)->Arg(10000)->Unit(benchmark::kMicrosecond);

void BM_ExplainWithCam(benchmark::State& state) {
  const auto m = make_model(5000, 1024, static_cast<std::size_t>(state.range(0)));
  const auto map = synth::random_map(1, 7, 7, 1024, 4);
  const auto img = gap(map).values;
  const auto q = question(5000);
  for (auto _ : state) benchmark::DoNotOptimize(explain(m, q, 1, img, 3, 3, &map));
}
BENCHMARK(BM_ExplainWithCam)->Arg(10000)->Unit(benchmark::kMicrosecond);

void BM_TrainStep(benchmark::State& state) {
  const auto batch_size = static_cast<std::size_t>(state.range(0));
  const ModelDims dims{5000, 256, 1024, 1000};
  auto params = init_params<float>(dims, 1);
  const auto features = synth::random_features(batch_size, 1024, 5);
  std::mt19937_64 rng(6);
  std::vector<Example> batch;
  for (std::size_t i = 0; i < batch_size; ++i) {
    BowVector bow;
    for (std::uint32_t w = 0; w < 8; ++w) bow.entries.emplace_back(w * 600 + rng() % 600, 1);
    batch.push_back({bow, features[i].values, static_cast<std::uint32_t>(rng() % 1000)});
  }
  const Hyperparams hyper;
  for (auto _ : state) {
    const auto lg = loss_and_grads(params, batch);
    sgd_step(params, lg.grads, hyper);
    benchmark::DoNotOptimize(lg.loss);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch_size));
}
BENCHMARK(BM_TrainStep)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_TrainSeparableEpoch(benchmark::State& state) {
  const auto task = synth::make_separable_task({});
  const auto store = task.vector_store();
  TrainConfig config;
  config.hyper.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train(task.train, {}, store, config));
}
BENCHMARK(BM_TrainSeparableEpoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
