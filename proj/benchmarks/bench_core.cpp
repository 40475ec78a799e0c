#include <benchmark/benchmark.h>

#include <random>

#include "coachpipe/evalkit.hpp"
#include "coachpipe/fixtures.hpp"
#include "coachpipe/goalkit.hpp"
#include "coachpipe/pvi.hpp"
#include "coachpipe/seqmodel.hpp"
#include "coachpipe/unitgen.hpp"

using namespace coachpipe;

namespace {

std::vector<std::string> sentences(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> words = {"walk", "steps", "monday", "friday", "week", "goal",
                                                 "great", "how", "did", "you", "feel", "today"};
  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s;
    for (int w = 0; w < 20; ++w) s += words[rng() % words.size()] + " ";
    out.push_back(s);
  }
  return out;
}

void BM_KMeans(benchmark::State& state) {
  auto data = fixtures::separable_clusters(15, static_cast<std::size_t>(state.range(0)), 16, 1);
  unitgen::KMeansOptions o;
  o.k = 15;
  for (auto _ : state) benchmark::DoNotOptimize(unitgen::kmeans(data.points, o));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(data.points.size()));
}
BENCHMARK(BM_KMeans)->Arg(20)->Arg(200);

void BM_RougeL(benchmark::State& state) {
  auto c = sentences(64, 1), r = sentences(64, 2);
  for (auto _ : state)
    for (std::size_t i = 0; i < c.size(); ++i) benchmark::DoNotOptimize(evalkit::rouge_l(c[i], r[i]));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_RougeL);

void BM_BleuAvg(benchmark::State& state) {
  auto c = sentences(256, 3), r = sentences(256, 4);
  for (auto _ : state) benchmark::DoNotOptimize(evalkit::bleu_avg(c, r));
}
BENCHMARK(BM_BleuAvg);

void BM_Execute(benchmark::State& state) {
  auto ref = goalkit::extract_frame("walk 2 miles a day 7 days a week at 7 am");
  auto ins = goalkit::Instruction::copy(goalkit::SlotGroup::All);
  for (auto _ : state) benchmark::DoNotOptimize(goalkit::execute("Walk 2,500 steps", ins, ref));
}
BENCHMARK(BM_Execute);

void BM_ReferenceScoring(benchmark::State& state) {
  auto c = fixtures::qa_corpus(200, true, 1);
  pvi::PviTrainConfig cfg;
  cfg.learning_rate = 0.2;
  auto factory = [](const seqmodel::Vocabulary& v) { return std::make_unique<seqmodel::ReferenceModel>(v); };
  auto models = pvi::train_pvi_models(c, factory, cfg);
  auto inst = pvi::pvi_instances(c).instances;
  for (auto _ : state) benchmark::DoNotOptimize(pvi::score_instances(models, inst, 1));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(inst.size()));
}
BENCHMARK(BM_ReferenceScoring);

}  // namespace
BENCHMARK_MAIN();
