#include <benchmark/benchmark.h>

#include <fstream>
#include <random>

#include "spanrule/end_model.hpp"
#include "spanrule/label_model.hpp"
#include "spanrule/rule.hpp"
#include "spanrule/sampler.hpp"
#include "spanrule/service.hpp"
#include "spanrule/synthesizer.hpp"

using namespace spanrule;

namespace {

const std::filesystem::path kDir = SPANRULE_MINI_SPAM_DIR;

struct Golden {
  ProjectConfig config;
  std::shared_ptr<const ProjectCorpora> corpora;
  std::vector<Event> events;
};

const Golden& golden() {
  static const Golden g = [] {
    Golden out;
    std::ifstream in(kDir / "project.json");
    out.config = project_config_from_json(nlohmann::json::parse(in));
    out.corpora = std::make_shared<const ProjectCorpora>(load_corpora(kDir));
    out.events = read_event_log(kDir / "golden_events.jsonl");
    return out;
  }();
  return g;
}

const Project& replayed() {
  static const Project p = Project::replay(golden().config, golden().corpora, golden().events);
  return p;
}

LabelMatrix synthetic_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<int>> columns(cols, std::vector<int>(rows, kAbstain));
  std::vector<std::string> ids;
  for (std::size_t j = 0; j < cols; ++j) {
    ids.push_back("f" + std::to_string(j));
    double alpha = 0.6 + 0.3 * u(rng);
    for (std::size_t i = 0; i < rows; ++i) {
      int y = static_cast<int>(i % 2);
      if (u(rng) < 0.5) columns[j][i] = u(rng) < alpha ? y : 1 - y;
    }
  }
  return LabelMatrix(rows, ids, columns);
}

void BM_EvaluateAll(benchmark::State& state) {
  const Project& p = replayed();
  auto functions = p.state().functions;
  for (auto _ : state) {
    auto m = evaluate_all(functions, p.corpora().unlabeled, p.state().concepts);
    benchmark::DoNotOptimize(m);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(functions.size() *
                                                                          p.corpora().unlabeled.documents.size()));
}
BENCHMARK(BM_EvaluateAll)->Unit(benchmark::kMillisecond);

void BM_FitGenerative(benchmark::State& state) {
  auto m = synthetic_matrix(static_cast<std::size_t>(state.range(0)), 10, 1);
  FitConfig cfg;
  cfg.source_model = state.range(1) ? SourceModel::kClassConditional : SourceModel::kSharedPropensity;
  for (auto _ : state) benchmark::DoNotOptimize(fit_generative(m, 2, cfg));
}
BENCHMARK(BM_FitGenerative)->Args({1500, 0})->Args({1500, 1})->Args({20000, 0})->Unit(benchmark::kMillisecond);

void BM_Synthesize(benchmark::State& state) {
  Document doc = make_document("amazon",
                               "This book was so great! I loved and read it so many times that I will soon "
                               "have to buy a new copy.");
  ConceptStore store;
  store.create("item");
  store.add_element("item", {ElementKind::kLiteral, "book"});
  store.add_element("item", {ElementKind::kLiteral, "electronics"});
  store.create("padj");
  store.add_element("padj", {ElementKind::kLiteral, "wonderful"});
  store.add_element("padj", {ElementKind::kLiteral, "great"});
  Interaction ix{"amazon", {{1, {1, 2}, std::nullopt}, {2, {4, 5}, std::string("padj")}}, {{1, 2, true}}, 1};
  for (auto _ : state) benchmark::DoNotOptimize(synthesize(ix, doc, store));
}
BENCHMARK(BM_Synthesize);

void BM_TrainEndModel(benchmark::State& state) {
  const Project& p = replayed();
  const auto& docs = p.corpora().unlabeled.documents;
  auto vocab = build_vocabulary(docs);
  std::vector<SparseVector> xs;
  ProbabilityRows probs;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (!p.state().covered[i]) continue;
    xs.push_back(featurize(docs[i], vocab));
    probs.push_back(p.state().posteriors[i]);
  }
  EndModelConfig cfg;
  cfg.epochs = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(train_noise_aware(xs, probs, 2, vocab.width(), cfg));
}
BENCHMARK(BM_TrainEndModel)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_SamplerPeek(benchmark::State& state) {
  const Project& p = replayed();
  std::vector<std::string> uids;
  for (const auto& d : p.corpora().unlabeled.documents) uids.push_back(d.uid);
  SamplerState st = p.state().sampler;
  for (auto _ : state) benchmark::DoNotOptimize(peek_next(uids, p.state().posteriors, st));
}
BENCHMARK(BM_SamplerPeek);

void BM_ReplayGoldenLog(benchmark::State& state) {
  const Golden& g = golden();
  for (auto _ : state) benchmark::DoNotOptimize(Project::replay(g.config, g.corpora, g.events));
}
BENCHMARK(BM_ReplayGoldenLog)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
