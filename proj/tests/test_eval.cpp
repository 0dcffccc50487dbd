#include <gtest/gtest.h>

#include "test_util.hpp"
#include "unir/error.hpp"
#include "unir/eval.hpp"
#include "unir/synthgen.hpp"

using namespace unir;

namespace {

RetrievalResult ranked(std::initializer_list<const char*> ids) {
  RetrievalResult r;
  double s = 1.0;
  for (const char* id : ids) r.entries.push_back({id, s -= 0.01});
  return r;
}

QueryOutcome outcome(const std::string& qid, const std::string& dataset, TaskKind task, const RetrievalResult& top,
                     const std::set<std::string>& positives, const MetricSpec& spec) {
  QueryOutcome o;
  o.qid = qid;
  o.dataset = dataset;
  o.task = task;
  o.top = top;
  const auto m = spec.for_dataset(dataset);
  for (std::size_t k : m.k_list) o.hits[k] = recall_at_k(top, positives, k) == 1;
  o.hit_primary = recall_at_k(top, positives, m.k_primary) == 1;
  return o;
}

Candidate cand(const std::string& did, Modality m, const std::string& domain) {
  Candidate c{did, m, Domain(domain), std::nullopt, std::nullopt};
  if (has_text(m)) c.text = "t";
  if (has_image(m)) c.image_ref = "img:" + did;
  return c;
}

QueryInstance query(const std::string& qid, TaskKind task, std::vector<std::string> pos) {
  QueryInstance q;
  q.qid = qid;
  q.task = task;
  q.dataset = "ds";
  q.modality = query_modality(task);
  if (has_text(q.modality)) q.text = "x";
  if (has_image(q.modality)) q.image_ref = "img:" + qid;
  q.instructions = {{"i", task, "", Domain("wiki"), query_modality(task), target_modality(task)}};
  q.positives = std::move(pos);
  return q;
}

}  // namespace

TEST(RecallAtK, Examples) {
  const std::set<std::string> pos = {"p"};
  EXPECT_EQ(recall_at_k(ranked({"a", "b", "p", "c"}), pos, 5), 1);
  EXPECT_EQ(recall_at_k(ranked({"a", "b", "c", "d", "e", "p"}), pos, 5), 0);
  EXPECT_EQ(recall_at_k(ranked({"a", "b", "c", "d", "p"}), pos, 5), 1);
  EXPECT_EQ(recall_at_k(ranked({"p1", "x"}), {"p1", "p2", "p3"}, 1), 1);
  EXPECT_EQ(recall_at_k(ranked({}), pos, 10), 0);
  EXPECT_EQ(recall_at_k(ranked({"a", "p"}), pos, 10), 1);  // shorter than k
}

TEST(MetricSpec, FashionDefault) {
  const MetricSpec spec;
  EXPECT_EQ(spec.for_dataset("fashion200k").k_primary, 10u);
  EXPECT_EQ(spec.for_dataset("FashionIQ").k_primary, 10u);
  EXPECT_EQ(spec.for_dataset("fashion200k").k_list, (std::vector<std::size_t>{10, 20, 50}));
  EXPECT_EQ(spec.for_dataset("mscoco").k_primary, 5u);
  EXPECT_EQ(spec.max_k(), 50u);
  MetricSpec bad;
  bad.default_metric.k_primary = 3;
  EXPECT_THROW(bad.validate(), Error);
}

// Hand-built fixture; expected numbers worked out by hand.
TEST(Aggregate, HandComputedFixture) {
  const MetricSpec spec;
  std::vector<QueryOutcome> o;
  // coco (R@5): q1 hit at 1, q2 hit at 3, q3 hit at 7, q4 miss
  o.push_back(outcome("q1", "coco", TaskKind::T2I, ranked({"p"}), {"p"}, spec));
  o.push_back(outcome("q2", "coco", TaskKind::T2I, ranked({"a", "b", "p"}), {"p"}, spec));
  o.push_back(outcome("q3", "coco", TaskKind::T2I, ranked({"a", "b", "c", "d", "e", "f", "p"}), {"p"}, spec));
  o.push_back(outcome("q4", "coco", TaskKind::T2I, ranked({"a"}), {"p"}, spec));
  // fashion200k (R@10): f1 hit at 8, f2 hit at 15
  auto long_list = [](int pos) {
    RetrievalResult r;
    for (int i = 1; i <= 30; ++i) r.entries.push_back({i == pos ? "p" : "n" + std::to_string(i), 1.0 / i});
    return r;
  };
  o.push_back(outcome("f1", "fashion200k", TaskKind::T2I, long_list(8), {"p"}, spec));
  o.push_back(outcome("f2", "fashion200k", TaskKind::T2I, long_list(15), {"p"}, spec));

  const EvalReport r = aggregate(o, spec);
  const auto& coco = r.per_dataset.at({TaskKind::T2I, "coco"});
  EXPECT_EQ(coco.queries, 4u);
  EXPECT_DOUBLE_EQ(coco.recall.at(1), 0.25);
  EXPECT_DOUBLE_EQ(coco.recall.at(5), 0.5);
  EXPECT_DOUBLE_EQ(coco.recall.at(10), 0.75);
  EXPECT_DOUBLE_EQ(coco.primary(), 0.5);
  const auto& fashion = r.per_dataset.at({TaskKind::T2I, "fashion200k"});
  EXPECT_EQ(fashion.k_primary, 10u);
  EXPECT_DOUBLE_EQ(fashion.recall.at(10), 0.5);
  EXPECT_DOUBLE_EQ(fashion.recall.at(20), 1.0);
  EXPECT_DOUBLE_EQ(fashion.recall.at(50), 1.0);
  // unweighted over rows: (0.5 + 0.5) / 2
  EXPECT_DOUBLE_EQ(r.average_primary, 0.5);
  // per task is query weighted: R@10 = (3 + 1) / 6
  EXPECT_DOUBLE_EQ(r.per_task.at(TaskKind::T2I).at(10), 4.0 / 6.0);
  EXPECT_DOUBLE_EQ(r.average.at(10), (0.75 + 0.5) / 2);
  EXPECT_DOUBLE_EQ(r.average.at(1), 0.25);  // only coco reports R@1
}

TEST(Aggregate, SingleDatasetAverage) {
  const MetricSpec spec;
  std::vector<QueryOutcome> o = {outcome("a", "d", TaskKind::T2T, ranked({"p"}), {"p"}, spec),
                                 outcome("b", "d", TaskKind::T2T, ranked({"x"}), {"p"}, spec),
                                 outcome("c", "d", TaskKind::T2T, ranked({"x", "p"}), {"p"}, spec)};
  const auto r = aggregate(o, spec);
  EXPECT_DOUBLE_EQ(r.average_primary, r.per_dataset.begin()->second.primary());
  EXPECT_DOUBLE_EQ(r.average_primary, 2.0 / 3.0);
}

TEST(ClassifyErrors, Definitions) {
  Corpus c;
  c.pool.add(cand("pos-it", Modality::ImageText, "wiki"));
  c.pool.add(cand("text-wiki", Modality::Text, "wiki"));
  c.pool.add(cand("it-fashion", Modality::ImageText, "fashion"));
  c.pool.add(cand("it-wiki", Modality::ImageText, "wiki"));
  c.queries = {query("a", TaskKind::T2IT, {"pos-it"}), query("b", TaskKind::T2IT, {"pos-it"}),
               query("c", TaskKind::T2IT, {"pos-it"}), query("d", TaskKind::T2IT, {"pos-it"}),
               query("e", TaskKind::T2IT, {"pos-it"})};
  const MetricSpec spec;
  std::vector<QueryOutcome> o = {
      outcome("a", "ds", TaskKind::T2IT, ranked({"text-wiki"}), {"pos-it"}, spec),   // wrong modality
      outcome("b", "ds", TaskKind::T2IT, ranked({"it-fashion"}), {"pos-it"}, spec),  // wrong domain
      outcome("c", "ds", TaskKind::T2IT, ranked({"it-wiki"}), {"pos-it"}, spec),     // other
      outcome("d", "ds", TaskKind::T2IT, ranked({"text-wiki"}), {"pos-it"}, spec),   // wrong modality
      outcome("e", "ds", TaskKind::T2IT, ranked({"text-wiki", "pos-it"}), {"pos-it"}, spec)};  // hit
  const auto r = aggregate(o, spec);
  const auto b = classify_errors(c, r, c.pool);
  EXPECT_EQ(b.failed, 4u);
  EXPECT_EQ(b.total, 5u);
  EXPECT_DOUBLE_EQ(b.wrong_modality, 0.5);
  EXPECT_DOUBLE_EQ(b.wrong_domain, 0.25);
  EXPECT_DOUBLE_EQ(b.other, 0.25);
  EXPECT_DOUBLE_EQ(b.wrong_modality + b.wrong_domain + b.other, 1.0);

  std::vector<QueryOutcome> all_hit = {o.back()};
  const auto none = classify_errors(c, aggregate(all_hit, spec), c.pool);
  EXPECT_EQ(none.failed, 0u);
  EXPECT_EQ(none.wrong_modality + none.wrong_domain + none.other, 0.0);
}

TEST(ClassifyErrors, FractionsSumToOneOnSynthetic) {
  SynthConfig cfg;
  cfg.queries_per_task = 60;
  cfg.pool_per_task = 60;
  cfg.seed = 3;
  const auto s = generate(cfg);
  const auto params = ModelParams::init(cfg.dim, FusionMode::ScoreFusion, 1);
  auto store = std::make_shared<const EmbeddingStore>(embed_pool(s.corpus.pool, s.features, params));
  const FlatIndex flat = build_flat(store, params.weights);
  SearchFn fn = [&](const QueryEmbedding& q, std::size_t k) { return flat.search(q, k); };
  const auto r = evaluate(s.corpus, fn, MetricSpec{}, {}, s.features, params);
  const auto b = classify_errors(s.corpus, r, s.corpus.pool);
  ASSERT_GT(b.failed, 0u);
  EXPECT_NEAR(b.wrong_modality + b.wrong_domain + b.other, 1.0, 1e-12);
}

// Every query's text equals its positive's text, so with identity encoders and
// no instructions the positive is the nearest neighbour.
TEST(Evaluate, PlantedNearestNeighbour) {
  Corpus c;
  std::vector<std::string> words = {"alpha beta", "gamma delta", "epsilon zeta", "eta theta", "iota kappa"};
  for (std::size_t i = 0; i < words.size(); ++i) {
    Candidate x{"d:" + std::to_string(i), Modality::Text, Domain("wiki"), words[i], std::nullopt};
    c.pool.add(x);
    QueryInstance q = query("q" + std::to_string(i), TaskKind::T2T, {x.did});
    q.text = words[i];
    q.dataset = i < 3 ? "one" : "two";
    c.queries.push_back(q);
  }
  ModelParams params = ModelParams::init(32, FusionMode::ScoreFusion, 0);
  params.text.projection = Matrix::identity(32);
  auto store = std::make_shared<const EmbeddingStore>(embed_pool(c.pool, EmbeddingStore(FusionMode::FeatureFusion, 32), params));
  const FlatIndex flat = build_flat(store);
  SearchFn fn = [&](const QueryEmbedding& q, std::size_t k) { return flat.search(q, k); };
  EvalOptions opts;
  opts.use_instructions = false;
  const auto r = evaluate(c, fn, MetricSpec{}, opts, EmbeddingStore(FusionMode::FeatureFusion, 32), params);
  for (const auto& [key, row] : r.per_dataset) EXPECT_DOUBLE_EQ(row.recall.at(1), 1.0) << key.dataset;
  EXPECT_DOUBLE_EQ(r.average_primary, 1.0);
  ASSERT_EQ(r.per_query.size(), 5u);
  EXPECT_EQ(r.per_query[3].qid, "q3");

  opts.datasets = {"two"};
  EXPECT_EQ(evaluate(c, fn, MetricSpec{}, opts, EmbeddingStore(FusionMode::FeatureFusion, 32), params).per_query.size(), 2u);
  opts.datasets = {"none"};
  EXPECT_THROW(evaluate(c, fn, MetricSpec{}, opts, EmbeddingStore(FusionMode::FeatureFusion, 32), params), Error);
}

TEST(Evaluate, FlatAndFullProbeClusteredAgree) {
  SynthConfig cfg;
  cfg.queries_per_task = 50;
  cfg.pool_per_task = 80;
  cfg.seed = 8;
  const auto s = generate(cfg);
  for (FusionMode mode : {FusionMode::ScoreFusion, FusionMode::FeatureFusion}) {
    const auto params = ModelParams::init(cfg.dim, mode, 2);
    auto store = std::make_shared<const EmbeddingStore>(embed_pool(s.corpus.pool, s.features, params));
    const FlatIndex flat = build_flat(store, params.weights);
    const ClusteredIndex ivf = build_clustered(store, params.weights, 9, 4);
    SearchFn f = [&](const QueryEmbedding& q, std::size_t k) { return flat.search(q, k); };
    SearchFn g = [&](const QueryEmbedding& q, std::size_t k) { return ivf.search(q, k, 9); };
    const auto a = evaluate(s.corpus, f, MetricSpec{}, {}, s.features, params);
    const auto b = evaluate(s.corpus, g, MetricSpec{}, {}, s.features, params);
    ASSERT_EQ(a.per_query.size(), b.per_query.size());
    for (std::size_t i = 0; i < a.per_query.size(); ++i) EXPECT_EQ(a.per_query[i].top, b.per_query[i].top);
    EXPECT_EQ(a.average, b.average);
  }
}
