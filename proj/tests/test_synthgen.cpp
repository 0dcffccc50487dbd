#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "test_util.hpp"
#include "unir/error.hpp"
#include "unir/eval.hpp"
#include "unir/synthgen.hpp"

using namespace unir;

namespace {

SynthConfig small(std::uint64_t seed) {
  SynthConfig c;
  c.queries_per_task = 60;
  c.pool_per_task = 80;
  c.topics_per_domain = 12;
  c.seed = seed;
  return c;
}

std::vector<std::uint8_t> bytes_of(const std::filesystem::path& p) { return read_file_bytes(p); }

}  // namespace

TEST(Synthgen, SameSeedByteIdenticalFiles) {
  test::TempDir a("synth-a"), b("synth-b"), c("synth-c");
  const auto pa = write_synth(generate(small(5)), a.path());
  const auto pb = write_synth(generate(small(5)), b.path());
  const auto pc = write_synth(generate(small(6)), c.path());
  for (auto member : {&SynthPaths::queries, &SynthPaths::candidates, &SynthPaths::features, &SynthPaths::labels})
    EXPECT_EQ(bytes_of(pa.*member), bytes_of(pb.*member));
  EXPECT_NE(bytes_of(pa.features), bytes_of(pc.features));
}

TEST(Synthgen, CountsMatchConfig) {
  const auto cfg = small(1);
  const auto s = generate(cfg);
  EXPECT_EQ(s.corpus.queries.size(), cfg.tasks.size() * cfg.queries_per_task);
  const std::size_t per_dataset = cfg.pool_per_task + cfg.topics_per_domain * cfg.distractors_per_topic;
  const auto& st = s.corpus.pool.stats();
  EXPECT_EQ(st.total, cfg.tasks.size() * per_dataset);
  std::size_t sum = 0;
  for (const auto& [m, n] : st.by_modality) sum += n;
  EXPECT_EQ(sum, st.total);
  EXPECT_EQ(dataset_names(s.corpus.queries).size(), 4u);
  EXPECT_EQ(s.features.dim(), cfg.dim);
}

TEST(Synthgen, ZeroQueriesDropsTask) {
  auto cfg = small(2);
  cfg.queries_override[TaskKind::I2T] = 0;
  const auto s = generate(cfg);
  for (const auto& q : s.corpus.queries) EXPECT_NE(q.task, TaskKind::I2T);
  EXPECT_EQ(s.corpus.queries.size(), 3 * cfg.queries_per_task);
}

TEST(Synthgen, FilesParseBack) {
  test::TempDir dir("synth-parse");
  const auto s = generate(small(3));
  const auto p = write_synth(s, dir.path());
  const Corpus back = parse_corpus(p.queries, p.candidates);
  EXPECT_EQ(back.queries, s.corpus.queries);
  EXPECT_TRUE(back.warnings.empty());
  EXPECT_EQ(read_embeddings(p.features), s.features);
  EXPECT_EQ(read_labels(p.labels), s.topic_of);
}

// Positives are exactly the same-topic target-modality candidates of the
// dataset, so a topic-label oracle is always right at rank 1; negatives are
// same-topic candidates of the wrong modality.
TEST(Synthgen, LabelsAgreeWithRelevance) {
  const auto s = generate(small(4));
  for (const auto& q : s.corpus.queries) {
    ASSERT_EQ(q.instructions.size(), 4u);
    const std::size_t topic = s.topic_of.at(q.qid);
    std::set<std::string> expected;
    for (const auto& c : s.corpus.pool.candidates())
      if (c.did.starts_with(q.dataset + ":") && c.modality == target_modality(q.task) && s.topic_of.at(c.did) == topic)
        expected.insert(c.did);
    EXPECT_EQ(std::set<std::string>(q.positives.begin(), q.positives.end()), expected) << q.qid;
    ASSERT_FALSE(q.negatives.empty());
    for (const auto& n : q.negatives) {
      const auto& c = s.corpus.pool.get(n);
      EXPECT_NE(c.modality, target_modality(q.task));
      EXPECT_EQ(s.topic_of.at(n), topic);
    }
    if (q.image_ref) EXPECT_TRUE(s.features.row_of(*q.image_ref));
  }
}

TEST(Synthgen, InstructionsNameTheTarget) {
  const auto s = generate(small(5));
  for (const auto& q : s.corpus.queries)
    for (const auto& inst : q.instructions) {
      const bool says_image = inst.text.find("image") != std::string::npos;
      EXPECT_EQ(says_image, target_modality(q.task) != Modality::Text) << inst.text;
      EXPECT_NE(inst.text.find(inst.domain.str()), std::string::npos);
    }
}

TEST(Synthgen, InvalidConfig) {
  auto cfg = small(1);
  cfg.cross_modal_link_strength = 1.5;
  EXPECT_THROW(generate(cfg), Error);
  cfg = small(1);
  cfg.dim = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(SplitHeldOut, OneOfFour) {
  const auto s = generate(small(7));
  const auto [train, held] = split_held_out(s.corpus, {"synth-misc-i2t"});
  EXPECT_EQ(dataset_names(train.queries).size(), 3u);
  EXPECT_EQ(dataset_names(held.queries), (std::vector<std::string>{"synth-misc-i2t"}));
  EXPECT_EQ(train.queries.size() + held.queries.size(), s.corpus.queries.size());
  std::set<std::string> ids;
  for (const auto& q : train.queries) ids.insert(q.qid);
  for (const auto& q : held.queries) EXPECT_FALSE(ids.count(q.qid));
  EXPECT_EQ(held.pool.size(), s.corpus.pool.size());
  EXPECT_EQ(train.pool.size(), s.corpus.pool.size());

  const auto [t2, h2] = split_held_out(s.corpus, {"I2I"});
  EXPECT_EQ(dataset_names(h2.queries), (std::vector<std::string>{"synth-misc-i2i"}));
  const auto [t3, h3] = split_held_out(s.corpus, {"random:2"}, 11);
  EXPECT_EQ(dataset_names(h3.queries).size(), 2u);
  const auto [t4, h4] = split_held_out(s.corpus, {"random:2"}, 11);
  EXPECT_EQ(h3.queries, h4.queries);
}

TEST(SplitHeldOut, Degenerate) {
  const auto s = generate(small(7));
  auto code = [&](std::vector<std::string> sel) {
    try {
      split_held_out(s.corpus, sel);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  EXPECT_EQ(code({}), ErrorCode::EmptyHeldOut);
  EXPECT_EQ(code({"no-such-dataset"}), ErrorCode::EmptyHeldOut);
  EXPECT_EQ(code(dataset_names(s.corpus.queries)), ErrorCode::NothingHeldIn);
}

// Shuffling which query owns which positive set destroys the signal. A
// shuffled query can only hit when its borrowed positives share its topic
// (then it hits exactly when the unshuffled query does) or by chance, so
// recall collapses to about the same-topic fraction.
TEST(SplitHeldOut, PermutationControlCollapses) {
  auto cfg = small(9);
  cfg.queries_per_task = 300;
  const auto s = generate(cfg);
  const auto [train, real] = split_held_out(s.corpus, {"synth-news-t2t"});
  Corpus shuffled = real;
  std::mt19937_64 rng(1);
  std::vector<std::size_t> perm(real.queries.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t i = 0; i < perm.size(); ++i) shuffled.queries[i].positives = real.queries[perm[i]].positives;

  const auto params = ModelParams::init(cfg.dim, FusionMode::ScoreFusion, 1);
  auto store = std::make_shared<const EmbeddingStore>(embed_pool(real.pool, s.features, params));
  const FlatIndex flat = build_flat(store, params.weights);
  SearchFn fn = [&](const QueryEmbedding& q, std::size_t k) { return flat.search(q, k); };
  const auto rr = evaluate(real, fn, MetricSpec{}, {}, s.features, params);
  const auto rs = evaluate(shuffled, fn, MetricSpec{}, {}, s.features, params);

  double floor = 0;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const bool same_topic = s.topic_of.at(real.queries[i].qid) == s.topic_of.at(real.queries[perm[i]].qid);
    if (same_topic) {
      EXPECT_EQ(rs.per_query[i].hit_primary, rr.per_query[i].hit_primary);
      floor += rr.per_query[i].hit_primary;
    }
  }
  floor /= perm.size();
  EXPECT_GT(rr.average_primary, 0.5);
  EXPECT_GE(rs.average_primary, floor);
  // cross-topic hits come from topics the untrained text space blurs together
  EXPECT_LT(rs.average_primary - floor, 0.1);
  EXPECT_LT(rs.average_primary, rr.average_primary - 0.3);
}
