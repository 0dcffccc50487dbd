// One PASS/FAIL line per acceptance criterion; exits non-zero on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "../test_util.hpp"
#include "unir/error.hpp"
#include "unir/eval.hpp"
#include "unir/experiments.hpp"
#include "unir/fusion.hpp"
#include "unir/index.hpp"
#include "unir/service.hpp"
#include "unir/synthgen.hpp"
#include "unir/train.hpp"

using namespace unir;
namespace fs = std::filesystem;

namespace {

constexpr int kSeeds = 5;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;

// `spent_s` adds time measured outside `body` (shared seed runs).
void report(const std::string& name, double budget_s, const std::function<Verdict()>& body, double spent_s = 0) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = spent_s + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < budget_s;
  const bool pass = v.pass && in_time;
  failures += !pass;
  std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << v.detail
            << fmt("; %.2f s (budget %.0f s%s)", secs, budget_s, in_time ? "" : ", exceeded") << std::endl;
}

// ---- fusion algebra --------------------------------------------------------

ScoreFusionEmbedding random_item(std::mt19937_64& rng, std::size_t dim) {
  ScoreFusionEmbedding e;
  const int presence = std::uniform_int_distribution<int>(1, 3)(rng);
  if (presence & 1) e.image_vec = test::random_vector(rng, dim);
  if (presence & 2) e.text_vec = test::random_vector(rng, dim);
  return e;
}

Verdict fusion_algebra() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> wd(-2.0, 2.0);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t dim = 1 + trial % 128;
    const auto q = random_item(rng, dim), c = random_item(rng, dim);
    const FusionWeights w{wd(rng), wd(rng), wd(rng), wd(rng)};
    long double oracle = 0;
    for (std::size_t i = 0; i < dim; ++i) {
      auto at = [i](const std::optional<Vector>& v) -> long double { return v ? (*v)[i] : 0.0L; };
      oracle += (w.w1 * at(q.image_vec) + w.w2 * at(q.text_vec)) * (w.w3 * at(c.image_vec) + w.w4 * at(c.text_vec));
    }
    const double four = similarity_score_fusion(q, c, w);
    worst = std::max<double>(worst, std::fabs(four - oracle) / std::max(std::fabs(oracle), 1e-12L));
  }
  return {worst <= 1e-5, fmt("max relative error %.2e over 1000 pairs (tol 1e-5)", worst)};
}

// ---- retrieval oracle ------------------------------------------------------

std::shared_ptr<const EmbeddingStore> random_store(std::mt19937_64& rng, FusionMode mode, std::size_t n,
                                                   std::size_t dim) {
  auto s = std::make_shared<EmbeddingStore>(mode, dim);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "d" + std::to_string(i);
    if (mode == FusionMode::FeatureFusion) {
      s->add(id, test::random_vector(rng, dim));
    } else {
      const auto a = test::random_vector(rng, dim), b = test::random_vector(rng, dim);
      std::optional<std::span<const float>> ia, tb;
      if (i % 3 != 0) ia = std::span<const float>(a);
      if (i % 3 != 1) tb = std::span<const float>(b);
      s->add(id, ia, tb);
    }
  }
  return s;
}

std::vector<std::string> sort_oracle(const EmbeddingStore& s, const QueryEmbedding& q, const FusionWeights& w,
                                     std::size_t k) {
  std::vector<std::pair<double, std::string>> all;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double score = 0;
    if (s.mode() == FusionMode::FeatureFusion) {
      const auto& fq = std::get<FeatureFusionEmbedding>(q).fused_vec;
      for (std::size_t d = 0; d < s.dim(); ++d) score += double(fq[d]) * s.fused_row(i)[d];
    } else {
      const auto& sq = std::get<ScoreFusionEmbedding>(q);
      double a = 0, b = 0;
      for (std::size_t d = 0; d < s.dim(); ++d) {
        const double qd = w.w1 * (sq.image_vec ? double((*sq.image_vec)[d]) : 0.0) +
                          w.w2 * (sq.text_vec ? double((*sq.text_vec)[d]) : 0.0);
        a += qd * s.image_row(i)[d];
        b += qd * s.text_row(i)[d];
      }
      score = w.w3 * a + w.w4 * b;
    }
    all.emplace_back(score, s.ids()[i]);
  }
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
    return x.first != y.first ? x.first > y.first : x.second < y.second;
  });
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) ids.push_back(all[i].second);
  return ids;
}

std::vector<std::string> ids_of(const RetrievalResult& r) {
  std::vector<std::string> ids;
  for (const auto& e : r.entries) ids.push_back(e.did);
  return ids;
}

Verdict retrieval_oracle() {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> wd(0.2, 1.8);
  int flat_bad = 0, full_probe_bad = 0, monotone_bad = 0, queries = 0;
  for (int corpus = 0; corpus < 100; ++corpus) {
    const std::size_t n = 1 + (corpus * 37 + 13) % 1000;
    const std::size_t dim = 8 + corpus % 25;
    const FusionMode mode = corpus % 2 ? FusionMode::ScoreFusion : FusionMode::FeatureFusion;
    const auto store = random_store(rng, mode, n, dim);
    const FusionWeights w = mode == FusionMode::ScoreFusion ? FusionWeights{wd(rng), wd(rng), wd(rng), wd(rng)}
                                                            : FusionWeights{};
    const FlatIndex flat = build_flat(store, w);
    const std::size_t lists = std::max<std::size_t>(1, std::min<std::size_t>(16, n / 8));
    const ClusteredIndex clustered = build_clustered(store, w, lists, corpus);
    for (int qn = 0; qn < 5; ++qn, ++queries) {
      const QueryEmbedding q = mode == FusionMode::FeatureFusion
                                   ? QueryEmbedding(FeatureFusionEmbedding{test::random_vector(rng, dim)})
                                   : QueryEmbedding(ScoreFusionEmbedding{test::random_vector(rng, dim),
                                                                         test::random_vector(rng, dim)});
      const auto truth = flat.search(q, 10);
      flat_bad += ids_of(truth) != sort_oracle(*store, q, w, 10);
      full_probe_bad += clustered.search(q, 10, lists) != truth;
      std::set<std::string> truth_ids;
      for (const auto& e : truth.entries) truth_ids.insert(e.did);
      double prev = -1;
      for (std::size_t p = 1; p <= lists; ++p) {
        double hit = 0;
        for (const auto& e : clustered.search(q, 10, p).entries) hit += truth_ids.count(e.did);
        const double recall = truth_ids.empty() ? 1.0 : hit / truth_ids.size();
        if (recall < prev) {
          ++monotone_bad;
          break;
        }
        prev = recall;
      }
    }
  }
  return {flat_bad == 0 && full_probe_bad == 0 && monotone_bad == 0,
          fmt("100 corpora (1..1000 rows), %d queries: flat!=sort %d, full-probe!=flat %d, non-monotone %d", queries,
              flat_bad, full_probe_bad, monotone_bad)};
}

// ---- gradient oracle -------------------------------------------------------

std::vector<double> unit_double(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> g;
  std::vector<double> v(dim);
  for (auto& x : v) x = g(rng);
  normalize_in_place(v);
  return v;
}

Batch random_batch(std::mt19937_64& rng, std::size_t n, std::size_t negatives, std::size_t dim) {
  std::uniform_int_distribution<int> pres(1, 3);
  auto item = [&] {
    ItemInput it;
    const int p = pres(rng);
    if (p & 1) it.text_features = unit_double(rng, dim);
    if (p & 2) it.image_raw = test::random_vector(rng, dim, false);
    return it;
  };
  Batch b;
  for (std::size_t i = 0; i < n; ++i) b.queries.push_back(item());
  for (std::size_t i = 0; i < n + negatives; ++i) b.candidates.push_back(item());
  return b;
}

Verdict gradient_oracle() {
  std::mt19937_64 rng(33);
  double worst = 0;
  std::string worst_param;
  std::size_t checked = 0;
  for (int b = 0; b < 20; ++b) {
    const FusionMode mode = b % 2 ? FusionMode::FeatureFusion : FusionMode::ScoreFusion;
    ModelParams p = ModelParams::init(8, mode, b);
    std::normal_distribution<double> g(0.0, 0.2);
    for (double& x : p.text.projection.data()) x += g(rng);
    for (double& x : p.image.projection.data()) x += g(rng);
    for (double& x : p.fusion_projection.data()) x += g(rng);
    p.weights = {1.0 + g(rng), 1.0 + g(rng), 1.0 + g(rng), 1.0 + g(rng)};
    p.log_inv_temperature = std::log(1.0 / 0.2);
    const auto r = gradient_check(p, random_batch(rng, 6, b % 3, 8));
    checked += r.checked;
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      worst_param = r.worst_parameter;
    }
  }
  return {worst <= 1e-4, fmt("20 batches, %zu parameters checked, max relative error %.2e at %s (tol 1e-4)", checked,
                             worst, worst_param.c_str())};
}

// ---- metric correctness ----------------------------------------------------

RetrievalResult ranked(std::vector<std::string> ids) {
  RetrievalResult r;
  double s = 1.0;
  for (auto& id : ids) r.entries.push_back({std::move(id), s -= 0.001});
  return r;
}

Verdict metric_correctness() {
  std::vector<std::string> problems;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };
  // multi-positive overlap: any positive inside the top k counts once
  check(recall_at_k(ranked({"a", "p2", "p1"}), {"p1", "p2"}, 2) == 1, "overlap at 2");
  check(recall_at_k(ranked({"a", "b", "p1"}), {"p1", "p2"}, 2) == 0, "miss at 2");
  check(recall_at_k(ranked({"p1", "p2"}), {"p1", "p2"}, 1) == 1, "two positives count once");
  check(recall_at_k(ranked({"a"}), {"p"}, 10) == 0, "short list");

  const MetricSpec spec;
  check(spec.for_dataset("Fashion200K").k_primary == 10 && spec.for_dataset("FashionIQ").k_primary == 10,
        "fashion R@10");
  check(spec.for_dataset("mscoco").k_primary == 5, "default R@5");

  auto outcome = [&](const std::string& qid, const std::string& ds, const RetrievalResult& top,
                     const std::set<std::string>& pos) {
    QueryOutcome o{qid, ds, TaskKind::T2I, {}, false, top};
    const auto m = spec.for_dataset(ds);
    for (std::size_t k : m.k_list) o.hits[k] = recall_at_k(top, pos, k);
    o.hit_primary = recall_at_k(top, pos, m.k_primary);
    return o;
  };
  std::vector<std::string> pad(12);
  for (std::size_t i = 0; i < pad.size(); ++i) pad[i] = "n" + std::to_string(i);
  auto at_rank = [&](std::size_t r) {
    auto ids = pad;
    ids.insert(ids.begin() + (r - 1), "p");
    return ranked(ids);
  };
  // coco: hits at ranks 1, 3, 7 and one miss -> R@1 1/4, R@5 2/4, R@10 3/4
  // fashion200k: hits at ranks 8 and 11 -> R@10 1/2, R@20 2/2
  std::vector<QueryOutcome> o = {outcome("q1", "coco", at_rank(1), {"p"}), outcome("q2", "coco", at_rank(3), {"p"}),
                                 outcome("q3", "coco", at_rank(7), {"p"}), outcome("q4", "coco", ranked(pad), {"p"}),
                                 outcome("f1", "fashion200k", at_rank(8), {"p"}),
                                 outcome("f2", "fashion200k", at_rank(11), {"p"})};
  const auto r = aggregate(o, spec);
  const auto& coco = r.per_dataset.at({TaskKind::T2I, "coco"});
  const auto& fashion = r.per_dataset.at({TaskKind::T2I, "fashion200k"});
  check(coco.recall.at(1) == 0.25 && coco.recall.at(5) == 0.5 && coco.recall.at(10) == 0.75, "coco recalls");
  check(fashion.recall.at(10) == 0.5 && fashion.recall.at(20) == 1.0 && fashion.primary() == 0.5, "fashion recalls");
  check(r.average_primary == 0.5, "average primary");

  // error fractions over failures sum to one on a synthetic corpus
  SynthConfig cfg;
  cfg.queries_per_task = 80;
  cfg.pool_per_task = 60;
  cfg.seed = 4;
  const auto s = generate(cfg);
  const auto params = ModelParams::init(cfg.dim, FusionMode::ScoreFusion, 4);
  const FlatIndex flat =
      build_flat(std::make_shared<const EmbeddingStore>(embed_pool(s.corpus.pool, s.features, params)), params.weights);
  const auto rep = evaluate(s.corpus, [&](const QueryEmbedding& q, std::size_t k) { return flat.search(q, k); },
                            spec, {}, s.features, params);
  const auto b = classify_errors(s.corpus, rep, s.corpus.pool);
  const double sum = b.wrong_modality + b.wrong_domain + b.other;
  check(b.failed > 0 && std::fabs(sum - 1.0) < 1e-12, "error fractions sum");

  std::string detail = problems.empty() ? "fixtures exact" : "failed:";
  for (const auto& p : problems) detail += " [" + p + "]";
  return {problems.empty(), detail + fmt("; synthetic error fractions sum to %.15f over %zu failures", sum, b.failed)};
}

// ---- experiments on the demo plan ------------------------------------------

struct SeedRun {
  std::uint64_t seed = 0;
  ComparisonReport comparison;
  HeldOutReport held_out;
};

std::vector<SeedRun> demo_runs;
double comparison_seconds = 0, held_out_seconds = 0;

void run_demo_seeds(const ExperimentPlan& base) {
  for (int i = 0; i < kSeeds; ++i) {
    const auto plan = base.with_seed(base.seed + i);
    const auto data = load_corpus(plan);
    SeedRun run;
    run.seed = plan.seed;
    auto t0 = std::chrono::steady_clock::now();
    run.comparison = run_plan(plan, data);
    auto t1 = std::chrono::steady_clock::now();
    run.held_out = run_held_out(plan, data, plan.held_out);
    auto t2 = std::chrono::steady_clock::now();
    comparison_seconds += std::chrono::duration<double>(t1 - t0).count();
    held_out_seconds += std::chrono::duration<double>(t2 - t1).count();
    demo_runs.push_back(std::move(run));
  }
}

Verdict instruction_tuning(const ExperimentPlan& plan) {
  const std::string treat = *plan.delta_treatment, base = *plan.delta_baseline;
  std::size_t queries = load_corpus(plan).corpus.queries.size();
  int lower = 0, tuned_ok = 0, untuned_ok = 0;
  std::string per_seed;
  for (const auto& r : demo_runs) {
    const double t = r.comparison.at(treat).global_errors.wrong_modality;
    const double b = r.comparison.at(base).global_errors.wrong_modality;
    lower += t < b;
    tuned_ok += t < 0.15;
    untuned_ok += b > 0.30;
    per_seed += fmt(" s%llu %.3f/%.3f", static_cast<unsigned long long>(r.seed), t, b);
  }
  const bool pass = lower >= 4 && tuned_ok == kSeeds && untuned_ok == kSeeds && queries >= 2000;
  return {pass, fmt("%zu queries; wrong-modality %s/%s per seed:", queries, treat.c_str(), base.c_str()) + per_seed +
                    fmt("; lower in %d/%d seeds, tuned<0.15 in %d, untuned>0.30 in %d", lower, kSeeds,
                        tuned_ok, untuned_ok)};
}

Verdict held_out_generalization(const ExperimentPlan& plan) {
  const std::string treat = *plan.delta_treatment, base = *plan.delta_baseline;
  std::string untrained;
  for (const auto& c : plan.conditions)
    if (!c.train) untrained = c.name;
  if (untrained.empty()) return {false, "demo plan has no untrained condition"};
  int ge = 0, above_untrained = 0;
  std::string per_seed;
  for (const auto& r : demo_runs) {
    const double t = r.held_out.at(treat).held_out.average_primary;
    const double b = r.held_out.at(base).held_out.average_primary;
    const double u = r.held_out.at(untrained).held_out.average_primary;
    ge += t >= b;
    above_untrained += t >= u && b >= u;
    per_seed += fmt(" s%llu %.3f/%.3f/%.3f", static_cast<unsigned long long>(r.seed), t, b, u);
  }
  const bool pass = ge >= 4 && above_untrained == kSeeds;
  std::string held;
  for (const auto& h : plan.held_out) held += (held.empty() ? "" : ",") + h;
  return {pass, "held out " + held + fmt("; R@5 %s/%s/%s per seed:", treat.c_str(), base.c_str(), untrained.c_str()) +
                    per_seed +
                    fmt("; tuned>=untuned in %d/%d, both>=untrained in %d/%d", ge, kSeeds,
                        above_untrained, kSeeds)};
}

std::map<std::string, std::string> files_in(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    out[e.path().filename().string()] = os.str();
  }
  return out;
}

Verdict determinism(const ExperimentPlan& plan) {
  // embedding files: write, read, write again; a flipped byte must be caught
  std::mt19937_64 rng(44);
  int round_trip_bad = 0, corruption_missed = 0;
  for (FusionMode mode : {FusionMode::FeatureFusion, FusionMode::ScoreFusion}) {
    const auto store = random_store(rng, mode, 257, 48);
    const auto bytes = serialize_embeddings(*store);
    const auto back = deserialize_embeddings(bytes);
    round_trip_bad += !(back == *store) || serialize_embeddings(back) != bytes;
    for (std::size_t pos = 7; pos < bytes.size(); pos += 97) {
      auto bad = bytes;
      bad[pos] ^= 0x10;
      try {
        deserialize_embeddings(bad);
        ++corruption_missed;
      } catch (const Error&) {
      }
    }
  }

  // two full runs of the demo plan with the same seed
  test::TempDir a("accept-a"), b("accept-b");
  write_comparison(demo_runs.front().comparison, plan, a.path());
  write_comparison(run_plan(plan), plan, b.path());
  const auto fa = files_in(a.path()), fb = files_in(b.path());
  std::size_t differing = 0;
  for (const auto& [name, content] : fa) differing += !fb.count(name) || fb.at(name) != content;
  const bool pass = round_trip_bad == 0 && corruption_missed == 0 && differing == 0 && fa.size() == fb.size();
  return {pass, fmt("embedding round trips bad %d, corruptions missed %d; rerun artifacts %zu, differing %zu",
                    round_trip_bad, corruption_missed, fa.size(), differing)};
}

// ---- service ---------------------------------------------------------------

Verdict service() {
  SynthConfig cfg;
  cfg.queries_per_task = 10;
  cfg.pool_per_task = 200;
  cfg.seed = 5;
  auto s = generate(cfg);
  auto engine = std::make_shared<SearchEngine>();
  engine->params = ModelParams::init(cfg.dim, FusionMode::ScoreFusion, 5);
  engine->features = std::make_shared<const EmbeddingStore>(std::move(s.features));
  engine->index.index = build_flat(
      std::make_shared<const EmbeddingStore>(embed_pool(s.corpus.pool, *engine->features, engine->params)),
      engine->params.weights);
  SearchService svc(engine);
  HttpServer server(svc);
  const int port = server.bind("127.0.0.1", 0);
  std::jthread loop([&] { server.listen(); });
  server.wait_until_ready();
  struct Stop {
    HttpServer& s;
    ~Stop() { s.stop(); }
  } stopper{server};

  std::vector<std::string> bodies, expected;
  const auto& images = engine->features->ids();
  for (int i = 0; i < 100; ++i) {
    nlohmann::json b = {{"k", 1 + i % 20}};
    if (i % 3 != 1) b["txt"] = "query words " + std::to_string(i);
    if (i % 3 != 0) b["img_id"] = images[i % images.size()];
    if (i % 2) b["instruction"] = "retrieve a news image";
    bodies.push_back(b.dump());
    expected.push_back(svc.search(bodies.back()).body);
  }
  std::vector<std::future<std::pair<int, std::string>>> futures;
  for (const auto& body : bodies)
    futures.push_back(std::async(std::launch::async, [port, body] {
      httplib::Client cli("127.0.0.1", port);
      cli.set_read_timeout(60);
      const auto res = cli.Post("/search", body, "application/json");
      return res ? std::make_pair(res->status, res->body) : std::make_pair(-1, httplib::to_string(res.error()));
    }));
  int mismatched = 0;
  for (std::size_t i = 0; i < futures.size(); ++i) {
    const auto [status, body] = futures[i].get();
    mismatched += status != 200 || body != expected[i];
  }
  httplib::Client cli("127.0.0.1", port);
  const auto h = cli.Get("/healthz");
  const bool health = h && h->status == 200 && h->body == "ok";
  return {mismatched == 0 && health,
          fmt("100 concurrent /search requests, %d differ from sequential; /healthz %s", mismatched,
              health ? "200 ok" : "failed")};
}

}  // namespace

int main() {
  report("fusion-algebra", 1, fusion_algebra);
  report("retrieval-oracle", 30, retrieval_oracle);
  report("gradient-oracle", 60, gradient_oracle);
  report("metric-correctness", 60, metric_correctness);

  const ExperimentPlan plan = read_plan(UNIR_DEMO_PLAN);
  const auto t0 = std::chrono::steady_clock::now();
  run_demo_seeds(plan);
  std::cout << fmt("(demo plan, %d seeds: %.1f s)\n", kSeeds,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  report("instruction-tuning", 600, [&] { return instruction_tuning(plan); }, comparison_seconds);
  report("held-out-generalization", 600, [&] { return held_out_generalization(plan); }, held_out_seconds);
  report("determinism-and-formats", 120, [&] { return determinism(plan); });
  report("service", 60, service);

  std::cout << (failures ? fmt("%d criteria failed\n", failures) : std::string("all criteria passed\n"));
  return failures ? 1 : 0;
}
