#include <gtest/gtest.h>

#include <json.hpp>

#include "test_util.hpp"
#include "unir/error.hpp"
#include "unir/report.hpp"
#include "unir/synthgen.hpp"

using namespace unir;

namespace {

struct EvalRun {
  EvalReport report;
  ErrorBreakdown errors;
};

EvalRun synth_run(bool instructions) {
  SynthConfig cfg;
  cfg.queries_per_task = 40;
  cfg.pool_per_task = 40;
  cfg.seed = 6;
  static const auto s = generate(cfg);
  const auto params = ModelParams::init(cfg.dim, FusionMode::ScoreFusion, 3);
  auto store = std::make_shared<const EmbeddingStore>(embed_pool(s.corpus.pool, s.features, params));
  const FlatIndex flat = build_flat(store, params.weights);
  SearchFn fn = [&](const QueryEmbedding& q, std::size_t k) { return flat.search(q, k); };
  EvalOptions opts;
  opts.use_instructions = instructions;
  EvalRun r{evaluate(s.corpus, fn, MetricSpec{}, opts, s.features, params), {}};
  r.errors = classify_errors(s.corpus, r.report, s.corpus.pool);
  return r;
}

}  // namespace

TEST(Report, CsvRoundTrip) {
  const EvalRun a = synth_run(true);
  const auto rows = report_rows({&a.report, &a.errors});
  const auto back = parse_report_csv(rows_to_csv(rows));
  EXPECT_EQ(back, rows);
  const std::string csv = render_report({&a.report, &a.errors}, ReportFormat::Csv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "dataset,task,metric,value");
}

TEST(Report, SelfDeltaIsZero) {
  const EvalRun a = synth_run(true);
  const auto rows = report_rows({&a.report, &a.errors}, ReportInput{&a.report, &a.errors});
  ASSERT_FALSE(rows.empty());
  for (const auto& r : rows) {
    ASSERT_TRUE(r.delta.has_value());
    EXPECT_EQ(*r.delta, 0.0);
  }
  const auto back = parse_report_csv(rows_to_csv(rows));
  EXPECT_EQ(back, rows);
}

TEST(Report, DeltaEqualsManualSubtraction) {
  const EvalRun t = synth_run(true), b = synth_run(false);
  const auto tr = report_rows({&t.report, &t.errors});
  const auto br = report_rows({&b.report, &b.errors});
  const auto dr = report_rows({&t.report, &t.errors}, ReportInput{&b.report, &b.errors});
  ASSERT_EQ(tr.size(), dr.size());
  for (std::size_t i = 0; i < dr.size(); ++i) {
    const auto it = std::find_if(br.begin(), br.end(), [&](const ReportRow& x) {
      return x.dataset == dr[i].dataset && x.task == dr[i].task && x.metric == dr[i].metric;
    });
    ASSERT_NE(it, br.end());
    EXPECT_EQ(*dr[i].delta, tr[i].value - it->value);
  }
  EXPECT_EQ(with_baseline(tr, br), dr);
}

TEST(Report, RowLayout) {
  const EvalRun a = synth_run(true);
  const auto rows = report_rows({&a.report, &a.errors});
  auto has = [&](const std::string& d, const std::string& t, const std::string& m) {
    return std::any_of(rows.begin(), rows.end(),
                       [&](const ReportRow& r) { return r.dataset == d && r.task == t && r.metric == m; });
  };
  EXPECT_TRUE(has("synth-news-t2i", "T2I", "R@5"));
  EXPECT_TRUE(has("synth-news-t2i", "T2I", "primary"));
  EXPECT_TRUE(has("average", "all", "primary"));
  EXPECT_TRUE(has("all", "all", "wrong_modality"));
  for (const auto& r : rows)
    if (r.dataset == "average" && r.metric == "primary") EXPECT_DOUBLE_EQ(r.value, a.report.average_primary);
}

TEST(Report, JsonAndText) {
  const EvalRun a = synth_run(true), b = synth_run(false);
  const auto j = nlohmann::json::parse(render_report({&a.report, &a.errors}, ReportFormat::Json));
  EXPECT_EQ(j.at("rows").size(), report_rows({&a.report, &a.errors}).size());
  const std::string text = render_report({&a.report, &a.errors}, ReportFormat::Text, ReportInput{&b.report, &b.errors});
  EXPECT_NE(text.find("synth-misc-i2i"), std::string::npos);
  EXPECT_NE(text.find("wrong_modality"), std::string::npos);
  EXPECT_NE(text.find('('), std::string::npos);
}

TEST(Report, Formats) {
  EXPECT_EQ(parse_report_format("csv"), ReportFormat::Csv);
  try {
    parse_report_format("xml");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownFormat);
  }
  for (double v : {0.1, 1.0 / 3.0, 0.0, -2.5e-9, 123456.789}) EXPECT_EQ(std::stod(format_double(v)), v);
}
