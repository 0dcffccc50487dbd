#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "unir/corpus.hpp"
#include "unir/index.hpp"
#include "unir/model.hpp"

namespace unir {

struct DatasetMetric {
  std::size_t k_primary = 5;
  std::vector<std::size_t> k_list = {1, 5, 10};
};

// Recall@5 over {1, 5, 10} by default; datasets whose name contains
// "fashion" (Fashion200K, FashionIQ) use Recall@10 over {10, 20, 50}.
struct MetricSpec {
  DatasetMetric default_metric;
  DatasetMetric fashion_metric{10, {10, 20, 50}};
  std::map<std::string, DatasetMetric> overrides;

  DatasetMetric for_dataset(const std::string& dataset) const;
  std::size_t max_k() const;
  void validate() const;  // throws ConfigInvalid
};

// 1 iff any of the first min(k, |result|) entries is a positive.
int recall_at_k(const RetrievalResult& result, const std::set<std::string>& positives, std::size_t k);

struct QueryOutcome {
  std::string qid;
  std::string dataset;
  TaskKind task = TaskKind::T2I;
  std::map<std::size_t, bool> hits;
  bool hit_primary = false;
  RetrievalResult top;
};

// One (task, dataset) row of the benchmark table.
struct RowKey {
  TaskKind task = TaskKind::T2I;
  std::string dataset;
  friend auto operator<=>(const RowKey&, const RowKey&) = default;
};

struct RowRecall {
  std::size_t k_primary = 5;
  std::map<std::size_t, double> recall;
  std::size_t queries = 0;
  double primary() const { return recall.at(k_primary); }
};

struct EvalReport {
  std::vector<QueryOutcome> per_query;      // corpus order
  std::map<RowKey, RowRecall> per_dataset;  // keyed by (task, dataset)
  std::map<TaskKind, std::map<std::size_t, double>> per_task;  // over the task's queries
  double average_primary = 0.0;  // unweighted mean of each row's primary recall
  std::map<std::size_t, double> average;  // unweighted mean over rows reporting k
};

struct ErrorBreakdown {
  double wrong_modality = 0.0;
  double wrong_domain = 0.0;
  double other = 0.0;
  std::size_t failed = 0;
  std::size_t total = 0;
};

using SearchFn = std::function<RetrievalResult(const QueryEmbedding&, std::size_t k)>;

struct EvalOptions {
  bool use_instructions = true;
  std::uint64_t instruction_seed = 0;
  std::vector<std::string> datasets;  // empty = all
};

// Searches every selected query with k = max k and aggregates recall.
// Throws EmptyCorpus when no query is selected.
EvalReport evaluate(const Corpus& corpus, const SearchFn& search, const MetricSpec& spec,
                    const EvalOptions& options, const EmbeddingStore& features, const ModelParams& params);

// Aggregates precomputed outcomes (exposed for fixtures and re-aggregation).
EvalReport aggregate(std::vector<QueryOutcome> outcomes, const MetricSpec& spec);

// Rank-1 inspection of failed queries (no hit at the row's primary k):
// wrong target modality, else wrong domain vs the first positive, else other.
ErrorBreakdown classify_errors(const Corpus& corpus, const EvalReport& report, const Pool& pool);

}  // namespace unir
