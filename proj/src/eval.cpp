#include "unir/eval.hpp"

#include <algorithm>
#include <cctype>
#include <exception>

#include "unir/error.hpp"

namespace unir {

namespace {

bool contains_fashion(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  return name.find("fashion") != std::string::npos;
}

void validate_metric(const DatasetMetric& m) {
  if (m.k_list.empty()) throw Error(ErrorCode::ConfigInvalid, "k list is empty");
  for (std::size_t i = 0; i < m.k_list.size(); ++i) {
    if (m.k_list[i] == 0) throw Error(ErrorCode::ConfigInvalid, "k values must be positive");
    if (i && m.k_list[i] <= m.k_list[i - 1]) throw Error(ErrorCode::ConfigInvalid, "k list must be ascending");
  }
  if (std::find(m.k_list.begin(), m.k_list.end(), m.k_primary) == m.k_list.end())
    throw Error(ErrorCode::ConfigInvalid, "primary k must appear in the k list");
}

}  // namespace

DatasetMetric MetricSpec::for_dataset(const std::string& dataset) const {
  if (auto it = overrides.find(dataset); it != overrides.end()) return it->second;
  return contains_fashion(dataset) ? fashion_metric : default_metric;
}

std::size_t MetricSpec::max_k() const {
  std::size_t k = std::max(default_metric.k_list.back(), fashion_metric.k_list.back());
  for (const auto& [name, m] : overrides) k = std::max(k, m.k_list.back());
  return k;
}

void MetricSpec::validate() const {
  validate_metric(default_metric);
  validate_metric(fashion_metric);
  for (const auto& [name, m] : overrides) validate_metric(m);
}

int recall_at_k(const RetrievalResult& result, const std::set<std::string>& positives, std::size_t k) {
  const std::size_t n = std::min(k, result.entries.size());
  for (std::size_t i = 0; i < n; ++i)
    if (positives.count(result.entries[i].did)) return 1;
  return 0;
}

EvalReport aggregate(std::vector<QueryOutcome> outcomes, const MetricSpec& spec) {
  EvalReport report;
  std::map<RowKey, std::map<std::size_t, std::size_t>> row_hits;
  std::map<TaskKind, std::map<std::size_t, std::size_t>> task_hits;
  std::map<TaskKind, std::size_t> task_counts;
  for (const auto& o : outcomes) {
    const RowKey key{o.task, o.dataset};
    auto& row = report.per_dataset[key];
    row.k_primary = spec.for_dataset(o.dataset).k_primary;
    ++row.queries;
    ++task_counts[o.task];
    for (const auto& [k, hit] : o.hits) {
      row_hits[key][k] += hit;
      task_hits[o.task][k] += hit;
    }
  }
  for (auto& [key, row] : report.per_dataset)
    for (const auto& [k, hits] : row_hits[key]) row.recall[k] = static_cast<double>(hits) / row.queries;
  for (const auto& [task, hits] : task_hits)
    for (const auto& [k, h] : hits) report.per_task[task][k] = static_cast<double>(h) / task_counts[task];

  std::map<std::size_t, std::size_t> rows_with_k;
  for (const auto& [key, row] : report.per_dataset) {
    report.average_primary += row.primary();
    for (const auto& [k, r] : row.recall) {
      report.average[k] += r;
      ++rows_with_k[k];
    }
  }
  if (!report.per_dataset.empty()) report.average_primary /= static_cast<double>(report.per_dataset.size());
  for (auto& [k, sum] : report.average) sum /= static_cast<double>(rows_with_k[k]);
  report.per_query = std::move(outcomes);
  return report;
}

EvalReport evaluate(const Corpus& corpus, const SearchFn& search, const MetricSpec& spec,
                    const EvalOptions& options, const EmbeddingStore& features, const ModelParams& params) {
  spec.validate();
  std::vector<const QueryInstance*> selected;
  for (const auto& q : corpus.queries)
    if (options.datasets.empty() ||
        std::find(options.datasets.begin(), options.datasets.end(), q.dataset) != options.datasets.end())
      selected.push_back(&q);
  if (selected.empty()) throw Error(ErrorCode::EmptyCorpus, "no queries to evaluate");

  const std::size_t k_max = spec.max_k();
  std::vector<QueryOutcome> outcomes(selected.size());
  std::exception_ptr failure;
  const auto n = static_cast<std::int64_t>(selected.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      const QueryInstance& q = *selected[i];
      const Instruction* inst =
          options.use_instructions ? &select_instruction(q, options.instruction_seed) : nullptr;
      QueryOutcome& o = outcomes[i];
      o.qid = q.qid;
      o.dataset = q.dataset;
      o.task = q.task;
      o.top = search(embed_query(q, inst, features, params), k_max);
      const std::set<std::string> positives(q.positives.begin(), q.positives.end());
      const DatasetMetric metric = spec.for_dataset(q.dataset);
      for (std::size_t k : metric.k_list) o.hits[k] = recall_at_k(o.top, positives, k) == 1;
      o.hit_primary = o.hits.at(metric.k_primary);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return aggregate(std::move(outcomes), spec);
}

ErrorBreakdown classify_errors(const Corpus& corpus, const EvalReport& report, const Pool& pool) {
  std::unordered_map<std::string, const QueryInstance*> by_qid;
  for (const auto& q : corpus.queries) by_qid.emplace(q.qid, &q);

  ErrorBreakdown b;
  b.total = report.per_query.size();
  std::size_t modality = 0, domain = 0, other = 0;
  for (const auto& o : report.per_query) {
    if (o.hit_primary) continue;
    ++b.failed;
    const auto it = by_qid.find(o.qid);
    if (it == by_qid.end() || o.top.entries.empty()) {
      ++other;
      continue;
    }
    const QueryInstance& q = *it->second;
    const Candidate& top = pool.get(o.top.entries.front().did);
    if (top.modality != target_modality(q.task))
      ++modality;
    else if (top.domain != pool.get(q.positives.front()).domain)
      ++domain;
    else
      ++other;
  }
  if (b.failed) {
    const double f = static_cast<double>(b.failed);
    b.wrong_modality = modality / f;
    b.wrong_domain = domain / f;
    b.other = other / f;
  }
  return b;
}

}  // namespace unir
