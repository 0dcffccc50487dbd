#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "unir/embedding_store.hpp"
#include "unir/fusion.hpp"
#include "unir/kernels.hpp"

namespace unir {

struct ScoredId {
  std::string did;
  double score = 0.0;

  friend bool operator==(const ScoredId&, const ScoredId&) = default;
};

// Ranked by score descending, ties by ascending did.
struct RetrievalResult {
  std::vector<ScoredId> entries;

  std::size_t size() const { return entries.size(); }
  friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

// Strict (score desc, did asc) order.
inline bool ranks_before(double sa, const std::string& a, double sb, const std::string& b) {
  return sa != sb ? sa > sb : a < b;
}

using QueryEmbedding = std::variant<ScoreFusionEmbedding, FeatureFusionEmbedding>;

// Selects the top-k of `scores` (indexed like `rows`, or like the store
// when `rows` is empty) under the ranking order.
RetrievalResult select_top_k(std::span<const double> scores, std::span<const std::uint32_t> rows,
                             const std::vector<std::string>& ids, std::size_t k);

// Exhaustive maximum-inner-product search. Score-fusion stores are scored
// in factored form: w3<q, cI> + w4<q, cT> with q = w1 qI + w2 qT.
class FlatIndex {
 public:
  FlatIndex() = default;
  FlatIndex(std::shared_ptr<const EmbeddingStore> store, FusionWeights weights);

  const EmbeddingStore& store() const { return *store_; }
  std::shared_ptr<const EmbeddingStore> store_ptr() const { return store_; }
  const FusionWeights& weights() const { return weights_; }

  // Weighted query vector in the store's space (f64). Throws ModeMismatch, DimMismatch.
  std::vector<double> query_vector(const QueryEmbedding& q) const;

  // Scores for every row, or only `rows` when non-empty.
  void score_rows(std::span<const double> query, std::span<const std::uint32_t> rows, std::span<double> out,
                  kernels::Exec exec) const;

  RetrievalResult search(const QueryEmbedding& q, std::size_t k,
                         kernels::Exec exec = kernels::Exec::Parallel) const;

 private:
  std::shared_ptr<const EmbeddingStore> store_;
  FusionWeights weights_;
};

FlatIndex build_flat(std::shared_ptr<const EmbeddingStore> store, FusionWeights weights = {});
RetrievalResult search_flat(const FlatIndex& index, const QueryEmbedding& q, std::size_t k);

struct KMeansResult {
  std::size_t n_lists = 0;
  std::vector<double> centroids;  // n_lists x dim
  std::vector<std::uint32_t> assignment;
  std::vector<double> inertia_history;  // one entry per assignment step
};

// Lloyd's algorithm with k-means++ seeding; deterministic for a given seed.
// Empty clusters keep their previous centroid.
KMeansResult kmeans(std::span<const float> rows, std::size_t dim, std::size_t n_lists, std::uint64_t seed,
                    std::size_t max_iters, kernels::Exec exec = kernels::Exec::Parallel);

// IVF-style index: rows partitioned into k-means lists; a search scans the
// lists whose centroids have the largest inner product with the query.
class ClusteredIndex {
 public:
  ClusteredIndex(FlatIndex flat, KMeansResult clusters);

  const FlatIndex& flat() const { return flat_; }
  std::size_t n_lists() const { return clusters_.n_lists; }
  const KMeansResult& clusters() const { return clusters_; }
  const std::vector<std::vector<std::uint32_t>>& lists() const { return lists_; }

  std::vector<std::uint32_t> probe_order(std::span<const double> query) const;
  RetrievalResult search(const QueryEmbedding& q, std::size_t k, std::size_t n_probe,
                         kernels::Exec exec = kernels::Exec::Parallel) const;

 private:
  FlatIndex flat_;
  KMeansResult clusters_;
  std::vector<std::vector<std::uint32_t>> lists_;
};

// Clusters the feature matrix, or w3*cI + w4*cT per row in score mode.
// Throws TooFewRows when n_lists exceeds the row count or is zero.
ClusteredIndex build_clustered(std::shared_ptr<const EmbeddingStore> store, FusionWeights weights,
                               std::size_t n_lists, std::uint64_t seed, std::size_t max_iters = 25);
RetrievalResult search_clustered(const ClusteredIndex& index, const QueryEmbedding& q, std::size_t k,
                                 std::size_t n_probe);

}  // namespace unir
