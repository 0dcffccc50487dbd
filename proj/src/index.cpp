#include "unir/index.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "unir/error.hpp"

namespace unir {

RetrievalResult select_top_k(std::span<const double> scores, std::span<const std::uint32_t> rows,
                             const std::vector<std::string>& ids, std::size_t k) {
  const std::size_t n = scores.size();
  auto id_of = [&](std::size_t j) -> const std::string& { return ids[rows.empty() ? j : rows[j]]; };
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = std::min(k, n);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) { return ranks_before(scores[a], id_of(a), scores[b], id_of(b)); });
  RetrievalResult result;
  result.entries.reserve(take);
  for (std::size_t i = 0; i < take; ++i) result.entries.push_back({id_of(order[i]), scores[order[i]]});
  return result;
}

FlatIndex::FlatIndex(std::shared_ptr<const EmbeddingStore> store, FusionWeights weights)
    : store_(std::move(store)), weights_(weights) {
  if (!store_) throw Error(ErrorCode::ConfigInvalid, "flat index needs a store");
  if (!weights_.finite()) throw Error(ErrorCode::ConfigInvalid, "fusion weights must be finite");
}

std::vector<double> FlatIndex::query_vector(const QueryEmbedding& q) const {
  const std::size_t dim = store_->dim();
  std::vector<double> out(dim, 0.0);
  if (const auto* fe = std::get_if<FeatureFusionEmbedding>(&q)) {
    if (store_->mode() != FusionMode::FeatureFusion)
      throw Error(ErrorCode::ModeMismatch, "feature-fusion query against a score-fusion store");
    if (fe->fused_vec.size() != dim) throw Error(ErrorCode::DimMismatch, "query dim does not match store");
    std::copy(fe->fused_vec.begin(), fe->fused_vec.end(), out.begin());
    return out;
  }
  const auto& se = std::get<ScoreFusionEmbedding>(q);
  if (store_->mode() != FusionMode::ScoreFusion)
    throw Error(ErrorCode::ModeMismatch, "score-fusion query against a feature-fusion store");
  auto accumulate = [&](const std::optional<Vector>& v, double w) {
    if (!v) return;
    if (v->size() != dim) throw Error(ErrorCode::DimMismatch, "query dim does not match store");
    for (std::size_t i = 0; i < dim; ++i) out[i] += w * (*v)[i];
  };
  accumulate(se.image_vec, weights_.w1);
  accumulate(se.text_vec, weights_.w2);
  return out;
}

void FlatIndex::score_rows(std::span<const double> query, std::span<const std::uint32_t> rows, std::span<double> out,
                           kernels::Exec exec) const {
  const std::size_t dim = store_->dim();
  const bool parallel = exec == kernels::Exec::Parallel;
  if (store_->mode() == FusionMode::FeatureFusion) {
    if (rows.empty())
      kernels::inner_products(exec, store_->fused_matrix(), dim, query, out);
    else if (parallel)
      kernels::inner_products_gather_parallel(store_->fused_matrix(), dim, query, rows, out);
    else
      kernels::inner_products_gather_serial(store_->fused_matrix(), dim, query, rows, out);
    return;
  }
  if (rows.empty())
    kernels::fused_scores(exec, store_->image_matrix(), store_->text_matrix(), dim, query, weights_.w3, weights_.w4,
                          out);
  else if (parallel)
    kernels::fused_scores_gather_parallel(store_->image_matrix(), store_->text_matrix(), dim, query, weights_.w3,
                                          weights_.w4, rows, out);
  else
    kernels::fused_scores_gather_serial(store_->image_matrix(), store_->text_matrix(), dim, query, weights_.w3,
                                        weights_.w4, rows, out);
}

RetrievalResult FlatIndex::search(const QueryEmbedding& q, std::size_t k, kernels::Exec exec) const {
  if (k == 0) throw Error(ErrorCode::ConfigInvalid, "k must be at least 1");
  const auto query = query_vector(q);
  std::vector<double> scores(store_->size());
  score_rows(query, {}, scores, exec);
  return select_top_k(scores, {}, store_->ids(), k);
}

FlatIndex build_flat(std::shared_ptr<const EmbeddingStore> store, FusionWeights weights) {
  return FlatIndex(std::move(store), weights);
}

RetrievalResult search_flat(const FlatIndex& index, const QueryEmbedding& q, std::size_t k) {
  return index.search(q, k);
}

namespace {

std::vector<double> seed_plus_plus(std::span<const float> rows, std::size_t dim, std::size_t n_lists,
                                   std::uint64_t seed) {
  const std::size_t n = rows.size() / dim;
  std::mt19937_64 rng(seed);
  std::vector<double> centroids;
  centroids.reserve(n_lists * dim);
  std::vector<bool> chosen(n, false);
  auto take = [&](std::size_t i) {
    chosen[i] = true;
    for (std::size_t d = 0; d < dim; ++d) centroids.push_back(rows[i * dim + d]);
  };
  take(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));

  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < n_lists; ++c) {
    const double* last = centroids.data() + (c - 1) * dim;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = rows[i * dim + d] - last[d];
        s += diff * diff;
      }
      d2[i] = std::min(d2[i], s);
      total += d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        pick = i;
        r -= d2[i];
        if (r < 0.0) break;
      }
    }
    if (pick == n)  // every remaining row coincides with a centroid
      for (std::size_t i = 0; i < n && pick == n; ++i)
        if (!chosen[i]) pick = i;
    take(pick);
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans(std::span<const float> rows, std::size_t dim, std::size_t n_lists, std::uint64_t seed,
                    std::size_t max_iters, kernels::Exec exec) {
  const std::size_t n = dim ? rows.size() / dim : 0;
  if (n_lists == 0 || n_lists > n)
    throw Error(ErrorCode::TooFewRows, "cannot form " + std::to_string(n_lists) + " lists from " +
                                           std::to_string(n) + " rows");
  KMeansResult km;
  km.n_lists = n_lists;
  km.centroids = seed_plus_plus(rows, dim, n_lists, seed);
  km.assignment.assign(n, 0);
  std::vector<double> sq(n);
  std::vector<std::uint32_t> previous;

  auto assign = [&] {
    kernels::assign_nearest(exec, rows, dim, km.centroids, km.assignment, sq);
    double inertia = 0.0;
    for (double s : sq) inertia += s;
    km.inertia_history.push_back(inertia);
  };
  auto update = [&] {
    std::vector<double> sums(n_lists * dim, 0.0);
    std::vector<std::size_t> counts(n_lists, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = km.assignment[i];
      ++counts[c];
      for (std::size_t d = 0; d < dim; ++d) sums[c * dim + d] += rows[i * dim + d];
    }
    for (std::size_t c = 0; c < n_lists; ++c)
      if (counts[c])
        for (std::size_t d = 0; d < dim; ++d)
          km.centroids[c * dim + d] = sums[c * dim + d] / static_cast<double>(counts[c]);
  };

  bool converged = false;
  for (std::size_t it = 0; it < std::max<std::size_t>(max_iters, 1); ++it) {
    assign();
    if (km.assignment == previous) {
      converged = true;
      break;
    }
    previous = km.assignment;
    update();
  }
  if (!converged) assign();
  return km;
}

ClusteredIndex::ClusteredIndex(FlatIndex flat, KMeansResult clusters)
    : flat_(std::move(flat)), clusters_(std::move(clusters)), lists_(clusters_.n_lists) {
  for (std::size_t i = 0; i < clusters_.assignment.size(); ++i)
    lists_[clusters_.assignment[i]].push_back(static_cast<std::uint32_t>(i));
}

std::vector<std::uint32_t> ClusteredIndex::probe_order(std::span<const double> query) const {
  const std::size_t dim = flat_.store().dim();
  std::vector<double> sims(n_lists());
  for (std::size_t c = 0; c < n_lists(); ++c)
    sims[c] = dot(std::span<const double>(clusters_.centroids).subspan(c * dim, dim), query);
  std::vector<std::uint32_t> order(n_lists());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return sims[a] > sims[b]; });
  return order;
}

RetrievalResult ClusteredIndex::search(const QueryEmbedding& q, std::size_t k, std::size_t n_probe,
                                       kernels::Exec exec) const {
  if (k == 0) throw Error(ErrorCode::ConfigInvalid, "k must be at least 1");
  if (n_probe < 1 || n_probe > n_lists())
    throw Error(ErrorCode::ConfigInvalid, "n_probe must be in [1, n_lists]");
  const auto query = flat_.query_vector(q);
  const auto order = probe_order(query);
  std::vector<std::uint32_t> rows;
  for (std::size_t p = 0; p < n_probe; ++p) rows.insert(rows.end(), lists_[order[p]].begin(), lists_[order[p]].end());
  std::vector<double> scores(rows.size());
  if (!rows.empty()) flat_.score_rows(query, rows, scores, exec);
  return select_top_k(scores, rows, flat_.store().ids(), k);
}

ClusteredIndex build_clustered(std::shared_ptr<const EmbeddingStore> store, FusionWeights weights,
                               std::size_t n_lists, std::uint64_t seed, std::size_t max_iters) {
  FlatIndex flat(store, weights);
  const std::size_t dim = store->dim();
  if (n_lists == 0 || n_lists > store->size())
    throw Error(ErrorCode::TooFewRows, "cannot form " + std::to_string(n_lists) + " lists from " +
                                           std::to_string(store->size()) + " rows");
  KMeansResult km;
  if (store->mode() == FusionMode::FeatureFusion) {
    km = kmeans(store->fused_matrix(), dim, n_lists, seed, max_iters);
  } else {
    std::vector<float> fused(store->size() * dim);
    for (std::size_t i = 0; i < store->size(); ++i) {
      auto img = store->image_row(i);
      auto txt = store->text_row(i);
      for (std::size_t d = 0; d < dim; ++d)
        fused[i * dim + d] = static_cast<float>(weights.w3 * img[d] + weights.w4 * txt[d]);
    }
    km = kmeans(fused, dim, n_lists, seed, max_iters);
  }
  return ClusteredIndex(std::move(flat), std::move(km));
}

RetrievalResult search_clustered(const ClusteredIndex& index, const QueryEmbedding& q, std::size_t k,
                                 std::size_t n_probe) {
  return index.search(q, k, n_probe);
}

}  // namespace unir
