#include "unir/kernels.hpp"

#include <limits>

#if UNIR_HAS_OPENMP
#include <omp.h>
#endif

namespace unir::kernels {

namespace {

inline double dot_row(const float* row, const double* q, std::size_t dim) {
  double s = 0.0;
  for (std::size_t d = 0; d < dim; ++d) s += static_cast<double>(row[d]) * q[d];
  return s;
}

inline void nearest(const float* row, std::size_t dim, std::span<const double> centroids, std::uint32_t& best,
                    double& best_d) {
  const std::size_t k = centroids.size() / dim;
  best = 0;
  best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const double* cen = centroids.data() + c * dim;
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = row[d] - cen[d];
      s += diff * diff;
    }
    if (s < best_d) {
      best_d = s;
      best = static_cast<std::uint32_t>(c);
    }
  }
}

}  // namespace

void set_num_threads(int n) {
#if UNIR_HAS_OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int num_threads() {
#if UNIR_HAS_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void inner_products_serial(std::span<const float> rows, std::size_t dim, std::span<const double> query,
                           std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dot_row(rows.data() + i * dim, query.data(), dim);
}

void inner_products_parallel(std::span<const float> rows, std::size_t dim, std::span<const double> query,
                             std::span<double> out) {
  const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[i] = dot_row(rows.data() + i * dim, query.data(), dim);
}

void fused_scores_serial(std::span<const float> image_rows, std::span<const float> text_rows, std::size_t dim,
                         std::span<const double> query, double w_image, double w_text, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = w_image * dot_row(image_rows.data() + i * dim, query.data(), dim) +
             w_text * dot_row(text_rows.data() + i * dim, query.data(), dim);
}

void fused_scores_parallel(std::span<const float> image_rows, std::span<const float> text_rows, std::size_t dim,
                           std::span<const double> query, double w_image, double w_text, std::span<double> out) {
  const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    out[i] = w_image * dot_row(image_rows.data() + i * dim, query.data(), dim) +
             w_text * dot_row(text_rows.data() + i * dim, query.data(), dim);
}

void inner_products_gather_serial(std::span<const float> rows, std::size_t dim, std::span<const double> query,
                                  std::span<const std::uint32_t> subset, std::span<double> out) {
  for (std::size_t j = 0; j < subset.size(); ++j)
    out[j] = dot_row(rows.data() + std::size_t{subset[j]} * dim, query.data(), dim);
}

void inner_products_gather_parallel(std::span<const float> rows, std::size_t dim, std::span<const double> query,
                                    std::span<const std::uint32_t> subset, std::span<double> out) {
  const auto n = static_cast<std::int64_t>(subset.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < n; ++j)
    out[j] = dot_row(rows.data() + std::size_t{subset[j]} * dim, query.data(), dim);
}

void fused_scores_gather_serial(std::span<const float> image_rows, std::span<const float> text_rows,
                                std::size_t dim, std::span<const double> query, double w_image, double w_text,
                                std::span<const std::uint32_t> subset, std::span<double> out) {
  for (std::size_t j = 0; j < subset.size(); ++j) {
    const std::size_t off = std::size_t{subset[j]} * dim;
    out[j] = w_image * dot_row(image_rows.data() + off, query.data(), dim) +
             w_text * dot_row(text_rows.data() + off, query.data(), dim);
  }
}

void fused_scores_gather_parallel(std::span<const float> image_rows, std::span<const float> text_rows,
                                  std::size_t dim, std::span<const double> query, double w_image, double w_text,
                                  std::span<const std::uint32_t> subset, std::span<double> out) {
  const auto n = static_cast<std::int64_t>(subset.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < n; ++j) {
    const std::size_t off = std::size_t{subset[j]} * dim;
    out[j] = w_image * dot_row(image_rows.data() + off, query.data(), dim) +
             w_text * dot_row(text_rows.data() + off, query.data(), dim);
  }
}

void assign_nearest_serial(std::span<const float> rows, std::size_t dim, std::span<const double> centroids,
                           std::span<std::uint32_t> assignment, std::span<double> sq_dist) {
  for (std::size_t i = 0; i < assignment.size(); ++i)
    nearest(rows.data() + i * dim, dim, centroids, assignment[i], sq_dist[i]);
}

void assign_nearest_parallel(std::span<const float> rows, std::size_t dim, std::span<const double> centroids,
                             std::span<std::uint32_t> assignment, std::span<double> sq_dist) {
  const auto n = static_cast<std::int64_t>(assignment.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) nearest(rows.data() + i * dim, dim, centroids, assignment[i], sq_dist[i]);
}

}  // namespace unir::kernels
