#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

// Data-parallel inner loops. Every kernel has a serial reference and an
// OpenMP version; both compute each output element with the same sequential
// f64 accumulation, so results are bit-identical.
namespace unir::kernels {

enum class Exec { Serial, Parallel };

void set_num_threads(int n);  // n <= 0 keeps the runtime default
int num_threads();

// out[i] = <rows[i], query>
void inner_products_serial(std::span<const float> rows, std::size_t dim, std::span<const double> query,
                           std::span<double> out);
void inner_products_parallel(std::span<const float> rows, std::size_t dim, std::span<const double> query,
                             std::span<double> out);

// out[i] = w_image * <image_rows[i], query> + w_text * <text_rows[i], query>
// where `query` is the already weighted query fusion w1*qI + w2*qT.
void fused_scores_serial(std::span<const float> image_rows, std::span<const float> text_rows, std::size_t dim,
                         std::span<const double> query, double w_image, double w_text, std::span<double> out);
void fused_scores_parallel(std::span<const float> image_rows, std::span<const float> text_rows, std::size_t dim,
                           std::span<const double> query, double w_image, double w_text, std::span<double> out);

// Nearest centroid by squared L2 distance, ties to the lowest centroid index.
void assign_nearest_serial(std::span<const float> rows, std::size_t dim, std::span<const double> centroids,
                           std::span<std::uint32_t> assignment, std::span<double> sq_dist);
void assign_nearest_parallel(std::span<const float> rows, std::size_t dim, std::span<const double> centroids,
                             std::span<std::uint32_t> assignment, std::span<double> sq_dist);

// Gathered variants: out[j] scores row subset[j].
void inner_products_gather_serial(std::span<const float> rows, std::size_t dim, std::span<const double> query,
                                  std::span<const std::uint32_t> subset, std::span<double> out);
void inner_products_gather_parallel(std::span<const float> rows, std::size_t dim, std::span<const double> query,
                                    std::span<const std::uint32_t> subset, std::span<double> out);
void fused_scores_gather_serial(std::span<const float> image_rows, std::span<const float> text_rows,
                                std::size_t dim, std::span<const double> query, double w_image, double w_text,
                                std::span<const std::uint32_t> subset, std::span<double> out);
void fused_scores_gather_parallel(std::span<const float> image_rows, std::span<const float> text_rows,
                                  std::size_t dim, std::span<const double> query, double w_image, double w_text,
                                  std::span<const std::uint32_t> subset, std::span<double> out);

inline void inner_products(Exec e, std::span<const float> rows, std::size_t dim, std::span<const double> query,
                           std::span<double> out) {
  e == Exec::Serial ? inner_products_serial(rows, dim, query, out) : inner_products_parallel(rows, dim, query, out);
}

inline void fused_scores(Exec e, std::span<const float> image_rows, std::span<const float> text_rows,
                         std::size_t dim, std::span<const double> query, double w_image, double w_text,
                         std::span<double> out) {
  e == Exec::Serial ? fused_scores_serial(image_rows, text_rows, dim, query, w_image, w_text, out)
                    : fused_scores_parallel(image_rows, text_rows, dim, query, w_image, w_text, out);
}

inline void assign_nearest(Exec e, std::span<const float> rows, std::size_t dim, std::span<const double> centroids,
                           std::span<std::uint32_t> assignment, std::span<double> sq_dist) {
  e == Exec::Serial ? assign_nearest_serial(rows, dim, centroids, assignment, sq_dist)
                    : assign_nearest_parallel(rows, dim, centroids, assignment, sq_dist);
}

}  // namespace unir::kernels
