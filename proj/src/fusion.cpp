#include "unir/fusion.hpp"

#include <cmath>

#include "unir/error.hpp"

namespace unir {

namespace {

double dot_opt(const std::optional<Vector>& a, const std::optional<Vector>& b) {
  if (!a || !b) return 0.0;
  return dot(std::span<const float>(*a), std::span<const float>(*b));
}

}  // namespace

bool FusionWeights::finite() const {
  return std::isfinite(w1) && std::isfinite(w2) && std::isfinite(w3) && std::isfinite(w4);
}

std::size_t ScoreFusionEmbedding::dim() const {
  if (image_vec && text_vec && image_vec->size() != text_vec->size())
    throw Error(ErrorCode::DimMismatch, "image and text vectors differ in dim");
  if (image_vec) return image_vec->size();
  if (text_vec) return text_vec->size();
  throw Error(ErrorCode::DimMismatch, "embedding has neither image nor text vector");
}

Vector fuse_score_level(const ScoreFusionEmbedding& e, double wa, double wb) {
  const std::size_t dim = e.dim();
  Vector out(dim, 0.0f);
  for (std::size_t i = 0; i < dim; ++i) {
    double v = 0.0;
    if (e.image_vec) v += wa * (*e.image_vec)[i];
    if (e.text_vec) v += wb * (*e.text_vec)[i];
    out[i] = static_cast<float>(v);
  }
  return out;
}

double similarity_score_fusion(const ScoreFusionEmbedding& q, const ScoreFusionEmbedding& c,
                               const FusionWeights& w) {
  if (q.dim() != c.dim()) throw Error(ErrorCode::DimMismatch, "query and candidate dims differ");
  return w.w1 * w.w3 * dot_opt(q.image_vec, c.image_vec) + w.w2 * w.w4 * dot_opt(q.text_vec, c.text_vec) +
         w.w1 * w.w4 * dot_opt(q.image_vec, c.text_vec) + w.w2 * w.w3 * dot_opt(q.text_vec, c.image_vec);
}

double similarity_feature_fusion(const FeatureFusionEmbedding& q, const FeatureFusionEmbedding& c) {
  if (q.fused_vec.size() != c.fused_vec.size())
    throw Error(ErrorCode::DimMismatch, "fused vectors differ in dim");
  return dot(std::span<const float>(q.fused_vec), std::span<const float>(c.fused_vec));
}

std::vector<double> fuse_feature_level_f64(std::span<const double> img, std::span<const double> txt,
                                           const Matrix& proj) {
  const std::size_t dim = proj.rows();
  if (proj.cols() != 2 * dim || img.size() != dim || txt.size() != dim)
    throw Error(ErrorCode::DimMismatch, "feature fusion projection must be dim x 2dim");
  std::vector<double> out(dim, 0.0);
  for (std::size_t r = 0; r < dim; ++r) {
    auto row = proj.row(r);
    out[r] = dot(row.first(dim), img) + dot(row.last(dim), txt);
  }
  normalize_in_place(out);
  return out;
}

FeatureFusionEmbedding fuse_feature_level_toy(const std::optional<Vector>& img, const std::optional<Vector>& txt,
                                              const Matrix& proj) {
  const std::size_t dim = proj.rows();
  auto widen = [dim](const std::optional<Vector>& v) {
    if (!v) return std::vector<double>(dim, 0.0);
    if (v->size() != dim) throw Error(ErrorCode::DimMismatch, "input dim does not match projection");
    return to_double(*v);
  };
  return {to_float(fuse_feature_level_f64(widen(img), widen(txt), proj))};
}

}  // namespace unir
