#pragma once

#include <optional>
#include <span>

#include "unir/linalg.hpp"

namespace unir {

// Importance weights: w1/w2 scale the query's image/text parts, w3/w4 the
// candidate's.
struct FusionWeights {
  double w1 = 1.0;
  double w2 = 1.0;
  double w3 = 1.0;
  double w4 = 1.0;

  bool finite() const;
  FusionWeights scaled(double lambda) const { return {w1 * lambda, w2 * lambda, w3 * lambda, w4 * lambda}; }
  friend bool operator==(const FusionWeights&, const FusionWeights&) = default;
};

// Uni-modal vectors of one item; an absent modality acts as a zero vector.
struct ScoreFusionEmbedding {
  std::optional<Vector> image_vec;
  std::optional<Vector> text_vec;

  std::size_t dim() const;  // throws DimMismatch if inconsistent or empty
};

struct FeatureFusionEmbedding {
  Vector fused_vec;
};

// wa * image + wb * text.
Vector fuse_score_level(const ScoreFusionEmbedding& e, double wa, double wb);

// w1w3<qI,cI> + w2w4<qT,cT> + w1w4<qI,cT> + w2w3<qT,cI>.
double similarity_score_fusion(const ScoreFusionEmbedding& q, const ScoreFusionEmbedding& c,
                               const FusionWeights& w);

double similarity_feature_fusion(const FeatureFusionEmbedding& q, const FeatureFusionEmbedding& c);

// Stand-in mix-modality encoder: normalize(proj * [img; txt]) where proj is
// dim x 2dim and missing inputs are zero.
FeatureFusionEmbedding fuse_feature_level_toy(const std::optional<Vector>& img,
                                              const std::optional<Vector>& txt, const Matrix& proj);

// Double-precision variant used by training: proj * [img; txt], normalized.
std::vector<double> fuse_feature_level_f64(std::span<const double> img, std::span<const double> txt,
                                           const Matrix& proj);

}  // namespace unir
