#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unir/linalg.hpp"
#include "unir/types.hpp"

namespace unir {

class EmbeddingStore;

inline constexpr std::size_t kDefaultDim = 64;

// Signed feature hashing of whitespace tokens (64-bit FNV-1a per token),
// L2-normalized unless no token was seen.
std::vector<double> hash_features(std::string_view text, std::size_t hash_dim);
Vector hash_embed_text(std::string_view text, std::size_t hash_dim);

struct TextEncoderParams {
  Matrix projection;
  std::uint64_t seed = 0;

  std::size_t dim() const { return projection.rows(); }
  // Identity plus N(0, 0.01^2) noise drawn from `seed`.
  static TextEncoderParams init(std::size_t dim, std::uint64_t seed);
};

struct ImageEncoderParams {
  Matrix projection;
  std::uint64_t seed = 0;

  std::size_t dim() const { return projection.rows(); }
  static ImageEncoderParams init(std::size_t dim, std::uint64_t seed);
};

// "<instruction> <text>", or the bare text when there is no instruction.
std::string prefixed_text(std::string_view text, const Instruction* instruction);
std::string prefixed_text(std::string_view text, std::string_view instruction);

// Double-precision encoder paths shared with training.
std::vector<double> encode_text_f64(std::string_view text, const Matrix& projection);
std::vector<double> encode_raw_f64(std::span<const float> raw, const Matrix& projection);

Vector encode_text(std::string_view text, const Instruction* instruction,
                   const TextEncoderParams& params);
Vector encode_image_raw(std::span<const float> raw, const ImageEncoderParams& params);

// Looks up raw features for `image_ref` in a feature-mode store.
// Throws MissingFeature when absent, DimMismatch when the dims disagree.
Vector encode_image(std::string_view image_ref, const EmbeddingStore& features,
                    const ImageEncoderParams& params);

}  // namespace unir
