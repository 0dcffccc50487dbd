#include "unir/encoders.hpp"

#include <random>

#include "unir/embedding_store.hpp"
#include "unir/error.hpp"

namespace unir {

namespace {

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

Matrix noisy_identity(std::size_t dim, std::uint64_t seed) {
  Matrix m = Matrix::identity(dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (double& x : m.data()) x += noise(rng);
  return m;
}

}  // namespace

std::vector<double> hash_features(std::string_view text, std::size_t hash_dim) {
  std::vector<double> v(hash_dim, 0.0);
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) {
      const std::uint64_t h = fnv1a64(text.substr(i, j - i));
      v[h % hash_dim] += (h >> 63) ? -1.0 : 1.0;
    }
    i = j;
  }
  normalize_in_place(v);
  return v;
}

Vector hash_embed_text(std::string_view text, std::size_t hash_dim) {
  return to_float(hash_features(text, hash_dim));
}

TextEncoderParams TextEncoderParams::init(std::size_t dim, std::uint64_t seed) {
  return {noisy_identity(dim, seed), seed};
}

ImageEncoderParams ImageEncoderParams::init(std::size_t dim, std::uint64_t seed) {
  return {noisy_identity(dim, seed), seed};
}

std::string prefixed_text(std::string_view text, std::string_view instruction) {
  std::string out;
  out.reserve(instruction.size() + 1 + text.size());
  out.append(instruction).append(" ").append(text);
  return out;
}

std::string prefixed_text(std::string_view text, const Instruction* instruction) {
  if (!instruction) return std::string(text);
  return prefixed_text(text, instruction->text);
}

std::vector<double> encode_text_f64(std::string_view text, const Matrix& projection) {
  auto v = matvec(projection, hash_features(text, projection.cols()));
  normalize_in_place(v);
  return v;
}

std::vector<double> encode_raw_f64(std::span<const float> raw, const Matrix& projection) {
  if (raw.size() != projection.cols())
    throw Error(ErrorCode::DimMismatch, "raw feature dim " + std::to_string(raw.size()) +
                                            " != encoder dim " + std::to_string(projection.cols()));
  auto v = matvec(projection, to_double(raw));
  normalize_in_place(v);
  return v;
}

Vector encode_text(std::string_view text, const Instruction* instruction, const TextEncoderParams& params) {
  return to_float(encode_text_f64(prefixed_text(text, instruction), params.projection));
}

Vector encode_image_raw(std::span<const float> raw, const ImageEncoderParams& params) {
  return to_float(encode_raw_f64(raw, params.projection));
}

Vector encode_image(std::string_view image_ref, const EmbeddingStore& features, const ImageEncoderParams& params) {
  if (features.mode() != FusionMode::FeatureFusion)
    throw Error(ErrorCode::ModeMismatch, "raw image features must be a feature-mode store");
  auto row = features.row_of(image_ref);
  if (!row) throw Error(ErrorCode::MissingFeature, "no raw feature for image '" + std::string(image_ref) + "'");
  return encode_image_raw(features.fused_row(*row), params);
}

}  // namespace unir
