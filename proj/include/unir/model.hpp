#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "unir/corpus.hpp"
#include "unir/embedding_store.hpp"
#include "unir/encoders.hpp"
#include "unir/fusion.hpp"
#include "unir/index.hpp"

namespace unir {

inline const double kInitialLogInvTemperature = std::log(1.0 / 0.07);

// Every trainable quantity of the toy retriever.
struct ModelParams {
  FusionMode mode = FusionMode::ScoreFusion;
  TextEncoderParams text;
  ImageEncoderParams image;
  FusionWeights weights;
  Matrix fusion_projection;  // dim x 2dim, feature mode only
  double log_inv_temperature = kInitialLogInvTemperature;

  std::size_t dim() const { return text.dim(); }
  double temperature() const { return std::exp(-log_inv_temperature); }

  // Encoders start at identity + N(0, 0.01^2); the fusion projection at
  // [I | I] + the same noise.
  static ModelParams init(std::size_t dim, FusionMode mode, std::uint64_t seed);

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.mode == b.mode && a.text.projection == b.text.projection &&
           a.image.projection == b.image.projection && a.weights == b.weights &&
           a.fusion_projection == b.fusion_projection && a.log_inv_temperature == b.log_inv_temperature;
  }
};

// Text fed to the text encoder for a query: the instruction-prefixed text,
// the instruction alone for image-only queries, or nothing.
std::optional<std::string> query_text_input(const QueryInstance& q, const Instruction* instruction);

QueryEmbedding embed_query(const QueryInstance& q, const Instruction* instruction, const EmbeddingStore& features,
                           const ModelParams& params);

// Query from loose inputs, as received by the search service.
QueryEmbedding embed_query_inputs(const std::optional<std::string>& text,
                                  const std::optional<std::string>& image_ref,
                                  const std::optional<std::string>& instruction, const EmbeddingStore& features,
                                  const ModelParams& params);

// Candidate store in the model's fusion mode, rows in pool order.
EmbeddingStore embed_pool(const Pool& pool, const EmbeddingStore& features, const ModelParams& params);

}  // namespace unir
