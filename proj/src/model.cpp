#include "unir/model.hpp"

#include <random>

#include "unir/error.hpp"

namespace unir {

ModelParams ModelParams::init(std::size_t dim, FusionMode mode, std::uint64_t seed) {
  ModelParams p;
  p.mode = mode;
  p.text = TextEncoderParams::init(dim, seed * 3 + 1);
  p.image = ImageEncoderParams::init(dim, seed * 3 + 2);
  p.fusion_projection = Matrix(dim, 2 * dim);
  std::mt19937_64 rng(seed * 3 + 3);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t c = 0; c < 2 * dim; ++c)
      p.fusion_projection(r, c) = (c % dim == r ? 1.0 : 0.0) + noise(rng);
  return p;
}

std::optional<std::string> query_text_input(const QueryInstance& q, const Instruction* instruction) {
  if (q.text) return prefixed_text(*q.text, instruction);
  if (instruction) return instruction->text;
  return std::nullopt;
}

namespace {

QueryEmbedding embed_parts(const std::optional<std::string>& text, const std::optional<std::string>& image_ref,
                           const EmbeddingStore& features, const ModelParams& params) {
  std::optional<Vector> img, txt;
  if (image_ref) img = encode_image(*image_ref, features, params.image);
  if (text) txt = to_float(encode_text_f64(*text, params.text.projection));
  if (params.mode == FusionMode::ScoreFusion) return ScoreFusionEmbedding{std::move(img), std::move(txt)};
  return fuse_feature_level_toy(img, txt, params.fusion_projection);
}

}  // namespace

QueryEmbedding embed_query(const QueryInstance& q, const Instruction* instruction, const EmbeddingStore& features,
                           const ModelParams& params) {
  return embed_parts(query_text_input(q, instruction), q.image_ref, features, params);
}

QueryEmbedding embed_query_inputs(const std::optional<std::string>& text, const std::optional<std::string>& image_ref,
                                  const std::optional<std::string>& instruction, const EmbeddingStore& features,
                                  const ModelParams& params) {
  std::optional<std::string> input;
  if (text && instruction)
    input = prefixed_text(*text, *instruction);
  else if (text)
    input = text;
  else if (instruction)
    input = instruction;
  return embed_parts(input, image_ref, features, params);
}

EmbeddingStore embed_pool(const Pool& pool, const EmbeddingStore& features, const ModelParams& params) {
  EmbeddingStore store(params.mode, params.dim());
  for (const auto& c : pool.candidates()) {
    std::optional<Vector> img, txt;
    if (c.image_ref) img = encode_image(*c.image_ref, features, params.image);
    if (c.text) txt = to_float(encode_text_f64(*c.text, params.text.projection));
    if (params.mode == FusionMode::ScoreFusion) {
      std::optional<std::span<const float>> is, ts;
      if (img) is = std::span<const float>(*img);
      if (txt) ts = std::span<const float>(*txt);
      store.add(c.did, is, ts);
    } else {
      store.add(c.did, fuse_feature_level_toy(img, txt, params.fusion_projection).fused_vec);
    }
  }
  return store;
}

}  // namespace unir
