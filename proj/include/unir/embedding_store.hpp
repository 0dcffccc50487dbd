#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "unir/linalg.hpp"

namespace unir {

enum class FusionMode : std::uint8_t { FeatureFusion = 0, ScoreFusion = 1 };

std::string_view fusion_mode_name(FusionMode m);  // "feature" | "score"
FusionMode parse_fusion_mode(std::string_view s);

// Dense row store of candidate (or raw image feature) vectors.
//
// Feature mode keeps one matrix. Score mode keeps an image matrix and a text
// matrix; a missing modality is a zero row with its presence bit cleared.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(FusionMode mode, std::size_t dim);

  FusionMode mode() const { return mode_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  const std::vector<std::string>& ids() const { return ids_; }
  std::optional<std::size_t> row_of(std::string_view id) const;

  // Feature mode only.
  void add(std::string id, std::span<const float> fused);
  // Score mode only; absent spans become zero placeholders.
  void add(std::string id, std::optional<std::span<const float>> image,
           std::optional<std::span<const float>> text);

  std::span<const float> fused_row(std::size_t i) const;
  std::span<const float> image_row(std::size_t i) const;
  std::span<const float> text_row(std::size_t i) const;
  bool has_image(std::size_t i) const { return image_present_[i] != 0; }
  bool has_text(std::size_t i) const { return text_present_[i] != 0; }

  std::span<const float> fused_matrix() const { return fused_; }
  std::span<const float> image_matrix() const { return image_; }
  std::span<const float> text_matrix() const { return text_; }

  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
    return a.mode_ == b.mode_ && a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.fused_ == b.fused_ &&
           a.image_ == b.image_ && a.text_ == b.text_ && a.image_present_ == b.image_present_ &&
           a.text_present_ == b.text_present_;
  }

 private:
  void add_id(std::string id);

  FusionMode mode_ = FusionMode::FeatureFusion;
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> row_by_id_;
  std::vector<float> fused_;
  std::vector<float> image_;
  std::vector<float> text_;
  std::vector<std::uint8_t> image_present_;
  std::vector<std::uint8_t> text_present_;
};

// Binary layout (little-endian): "UNIR", u16 version = 1, u8 mode
// (0 = feature, 1 = score), u32 dim, u64 count, ids as (u16 len, utf8),
// then either count x dim f32 (feature) or a presence bitmask of 2 bits per
// row (bit 2i = image, bit 2i+1 = text, LSB first, byte padded) followed by
// the image and text matrices (score). A CRC-32 of every preceding byte
// closes the file.
std::vector<std::uint8_t> serialize_embeddings(const EmbeddingStore& store);
EmbeddingStore deserialize_embeddings(std::span<const std::uint8_t> bytes);

void write_embeddings(const EmbeddingStore& store, const std::filesystem::path& path);
EmbeddingStore read_embeddings(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace unir
