#include "unir/embedding_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "unir/crc32.hpp"
#include "unir/error.hpp"
#include "bytes.hpp"

namespace unir {

using detail::ByteReader;
using detail::ByteWriter;

namespace {

constexpr char kMagic[4] = {'U', 'N', 'I', 'R'};
constexpr std::uint16_t kVersion = 1;

}  // namespace

std::string_view fusion_mode_name(FusionMode m) {
  return m == FusionMode::FeatureFusion ? "feature" : "score";
}

FusionMode parse_fusion_mode(std::string_view s) {
  if (s == "feature") return FusionMode::FeatureFusion;
  if (s == "score") return FusionMode::ScoreFusion;
  throw Error(ErrorCode::ConfigInvalid, "unknown fusion mode '" + std::string(s) + "'");
}

EmbeddingStore::EmbeddingStore(FusionMode mode, std::size_t dim) : mode_(mode), dim_(dim) {
  if (dim == 0) throw Error(ErrorCode::DimMismatch, "embedding dim must be positive");
}

std::optional<std::size_t> EmbeddingStore::row_of(std::string_view id) const {
  auto it = row_by_id_.find(std::string(id));
  if (it == row_by_id_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingStore::add_id(std::string id) {
  if (id.size() > 0xffff) throw Error(ErrorCode::MalformedRecord, "id longer than 65535 bytes");
  if (!row_by_id_.emplace(id, ids_.size()).second)
    throw Error(ErrorCode::DuplicateId, "duplicate embedding id '" + id + "'");
  ids_.push_back(std::move(id));
}

void EmbeddingStore::add(std::string id, std::span<const float> fused) {
  if (mode_ != FusionMode::FeatureFusion)
    throw Error(ErrorCode::ModeMismatch, "single-vector row added to a score-fusion store");
  if (fused.size() != dim_) throw Error(ErrorCode::DimMismatch, "row dim mismatch for '" + id + "'");
  add_id(std::move(id));
  fused_.insert(fused_.end(), fused.begin(), fused.end());
}

void EmbeddingStore::add(std::string id, std::optional<std::span<const float>> image,
                         std::optional<std::span<const float>> text) {
  if (mode_ != FusionMode::ScoreFusion)
    throw Error(ErrorCode::ModeMismatch, "image/text row added to a feature-fusion store");
  if ((image && image->size() != dim_) || (text && text->size() != dim_))
    throw Error(ErrorCode::DimMismatch, "row dim mismatch for '" + id + "'");
  add_id(std::move(id));
  if (image)
    image_.insert(image_.end(), image->begin(), image->end());
  else
    image_.resize(image_.size() + dim_, 0.0f);
  if (text)
    text_.insert(text_.end(), text->begin(), text->end());
  else
    text_.resize(text_.size() + dim_, 0.0f);
  image_present_.push_back(image ? 1 : 0);
  text_present_.push_back(text ? 1 : 0);
}

std::span<const float> EmbeddingStore::fused_row(std::size_t i) const {
  return std::span<const float>(fused_).subspan(i * dim_, dim_);
}
std::span<const float> EmbeddingStore::image_row(std::size_t i) const {
  return std::span<const float>(image_).subspan(i * dim_, dim_);
}
std::span<const float> EmbeddingStore::text_row(std::size_t i) const {
  return std::span<const float>(text_).subspan(i * dim_, dim_);
}

std::vector<std::uint8_t> serialize_embeddings(const EmbeddingStore& store) {
  ByteWriter w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(store.mode()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(store.dim()));
  w.put<std::uint64_t>(store.size());
  for (const auto& id : store.ids()) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(id.size()));
    w.put_bytes(id.data(), id.size());
  }
  if (store.mode() == FusionMode::FeatureFusion) {
    for (float f : store.fused_matrix()) w.put_f32(f);
  } else {
    std::vector<std::uint8_t> mask((store.size() * 2 + 7) / 8, 0);
    for (std::size_t i = 0; i < store.size(); ++i) {
      if (store.has_image(i)) mask[(2 * i) / 8] |= std::uint8_t(1u << ((2 * i) % 8));
      if (store.has_text(i)) mask[(2 * i + 1) / 8] |= std::uint8_t(1u << ((2 * i + 1) % 8));
    }
    w.put_bytes(mask.data(), mask.size());
    for (float f : store.image_matrix()) w.put_f32(f);
    for (float f : store.text_matrix()) w.put_f32(f);
  }
  const std::uint32_t crc = crc32(w.bytes());
  w.put<std::uint32_t>(crc);
  return std::move(w.bytes());
}

EmbeddingStore deserialize_embeddings(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error(ErrorCode::BadMagic, "not an embedding file (bad magic)");
  if (bytes.size() < 4 + 2 + 1 + 4 + 8 + 4)
    throw Error(ErrorCode::ChecksumMismatch, "embedding file truncated");
  if (ByteReader(bytes.subspan(4, 2)).get<std::uint16_t>() != kVersion)
    throw Error(ErrorCode::BadMagic, "unsupported embedding file version");
  const auto body = bytes.first(bytes.size() - 4);
  ByteReader tail(bytes.last(4));
  if (crc32(body) != tail.get<std::uint32_t>())
    throw Error(ErrorCode::ChecksumMismatch, "embedding file CRC mismatch");

  ByteReader r(body);
  r.take(6);
  const auto mode_byte = r.get<std::uint8_t>();
  if (mode_byte > 1) throw Error(ErrorCode::BadMagic, "unknown fusion mode byte");
  const auto mode = static_cast<FusionMode>(mode_byte);
  const std::size_t dim = r.get<std::uint32_t>();
  const std::uint64_t count = r.get<std::uint64_t>();
  if (dim == 0) throw Error(ErrorCode::DimMismatch, "embedding file declares dim 0");

  std::vector<std::string> ids;
  ids.reserve(std::min<std::uint64_t>(count, r.remaining() / 2));
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>();
    auto s = r.take(len);
    ids.emplace_back(reinterpret_cast<const char*>(s.data()), s.size());
  }

  const std::size_t matrices = mode == FusionMode::FeatureFusion ? 1 : 2;
  const std::size_t mask_bytes = mode == FusionMode::FeatureFusion ? 0 : (count * 2 + 7) / 8;
  if (r.remaining() != mask_bytes + matrices * count * dim * 4)
    throw Error(ErrorCode::DimMismatch, "matrix block size does not match dim x count");

  EmbeddingStore store(mode, dim);
  std::vector<float> row(dim);
  if (mode == FusionMode::FeatureFusion) {
    for (std::uint64_t i = 0; i < count; ++i) {
      for (auto& f : row) f = r.get_f32();
      store.add(std::move(ids[i]), row);
    }
    return store;
  }

  auto mask = r.take(mask_bytes);
  auto bit = [&](std::size_t b) { return (mask[b / 8] >> (b % 8)) & 1u; };
  std::vector<float> image(count * dim);
  for (auto& f : image) f = r.get_f32();
  std::vector<float> text(count * dim);
  for (auto& f : text) f = r.get_f32();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::span<const float> img(image.data() + i * dim, dim);
    std::span<const float> txt(text.data() + i * dim, dim);
    const bool has_img = bit(2 * i), has_txt = bit(2 * i + 1);
    if ((!has_img && !is_zero(img)) || (!has_txt && !is_zero(txt)))
      throw Error(ErrorCode::MalformedRecord, "non-zero placeholder row for '" + ids[i] + "'");
    store.add(std::move(ids[i]), has_img ? std::optional(img) : std::nullopt,
              has_txt ? std::optional(txt) : std::nullopt);
  }
  return store;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

void write_embeddings(const EmbeddingStore& store, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_embeddings(store));
}

EmbeddingStore read_embeddings(const std::filesystem::path& path) {
  return deserialize_embeddings(read_file_bytes(path));
}

}  // namespace unir
