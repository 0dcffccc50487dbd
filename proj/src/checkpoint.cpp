#include <cstring>

#include "bytes.hpp"
#include "unir/crc32.hpp"
#include "unir/error.hpp"
#include "unir/train.hpp"

namespace unir {

using detail::ByteReader;
using detail::ByteWriter;

namespace {

constexpr char kMagic[4] = {'U', 'N', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

void put_matrix(ByteWriter& w, const Matrix& m) {
  for (double v : m.data()) w.put_f64(v);
}

Matrix get_matrix(ByteReader& r, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = r.get_f64();
  return m;
}

}  // namespace

// Layout: "UNCK", u16 version, u8 mode, u32 dim, u64 config hash,
// f64 w1..w4, f64 log inverse temperature, u64 text seed, u64 image seed,
// text projection (dim x dim f64), image projection (dim x dim f64),
// fusion projection (dim x 2dim f64), u32 CRC-32 of all preceding bytes.
std::vector<std::uint8_t> serialize_checkpoint(const ModelParams& p, std::uint64_t config_hash) {
  ByteWriter w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(p.mode));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.dim()));
  w.put<std::uint64_t>(config_hash);
  for (double v : {p.weights.w1, p.weights.w2, p.weights.w3, p.weights.w4, p.log_inv_temperature}) w.put_f64(v);
  w.put<std::uint64_t>(p.text.seed);
  w.put<std::uint64_t>(p.image.seed);
  put_matrix(w, p.text.projection);
  put_matrix(w, p.image.projection);
  put_matrix(w, p.fusion_projection);
  const std::uint32_t crc = crc32(w.bytes());
  w.put<std::uint32_t>(crc);
  return std::move(w.bytes());
}

ModelParams deserialize_checkpoint(std::span<const std::uint8_t> bytes, std::uint64_t* config_hash) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error(ErrorCode::BadMagic, "not a checkpoint file (bad magic)");
  if (bytes.size() < 8) throw Error(ErrorCode::ChecksumMismatch, "checkpoint truncated");
  const auto body = bytes.first(bytes.size() - 4);
  ByteReader tail(bytes.last(4));
  if (crc32(body) != tail.get<std::uint32_t>()) throw Error(ErrorCode::ChecksumMismatch, "checkpoint CRC mismatch");

  ByteReader r(body);
  r.take(4);
  if (r.get<std::uint16_t>() != kVersion) throw Error(ErrorCode::BadMagic, "unsupported checkpoint version");
  const auto mode = r.get<std::uint8_t>();
  if (mode > 1) throw Error(ErrorCode::BadMagic, "unknown fusion mode byte");
  const std::size_t dim = r.get<std::uint32_t>();
  const std::uint64_t hash = r.get<std::uint64_t>();
  if (config_hash) *config_hash = hash;

  ModelParams p;
  p.mode = static_cast<FusionMode>(mode);
  p.weights.w1 = r.get_f64();
  p.weights.w2 = r.get_f64();
  p.weights.w3 = r.get_f64();
  p.weights.w4 = r.get_f64();
  p.log_inv_temperature = r.get_f64();
  p.text.seed = r.get<std::uint64_t>();
  p.image.seed = r.get<std::uint64_t>();
  p.text.projection = get_matrix(r, dim, dim);
  p.image.projection = get_matrix(r, dim, dim);
  p.fusion_projection = get_matrix(r, dim, 2 * dim);
  if (r.remaining() != 0) throw Error(ErrorCode::DimMismatch, "checkpoint size does not match its dim");
  return p;
}

void write_checkpoint(const ModelParams& params, std::uint64_t config_hash, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_checkpoint(params, config_hash));
}

ModelParams read_checkpoint(const std::filesystem::path& path, std::uint64_t* config_hash) {
  return deserialize_checkpoint(read_file_bytes(path), config_hash);
}

}  // namespace unir
