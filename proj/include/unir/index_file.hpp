#pragma once

#include <filesystem>
#include <string>
#include <variant>

#include "unir/index.hpp"

namespace unir {

// On-disk index: a JSON spec pointing at an embedding file. k-means is
// deterministic for a seed, so clustered lists are rebuilt on load.
struct IndexSpec {
  std::string kind = "flat";             // flat | clustered
  std::filesystem::path embeddings;      // relative paths resolve against the spec's directory
  std::uint32_t embeddings_crc = 0;
  std::size_t n_lists = 0;
  std::size_t n_probe = 1;               // default probe count for clustered search
  std::uint64_t seed = 0;
  FusionWeights weights;
};

void write_index_spec(const IndexSpec& spec, const std::filesystem::path& path);
IndexSpec read_index_spec(const std::filesystem::path& path);

struct LoadedIndex {
  std::variant<FlatIndex, ClusteredIndex> index;
  std::size_t default_n_probe = 1;

  const FlatIndex& flat() const;
  // n_probe = 0 uses the default; ignored for flat indexes.
  RetrievalResult search(const QueryEmbedding& q, std::size_t k, std::size_t n_probe = 0,
                         kernels::Exec exec = kernels::Exec::Parallel) const;
};

// Accepts an index spec or a bare embedding file (served as flat). Throws
// ChecksumMismatch when the embedding file no longer matches the spec.
LoadedIndex load_index(const std::filesystem::path& path, FusionWeights weights = {});

}  // namespace unir
