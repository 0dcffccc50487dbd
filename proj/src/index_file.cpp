#include "unir/index_file.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "unir/crc32.hpp"
#include "unir/error.hpp"

namespace unir {

using nlohmann::json;

void write_index_spec(const IndexSpec& spec, const std::filesystem::path& path) {
  if (spec.kind != "flat" && spec.kind != "clustered")
    throw Error(ErrorCode::ConfigInvalid, "index kind must be flat or clustered");
  json j = {{"kind", spec.kind},
            {"embeddings", spec.embeddings.generic_string()},
            {"embeddings_crc32", spec.embeddings_crc},
            {"n_lists", spec.n_lists},
            {"n_probe", spec.n_probe},
            {"seed", spec.seed},
            {"weights", {spec.weights.w1, spec.weights.w2, spec.weights.w3, spec.weights.w4}}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

IndexSpec read_index_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  IndexSpec spec;
  try {
    const json j = json::parse(in);
    spec.kind = j.at("kind").get<std::string>();
    spec.embeddings = j.at("embeddings").get<std::string>();
    spec.embeddings_crc = j.at("embeddings_crc32").get<std::uint32_t>();
    spec.n_lists = j.value("n_lists", std::size_t{0});
    spec.n_probe = j.value("n_probe", std::size_t{1});
    spec.seed = j.value("seed", std::uint64_t{0});
    const auto& w = j.at("weights");
    spec.weights = {w.at(0).get<double>(), w.at(1).get<double>(), w.at(2).get<double>(), w.at(3).get<double>()};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, path.string() + ": " + e.what());
  }
  if (spec.kind != "flat" && spec.kind != "clustered")
    throw Error(ErrorCode::MalformedRecord, path.string() + ": unknown index kind '" + spec.kind + "'");
  if (spec.embeddings.is_relative()) spec.embeddings = path.parent_path() / spec.embeddings;
  return spec;
}

const FlatIndex& LoadedIndex::flat() const {
  if (const auto* f = std::get_if<FlatIndex>(&index)) return *f;
  return std::get<ClusteredIndex>(index).flat();
}

RetrievalResult LoadedIndex::search(const QueryEmbedding& q, std::size_t k, std::size_t n_probe,
                                    kernels::Exec exec) const {
  if (const auto* f = std::get_if<FlatIndex>(&index)) return f->search(q, k, exec);
  return std::get<ClusteredIndex>(index).search(q, k, n_probe ? n_probe : default_n_probe, exec);
}

LoadedIndex load_index(const std::filesystem::path& path, FusionWeights weights) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, "UNIR")) {
    auto store = std::make_shared<const EmbeddingStore>(deserialize_embeddings(bytes));
    return {build_flat(std::move(store), weights), 1};
  }
  const IndexSpec spec = read_index_spec(path);
  const auto emb = read_file_bytes(spec.embeddings);
  if (crc32(emb) != spec.embeddings_crc)
    throw Error(ErrorCode::ChecksumMismatch, spec.embeddings.string() + " changed since the index was built");
  auto store = std::make_shared<const EmbeddingStore>(deserialize_embeddings(emb));
  if (spec.kind == "flat") return {build_flat(std::move(store), spec.weights), 1};
  return {build_clustered(std::move(store), spec.weights, spec.n_lists, spec.seed), spec.n_probe};
}

}  // namespace unir
