#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "unir/corpus.hpp"
#include "unir/embedding_store.hpp"

namespace unir {

struct SynthConfig {
  std::size_t n_domains = 2;
  std::vector<TaskKind> tasks = {TaskKind::T2I, TaskKind::T2T, TaskKind::I2T, TaskKind::I2I};
  std::size_t queries_per_task = 500;
  std::map<TaskKind, std::size_t> queries_override;  // per-task query counts
  std::size_t pool_per_task = 200;      // target-modality candidates per dataset
  std::size_t dim = 64;
  double cluster_spread = 0.15;         // noise norm around each topic center
  double cross_modal_link_strength = 0.8;
  std::uint64_t seed = 0;

  std::size_t topics_per_domain = 40;
  std::size_t vocab_size = 400;
  std::size_t words_per_topic = 8;
  std::size_t text_length = 8;
  double text_noise = 0.25;             // chance a token comes from the global vocabulary
  double image_offset = 0.3;            // shared component of every raw image feature
  std::size_t distractors_per_topic = 1;  // planted wrong-modality candidates

  std::size_t queries_for(TaskKind t) const;
  void validate() const;  // throws ConfigInvalid
};

struct SynthCorpus {
  Corpus corpus;
  EmbeddingStore features;                     // raw image features keyed by image_ref
  std::map<std::string, std::size_t> topic_of;  // qid / did -> global topic id
};

// Domain of the i-th synthetic domain: news, misc, fashion, wiki, synth4, ...
std::string synth_domain_name(std::size_t i);
// "synth-<domain>-<task>"
std::string synth_dataset_name(const std::string& domain, TaskKind task);

SynthCorpus generate(const SynthConfig& config);

// Files: queries.jsonl, candidates.jsonl, features.unir, labels.jsonl.
struct SynthPaths {
  std::filesystem::path queries, candidates, features, labels;
  static SynthPaths in(const std::filesystem::path& dir);
};
SynthPaths write_synth(const SynthCorpus& synth, const std::filesystem::path& dir);
std::map<std::string, std::size_t> read_labels(const std::filesystem::path& path);

// Held-out split by dataset name or task name ("T2I"); "random:N" holds out N
// datasets chosen with `seed`. Both halves keep the full candidate pool.
// Throws EmptyHeldOut, NothingHeldIn.
std::pair<Corpus, Corpus> split_held_out(const Corpus& corpus, const std::vector<std::string>& held_out,
                                         std::uint64_t seed = 0);

}  // namespace unir
