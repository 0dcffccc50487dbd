#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "unir/types.hpp"

namespace unir {

struct PoolStats {
  std::map<Modality, std::size_t> by_modality;
  std::map<std::string, std::size_t> by_domain;
  std::size_t total = 0;

  friend bool operator==(const PoolStats&, const PoolStats&) = default;
};

// Heterogeneous candidate pool. Candidate order is insertion order and is
// the row order of every embedding store built from the pool.
class Pool {
 public:
  Pool() = default;

  // Throws DuplicateId or ModalityMismatch.
  void add(Candidate c);

  const std::vector<Candidate>& candidates() const { return candidates_; }
  std::size_t size() const { return candidates_.size(); }
  bool empty() const { return candidates_.empty(); }

  const Candidate& at(std::size_t i) const { return candidates_.at(i); }
  std::optional<std::size_t> index_of(const std::string& did) const;
  const Candidate& get(const std::string& did) const;  // throws DanglingReference

  const PoolStats& stats() const { return stats_; }

  // Pool containing only the candidates for which keep(candidate) holds,
  // preserving relative order.
  template <class Pred>
  Pool filtered(Pred keep) const {
    Pool out;
    for (const auto& c : candidates_)
      if (keep(c)) out.add(c);
    return out;
  }

 private:
  std::vector<Candidate> candidates_;
  std::unordered_map<std::string, std::size_t> by_id_;
  PoolStats stats_;
};

PoolStats pool_stats(const Pool& pool);

struct Corpus {
  std::vector<QueryInstance> queries;
  Pool pool;
  // Non-fatal lint findings, e.g. instruction count other than four.
  std::vector<std::string> warnings;
};

// Validates one candidate / query against the data-model invariants.
void validate_candidate(const Candidate& c);
void validate_query(const QueryInstance& q);

Candidate parse_candidate_line(const std::string& line, std::size_t line_no);
QueryInstance parse_query_line(const std::string& line, std::size_t line_no);
std::string candidate_to_line(const Candidate& c);
std::string query_to_line(const QueryInstance& q);

// Reads and links a corpus. Throws Error with MalformedRecord, DuplicateId,
// DanglingReference or ModalityMismatch.
Corpus parse_corpus(const std::filesystem::path& queries_path,
                    const std::filesystem::path& candidates_path);
Corpus parse_corpus(std::istream& queries, std::istream& candidates);

void write_queries(const std::vector<QueryInstance>& queries, std::ostream& out);
void write_candidates(const Pool& pool, std::ostream& out);
void write_corpus(const Corpus& corpus, const std::filesystem::path& queries_path,
                  const std::filesystem::path& candidates_path);

// Uniform, deterministic choice over q.instructions keyed by (qid, seed).
const Instruction& select_instruction(const QueryInstance& q, std::uint64_t seed);

// task number -> dataset -> instruction strings.
using InstructionCatalog = std::map<int, std::map<std::string, std::vector<std::string>>>;

InstructionCatalog read_instruction_catalog(const std::filesystem::path& path);
void write_instruction_catalog(const InstructionCatalog& catalog,
                               const std::filesystem::path& path);

// Dataset-local pool: candidates whose did is prefixed "<dataset>:", plus
// every candidate referenced by that dataset's queries.
Pool local_pool(const Corpus& corpus, const std::string& dataset);

std::vector<std::string> dataset_names(const std::vector<QueryInstance>& queries);

}  // namespace unir
