#include "unir/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "unir/error.hpp"

namespace unir {

using nlohmann::json;

namespace {

std::string where(std::size_t line_no) { return "line " + std::to_string(line_no) + ": "; }

std::optional<std::string> optional_string(const json& obj, const char* key, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string())
    throw Error(ErrorCode::MalformedRecord, where(line_no) + "field '" + key + "' must be string or null");
  return it->get<std::string>();
}

const json& required(const json& obj, const char* key, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw Error(ErrorCode::MalformedRecord, where(line_no) + "missing field '" + key + "'");
  return *it;
}

std::string required_string(const json& obj, const char* key, std::size_t line_no) {
  const json& v = required(obj, key, line_no);
  if (!v.is_string())
    throw Error(ErrorCode::MalformedRecord, where(line_no) + "field '" + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<std::string> id_list(const json& obj, const char* key, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_array())
    throw Error(ErrorCode::MalformedRecord, where(line_no) + "field '" + key + "' must be an array");
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string())
      throw Error(ErrorCode::MalformedRecord, where(line_no) + "ids in '" + key + "' must be strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

json parse_object(const std::string& line, std::size_t line_no) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedRecord, where(line_no) + e.what());
  }
  if (!obj.is_object()) throw Error(ErrorCode::MalformedRecord, where(line_no) + "record is not an object");
  return obj;
}

bool payload_matches(Modality m, bool text, bool image) {
  return text == has_text(m) && image == has_image(m);
}

json nullable(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void Pool::add(Candidate c) {
  validate_candidate(c);
  if (by_id_.count(c.did)) throw Error(ErrorCode::DuplicateId, "duplicate candidate id '" + c.did + "'");
  by_id_.emplace(c.did, candidates_.size());
  ++stats_.by_modality[c.modality];
  ++stats_.by_domain[c.domain.str()];
  ++stats_.total;
  candidates_.push_back(std::move(c));
}

std::optional<std::size_t> Pool::index_of(const std::string& did) const {
  auto it = by_id_.find(did);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

const Candidate& Pool::get(const std::string& did) const {
  auto idx = index_of(did);
  if (!idx) throw Error(ErrorCode::DanglingReference, "unknown candidate id '" + did + "'");
  return candidates_[*idx];
}

PoolStats pool_stats(const Pool& pool) {
  PoolStats s;
  for (const auto& c : pool.candidates()) {
    ++s.by_modality[c.modality];
    ++s.by_domain[c.domain.str()];
    ++s.total;
  }
  return s;
}

void validate_candidate(const Candidate& c) {
  if (c.did.empty()) throw Error(ErrorCode::MalformedRecord, "candidate with empty did");
  if (!payload_matches(c.modality, c.text.has_value(), c.image_ref.has_value()))
    throw Error(ErrorCode::ModalityMismatch,
                "candidate '" + c.did + "' payload does not match modality " +
                    std::string(modality_name(c.modality)));
}

void validate_query(const QueryInstance& q) {
  if (q.qid.empty()) throw Error(ErrorCode::MalformedRecord, "query with empty qid");
  if (q.positives.empty())
    throw Error(ErrorCode::MalformedRecord, "query '" + q.qid + "' has no positive candidate");
  if (q.instructions.empty())
    throw Error(ErrorCode::MalformedRecord, "query '" + q.qid + "' has no instruction");
  if (q.modality != query_modality(q.task))
    throw Error(ErrorCode::ModalityMismatch,
                "query '" + q.qid + "' modality " + std::string(modality_name(q.modality)) +
                    " does not match task " + std::string(task_name(q.task)));
  if (!payload_matches(q.modality, q.text.has_value(), q.image_ref.has_value()))
    throw Error(ErrorCode::ModalityMismatch, "query '" + q.qid + "' payload does not match modality");
  for (const auto& inst : q.instructions) {
    if (inst.text.empty())
      throw Error(ErrorCode::MalformedRecord, "query '" + q.qid + "' has an empty instruction");
    if (inst.task != q.task || inst.query_modality != query_modality(q.task) ||
        inst.target_modality != target_modality(q.task))
      throw Error(ErrorCode::ModalityMismatch, "query '" + q.qid + "' instruction disagrees with task");
  }
}

Candidate parse_candidate_line(const std::string& line, std::size_t line_no) {
  json obj = parse_object(line, line_no);
  Candidate c;
  c.did = required_string(obj, "did", line_no);
  try {
    c.modality = parse_modality(required_string(obj, "modality", line_no));
    c.domain = Domain(required_string(obj, "domain", line_no));
  } catch (const Error& e) {
    throw Error(ErrorCode::MalformedRecord, where(line_no) + e.what());
  }
  c.text = optional_string(obj, "txt", line_no);
  c.image_ref = optional_string(obj, "img", line_no);
  return c;
}

QueryInstance parse_query_line(const std::string& line, std::size_t line_no) {
  json obj = parse_object(line, line_no);
  QueryInstance q;
  q.qid = required_string(obj, "qid", line_no);
  const json& task = required(obj, "task", line_no);
  if (!task.is_number_integer())
    throw Error(ErrorCode::MalformedRecord, where(line_no) + "field 'task' must be an integer 1..8");
  try {
    q.task = task_from_number(task.get<int>());
    q.modality = parse_modality(required_string(obj, "modality", line_no));
  } catch (const Error& e) {
    throw Error(ErrorCode::MalformedRecord, where(line_no) + e.what());
  }
  q.dataset = required_string(obj, "dataset", line_no);
  q.text = optional_string(obj, "txt", line_no);
  q.image_ref = optional_string(obj, "img", line_no);

  const json& insts = required(obj, "instructions", line_no);
  if (!insts.is_array())
    throw Error(ErrorCode::MalformedRecord, where(line_no) + "field 'instructions' must be an array");
  for (const auto& io : insts) {
    if (!io.is_object())
      throw Error(ErrorCode::MalformedRecord, where(line_no) + "instruction must be an object");
    Instruction inst;
    inst.text = required_string(io, "text", line_no);
    inst.intent = io.value("intent", std::string{});
    try {
      inst.domain = Domain(required_string(io, "domain", line_no));
    } catch (const Error& e) {
      throw Error(ErrorCode::MalformedRecord, where(line_no) + e.what());
    }
    inst.task = q.task;
    inst.query_modality = query_modality(q.task);
    inst.target_modality = target_modality(q.task);
    q.instructions.push_back(std::move(inst));
  }
  q.positives = id_list(obj, "pos", line_no);
  q.negatives = id_list(obj, "neg", line_no);
  if (q.positives.empty())
    throw Error(ErrorCode::MalformedRecord,
                where(line_no) + "query '" + q.qid + "' needs at least one positive candidate");
  if (q.instructions.empty())
    throw Error(ErrorCode::MalformedRecord, where(line_no) + "query '" + q.qid + "' has no instruction");
  return q;
}

std::string candidate_to_line(const Candidate& c) {
  json obj = {{"did", c.did},
              {"modality", std::string(modality_name(c.modality))},
              {"domain", c.domain.str()},
              {"txt", nullable(c.text)},
              {"img", nullable(c.image_ref)}};
  return obj.dump();
}

std::string query_to_line(const QueryInstance& q) {
  json insts = json::array();
  for (const auto& inst : q.instructions)
    insts.push_back({{"text", inst.text}, {"intent", inst.intent}, {"domain", inst.domain.str()}});
  json obj = {{"qid", q.qid},
              {"task", task_number(q.task)},
              {"dataset", q.dataset},
              {"modality", std::string(modality_name(q.modality))},
              {"txt", nullable(q.text)},
              {"img", nullable(q.image_ref)},
              {"instructions", insts},
              {"pos", q.positives},
              {"neg", q.negatives}};
  return obj.dump();
}

Corpus parse_corpus(std::istream& queries, std::istream& candidates) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(candidates, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    Candidate c = parse_candidate_line(line, line_no);
    try {
      corpus.pool.add(std::move(c));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::MalformedRecord) throw Error(e.code(), where(line_no) + e.what());
      throw;
    }
  }

  std::set<std::string> seen_qids;
  line_no = 0;
  while (std::getline(queries, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    QueryInstance q = parse_query_line(line, line_no);
    if (!seen_qids.insert(q.qid).second)
      throw Error(ErrorCode::DuplicateId, "duplicate query id '" + q.qid + "'");
    validate_query(q);
    for (const auto* ids : {&q.positives, &q.negatives})
      for (const auto& did : *ids)
        if (!corpus.pool.index_of(did))
          throw Error(ErrorCode::DanglingReference,
                      "query '" + q.qid + "' references unknown candidate '" + did + "'");
    if (q.instructions.size() != 4)
      corpus.warnings.push_back("query '" + q.qid + "' has " + std::to_string(q.instructions.size()) +
                                " instructions (expected 4)");
    corpus.queries.push_back(std::move(q));
  }
  return corpus;
}

Corpus parse_corpus(const std::filesystem::path& queries_path,
                    const std::filesystem::path& candidates_path) {
  std::ifstream qs(queries_path);
  if (!qs) throw Error(ErrorCode::Io, "cannot open " + queries_path.string());
  std::ifstream cs(candidates_path);
  if (!cs) throw Error(ErrorCode::Io, "cannot open " + candidates_path.string());
  return parse_corpus(qs, cs);
}

void write_queries(const std::vector<QueryInstance>& queries, std::ostream& out) {
  for (const auto& q : queries) out << query_to_line(q) << '\n';
}

void write_candidates(const Pool& pool, std::ostream& out) {
  for (const auto& c : pool.candidates()) out << candidate_to_line(c) << '\n';
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& queries_path,
                  const std::filesystem::path& candidates_path) {
  std::ofstream qs(queries_path, std::ios::binary);
  std::ofstream cs(candidates_path, std::ios::binary);
  if (!qs || !cs) throw Error(ErrorCode::Io, "cannot write corpus files");
  write_queries(corpus.queries, qs);
  write_candidates(corpus.pool, cs);
}

const Instruction& select_instruction(const QueryInstance& q, std::uint64_t seed) {
  const std::uint64_t n = q.instructions.size();
  if (n == 1) return q.instructions.front();
  const std::uint64_t r = splitmix64(fnv1a(q.qid) ^ splitmix64(seed));
  return q.instructions[r % n];
}

InstructionCatalog read_instruction_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  json obj;
  try {
    obj = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedRecord, path.string() + ": " + e.what());
  }
  InstructionCatalog catalog;
  for (auto& [task_key, datasets] : obj.items()) {
    int task = 0;
    try {
      task = task_number(task_from_number(std::stoi(task_key)));
    } catch (const std::exception&) {
      throw Error(ErrorCode::MalformedRecord, "catalog task key '" + task_key + "' is not 1..8");
    }
    for (auto& [dataset, strings] : datasets.items()) {
      auto& list = catalog[task][dataset];
      for (const auto& s : strings) list.push_back(s.get<std::string>());
      if (list.empty())
        throw Error(ErrorCode::MalformedRecord, "catalog entry " + task_key + "/" + dataset + " is empty");
    }
  }
  return catalog;
}

void write_instruction_catalog(const InstructionCatalog& catalog, const std::filesystem::path& path) {
  json obj = json::object();
  for (const auto& [task, datasets] : catalog)
    for (const auto& [dataset, strings] : datasets) obj[std::to_string(task)][dataset] = strings;
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << obj.dump(2) << '\n';
}

Pool local_pool(const Corpus& corpus, const std::string& dataset) {
  std::set<std::string> referenced;
  for (const auto& q : corpus.queries) {
    if (q.dataset != dataset) continue;
    referenced.insert(q.positives.begin(), q.positives.end());
    referenced.insert(q.negatives.begin(), q.negatives.end());
  }
  const std::string prefix = dataset + ":";
  return corpus.pool.filtered([&](const Candidate& c) {
    return c.did.starts_with(prefix) || referenced.count(c.did) > 0;
  });
}

std::vector<std::string> dataset_names(const std::vector<QueryInstance>& queries) {
  std::set<std::string> names;
  for (const auto& q : queries) names.insert(q.dataset);
  return {names.begin(), names.end()};
}

}  // namespace unir
