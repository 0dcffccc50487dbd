#include "unir/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "unir/encoders.hpp"
#include "unir/error.hpp"

namespace unir {

namespace {

using Rng = std::mt19937_64;

std::vector<double> gaussian(Rng& rng, std::size_t dim, double stddev) {
  std::normal_distribution<double> n(0.0, stddev);
  std::vector<double> v(dim);
  for (double& x : v) x = n(rng);
  return v;
}

std::vector<double> unit_gaussian(Rng& rng, std::size_t dim) {
  auto v = gaussian(rng, dim, 1.0);
  normalize_in_place(v);
  return v;
}

// Random orthogonal matrix via Gram-Schmidt on Gaussian rows.
Matrix random_orthogonal(Rng& rng, std::size_t dim) {
  Matrix q(dim, dim);
  for (std::size_t r = 0; r < dim; ++r) {
    auto v = gaussian(rng, dim, 1.0);
    for (std::size_t p = 0; p < r; ++p) {
      const double proj = dot(v, q.row(p));
      for (std::size_t c = 0; c < dim; ++c) v[c] -= proj * q(p, c);
    }
    normalize_in_place(v);
    for (std::size_t c = 0; c < dim; ++c) q(r, c) = v[c];
  }
  return q;
}

std::string_view target_noun(Modality m) {
  switch (m) {
    case Modality::Text: return "passage";
    case Modality::Image: return "image";
    case Modality::ImageText: return "image with caption";
  }
  return "";
}

std::string_view query_noun(Modality m) {
  switch (m) {
    case Modality::Text: return "description";
    case Modality::Image: return "photo";
    case Modality::ImageText: return "photo and question";
  }
  return "";
}

// Modality of the planted same-topic distractor.
Modality wrong_modality(TaskKind t) {
  const Modality q = query_modality(t), c = target_modality(t);
  if (q != c) return q;
  return c == Modality::Image ? Modality::Text : Modality::Image;
}

std::vector<Instruction> make_instructions(TaskKind task, const Domain& domain) {
  static constexpr std::array<std::string_view, 4> templates = {
      "retrieve a {d} {t} that matches the {q}",
      "find the {d} {t} for this {q}",
      "identify a {d} {t} matching my {q}",
      "show me a {d} {t} relevant to the {q}",
  };
  const Modality qm = query_modality(task), tm = target_modality(task);
  std::vector<Instruction> out;
  for (std::string_view tpl : templates) {
    std::string s(tpl);
    auto replace = [&s](std::string_view key, std::string_view value) {
      s.replace(s.find(key), key.size(), value);
    };
    replace("{d}", domain.str());
    replace("{t}", target_noun(tm));
    replace("{q}", query_noun(qm));
    Instruction inst;
    inst.text = std::move(s);
    inst.task = task;
    inst.intent = "retrieve " + std::string(target_noun(tm)) + " given " + std::string(query_noun(qm));
    inst.domain = domain;
    inst.query_modality = qm;
    inst.target_modality = tm;
    out.push_back(std::move(inst));
  }
  return out;
}

struct Topic {
  std::vector<std::string> words;
  std::vector<double> center;  // unit image-space center
};

struct World {
  std::size_t dim;
  std::vector<std::string> vocab;
  std::vector<double> image_mean;
  std::vector<std::vector<Topic>> topics;  // per domain
};

class Generator {
 public:
  explicit Generator(const SynthConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {}

  SynthCorpus run() {
    build_world();
    out_.features = EmbeddingStore(FusionMode::FeatureFusion, cfg_.dim);
    std::vector<TaskKind> tasks = cfg_.tasks;
    std::sort(tasks.begin(), tasks.end());
    tasks.erase(std::unique(tasks.begin(), tasks.end()), tasks.end());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (cfg_.queries_for(tasks[i]) == 0) continue;
      const std::size_t domain = i * cfg_.n_domains / tasks.size();
      emit_dataset(tasks[i], domain);
    }
    return std::move(out_);
  }

 private:
  void build_world() {
    world_.dim = cfg_.dim;
    for (std::size_t w = 0; w < cfg_.vocab_size; ++w) world_.vocab.push_back("w" + std::to_string(w));
    const Matrix link = random_orthogonal(rng_, cfg_.dim);
    world_.image_mean = unit_gaussian(rng_, cfg_.dim);
    const double lambda = cfg_.cross_modal_link_strength;
    world_.topics.resize(cfg_.n_domains);
    for (auto& domain_topics : world_.topics) {
      for (std::size_t t = 0; t < cfg_.topics_per_domain; ++t) {
        Topic topic;
        std::vector<std::size_t> ids(cfg_.vocab_size);
        std::iota(ids.begin(), ids.end(), std::size_t{0});
        std::shuffle(ids.begin(), ids.end(), rng_);
        std::string joined;
        for (std::size_t k = 0; k < cfg_.words_per_topic; ++k) {
          topic.words.push_back(world_.vocab[ids[k]]);
          joined += topic.words.back() + " ";
        }
        const auto signature = hash_features(joined, cfg_.dim);
        const auto linked = matvec(link, signature);
        const auto own = unit_gaussian(rng_, cfg_.dim);
        topic.center.resize(cfg_.dim);
        for (std::size_t d = 0; d < cfg_.dim; ++d)
          topic.center[d] = lambda * linked[d] + std::sqrt(std::max(0.0, 1.0 - lambda * lambda)) * own[d];
        normalize_in_place(topic.center);
        domain_topics.push_back(std::move(topic));
      }
    }
  }

  std::string make_text(const Topic& topic, const std::string& domain) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick_topic(0, topic.words.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_vocab(0, world_.vocab.size() - 1);
    std::string s = domain;
    for (std::size_t i = 0; i < cfg_.text_length; ++i) {
      s += ' ';
      s += u(rng_) < cfg_.text_noise ? world_.vocab[pick_vocab(rng_)] : topic.words[pick_topic(rng_)];
    }
    return s;
  }

  std::string make_image(const Topic& topic, const std::string& ref) {
    const auto noise = gaussian(rng_, cfg_.dim, cfg_.cluster_spread / std::sqrt(static_cast<double>(cfg_.dim)));
    std::vector<float> raw(cfg_.dim);
    for (std::size_t d = 0; d < cfg_.dim; ++d)
      raw[d] = static_cast<float>(topic.center[d] + noise[d] + cfg_.image_offset * world_.image_mean[d]);
    out_.features.add(ref, raw);
    return ref;
  }

  Candidate make_candidate(const std::string& did, Modality m, const Topic& topic, const Domain& domain) {
    Candidate c;
    c.did = did;
    c.modality = m;
    c.domain = domain;
    if (has_text(m)) c.text = make_text(topic, domain.str());
    if (has_image(m)) c.image_ref = make_image(topic, "img:" + did);
    return c;
  }

  void emit_dataset(TaskKind task, std::size_t domain_index) {
    const Domain domain(synth_domain_name(domain_index));
    const std::string dataset = synth_dataset_name(domain.str(), task);
    const auto& topics = world_.topics[domain_index];
    const std::size_t base_topic = domain_index * cfg_.topics_per_domain;
    const Modality target = target_modality(task);

    std::vector<std::vector<std::string>> positives(topics.size()), distractors(topics.size());
    std::size_t next = 0;
    auto add = [&](Modality m, std::size_t t) {
      const std::string did = dataset + ":" + std::to_string(next++);
      out_.corpus.pool.add(make_candidate(did, m, topics[t], domain));
      out_.topic_of[did] = base_topic + t;
      return did;
    };
    for (std::size_t i = 0; i < cfg_.pool_per_task; ++i) {
      const std::size_t t = i % topics.size();
      positives[t].push_back(add(target, t));
    }
    for (std::size_t t = 0; t < topics.size(); ++t)
      for (std::size_t k = 0; k < cfg_.distractors_per_topic; ++k) distractors[t].push_back(add(wrong_modality(task), t));

    const auto instructions = make_instructions(task, domain);
    std::uniform_int_distribution<std::size_t> pick(0, topics.size() - 1);
    const std::size_t n_queries = cfg_.queries_for(task);
    for (std::size_t i = 0; i < n_queries; ++i) {
      std::size_t t = pick(rng_);
      while (positives[t].empty()) t = pick(rng_);
      QueryInstance q;
      q.qid = dataset + ":q" + std::to_string(i);
      q.task = task;
      q.dataset = dataset;
      q.modality = query_modality(task);
      if (has_text(q.modality)) q.text = make_text(topics[t], domain.str());
      if (has_image(q.modality)) q.image_ref = make_image(topics[t], "img:" + q.qid);
      q.instructions = instructions;
      q.positives = positives[t];
      q.negatives = distractors[t];
      out_.topic_of[q.qid] = base_topic + t;
      out_.corpus.queries.push_back(std::move(q));
    }
  }

  const SynthConfig& cfg_;
  Rng rng_;
  World world_;
  SynthCorpus out_;
};

}  // namespace

std::size_t SynthConfig::queries_for(TaskKind t) const {
  auto it = queries_override.find(t);
  return it == queries_override.end() ? queries_per_task : it->second;
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigInvalid, what); };
  if (n_domains == 0) fail("n_domains must be positive");
  if (tasks.empty()) fail("at least one task is required");
  if (n_domains > tasks.size()) fail("n_domains cannot exceed the number of tasks");
  if (dim == 0) fail("dim must be positive");
  if (!(cluster_spread > 0.0)) fail("cluster_spread must be positive");
  if (cross_modal_link_strength < 0.0 || cross_modal_link_strength > 1.0)
    fail("cross_modal_link_strength must be in [0, 1]");
  if (topics_per_domain == 0) fail("topics_per_domain must be positive");
  if (pool_per_task < topics_per_domain) fail("pool_per_task must cover every topic");
  if (words_per_topic == 0 || words_per_topic > vocab_size) fail("words_per_topic must be in [1, vocab_size]");
  if (text_length == 0) fail("text_length must be positive");
  if (text_noise < 0.0 || text_noise > 1.0) fail("text_noise must be in [0, 1]");
  bool any = false;
  for (TaskKind t : tasks) any |= queries_for(t) > 0;
  if (!any) fail("no task has queries");
}

std::string synth_domain_name(std::size_t i) {
  static constexpr std::array<std::string_view, 4> canonical = {"news", "misc", "fashion", "wiki"};
  return i < canonical.size() ? std::string(canonical[i]) : "synth" + std::to_string(i);
}

std::string synth_dataset_name(const std::string& domain, TaskKind task) {
  std::string t(task_name(task));
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  return "synth-" + domain + "-" + t;
}

SynthCorpus generate(const SynthConfig& config) {
  config.validate();
  return Generator(config).run();
}

SynthPaths SynthPaths::in(const std::filesystem::path& dir) {
  return {dir / "queries.jsonl", dir / "candidates.jsonl", dir / "features.unir", dir / "labels.jsonl"};
}

SynthPaths write_synth(const SynthCorpus& synth, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const SynthPaths paths = SynthPaths::in(dir);
  write_corpus(synth.corpus, paths.queries, paths.candidates);
  write_embeddings(synth.features, paths.features);
  std::ofstream labels(paths.labels, std::ios::binary | std::ios::trunc);
  if (!labels) throw Error(ErrorCode::Io, "cannot write " + paths.labels.string());
  for (const auto& q : synth.corpus.queries)
    labels << nlohmann::json{{"id", q.qid}, {"topic", synth.topic_of.at(q.qid)}}.dump() << '\n';
  for (const auto& c : synth.corpus.pool.candidates())
    labels << nlohmann::json{{"id", c.did}, {"topic", synth.topic_of.at(c.did)}}.dump() << '\n';
  return paths;
}

std::map<std::string, std::size_t> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::map<std::string, std::size_t> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto obj = nlohmann::json::parse(line);
    out[obj.at("id").get<std::string>()] = obj.at("topic").get<std::size_t>();
  }
  return out;
}

std::pair<Corpus, Corpus> split_held_out(const Corpus& corpus, const std::vector<std::string>& held_out,
                                         std::uint64_t seed) {
  if (held_out.empty()) throw Error(ErrorCode::EmptyHeldOut, "no held-out selector given");
  std::set<std::string> held_datasets;
  const auto names = dataset_names(corpus.queries);
  for (const auto& sel : held_out) {
    if (sel.starts_with("random:")) {
      const std::size_t n = std::stoul(sel.substr(7));
      auto shuffled = names;
      Rng rng(seed);
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      held_datasets.insert(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(std::min(n, shuffled.size())));
      continue;
    }
    if (std::find(names.begin(), names.end(), sel) != names.end()) {
      held_datasets.insert(sel);
      continue;
    }
    bool matched = false;
    try {
      const TaskKind t = parse_task_name(sel);
      for (const auto& q : corpus.queries)
        if (q.task == t) {
          held_datasets.insert(q.dataset);
          matched = true;
        }
    } catch (const Error&) {
    }
    if (!matched) throw Error(ErrorCode::EmptyHeldOut, "held-out selector '" + sel + "' matches no query");
  }

  Corpus held_in{{}, corpus.pool, {}}, held{{}, corpus.pool, {}};
  for (const auto& q : corpus.queries) (held_datasets.count(q.dataset) ? held : held_in).queries.push_back(q);
  if (held.queries.empty()) throw Error(ErrorCode::EmptyHeldOut, "held-out split is empty");
  if (held_in.queries.empty()) throw Error(ErrorCode::NothingHeldIn, "every dataset is held out");
  return {std::move(held_in), std::move(held)};
}

}  // namespace unir
