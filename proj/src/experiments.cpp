#include "unir/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <unordered_map>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "unir/crc32.hpp"
#include "unir/error.hpp"

namespace unir {

namespace pt = boost::property_tree;

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::ConfigInvalid, what); }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

template <class T>
T parse_value(const std::string& section, const std::string& key, const std::string& value) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (value == "true" || value == "yes" || value == "1") return true;
      if (value == "false" || value == "no" || value == "0") return false;
      throw std::invalid_argument(value);
    } else if constexpr (std::is_same_v<T, double>) {
      std::size_t used = 0;
      double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return v;
    } else {
      if (value.empty() || value[0] == '-') throw std::invalid_argument(value);
      std::size_t used = 0;
      auto v = std::stoull(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return static_cast<T>(v);
    }
  } catch (const std::logic_error&) {
    invalid("[" + section + "] " + key + ": cannot parse '" + value + "'");
  }
}

std::vector<std::size_t> parse_k_list(const std::string& section, const std::string& value) {
  std::vector<std::size_t> ks;
  for (const auto& item : split_list(value)) ks.push_back(parse_value<std::size_t>(section, "k_list", item));
  return ks;
}

void check_keys(const std::string& section, const pt::ptree& tree, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : tree)
    if (!allowed.count(key)) invalid("[" + section + "] unknown key '" + key + "'");
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v, int width) {
  std::ostringstream os;
  os << std::hex << std::setfill('0') << std::setw(width) << v;
  return os.str();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

void ExperimentPlan::validate() const {
  if (conditions.empty()) invalid("plan declares no condition");
  std::set<std::string> names;
  for (const auto& c : conditions)
    if (!names.insert(c.name).second) invalid("duplicate condition name '" + c.name + "'");
  if (delta_treatment.has_value() != delta_baseline.has_value())
    invalid("delta needs both a treatment and a baseline");
  if (delta_treatment && (!names.count(*delta_treatment) || !names.count(*delta_baseline)))
    invalid("delta refers to an unknown condition");
  if (!synth && (queries.empty() || candidates.empty() || features.empty()))
    invalid("plan needs either a [synth] section or [corpus] queries/candidates/features");
  metric.validate();
}

ExperimentPlan ExperimentPlan::with_seed(std::uint64_t s) const {
  ExperimentPlan p = *this;
  p.seed = s;
  if (p.synth) p.synth->seed = s;
  p.train.seed = s;
  return p;
}

ExperimentPlan parse_plan(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree root;
  try {
    std::istringstream in(text);
    pt::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    invalid(std::string("plan: ") + e.what());
  }

  ExperimentPlan plan;
  plan.source_text = text;
  bool synth_seed_given = false;
  // read_ini drops sections without keys; walk the headers so "[condition.x]"
  // alone still declares a condition with default switches.
  std::vector<std::string> sections;
  {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const auto b = line.find_first_not_of(" \t");
      const auto e = line.find_last_not_of(" \t\r");
      if (b != std::string::npos && line[b] == '[' && line[e] == ']') sections.push_back(line.substr(b + 1, e - b - 1));
    }
  }
  const pt::ptree empty;
  for (const auto& section : sections) {
    const auto found = root.find(section);
    const pt::ptree& tree = found == root.not_found() ? empty : found->second;
    auto get = [&tree](const std::string& key) { return tree.get<std::string>(key); };
    if (section == "plan") {
      check_keys(section, tree, {"seed", "out_dir", "delta_treatment", "delta_baseline", "held_out", "local",
                                 "parallel_conditions"});
      for (const auto& [key, node] : tree) {
        const std::string v = node.get_value<std::string>();
        if (key == "seed") plan.seed = parse_value<std::uint64_t>(section, key, v);
        if (key == "out_dir") plan.out_dir = resolve(base_dir, v);
        if (key == "delta_treatment") plan.delta_treatment = v;
        if (key == "delta_baseline") plan.delta_baseline = v;
        if (key == "held_out") plan.held_out = split_list(v);
        if (key == "local") plan.evaluate_local = parse_value<bool>(section, key, v);
        if (key == "parallel_conditions") plan.parallel_conditions = parse_value<bool>(section, key, v);
      }
    } else if (section == "corpus") {
      check_keys(section, tree, {"queries", "candidates", "features"});
      plan.queries = resolve(base_dir, get("queries"));
      plan.candidates = resolve(base_dir, get("candidates"));
      plan.features = resolve(base_dir, get("features"));
    } else if (section == "synth") {
      check_keys(section, tree, {"n_domains", "tasks", "queries_per_task", "pool_per_task", "dim", "cluster_spread",
                                 "cross_modal_link_strength", "seed", "topics_per_domain", "vocab_size",
                                 "words_per_topic", "text_length", "text_noise", "image_offset",
                                 "distractors_per_topic"});
      SynthConfig c;
      for (const auto& [key, node] : tree) {
        const std::string v = node.get_value<std::string>();
        if (key == "n_domains") c.n_domains = parse_value<std::size_t>(section, key, v);
        if (key == "tasks") {
          c.tasks.clear();
          for (const auto& t : split_list(v)) c.tasks.push_back(parse_task_name(t));
        }
        if (key == "queries_per_task") c.queries_per_task = parse_value<std::size_t>(section, key, v);
        if (key == "pool_per_task") c.pool_per_task = parse_value<std::size_t>(section, key, v);
        if (key == "dim") c.dim = parse_value<std::size_t>(section, key, v);
        if (key == "cluster_spread") c.cluster_spread = parse_value<double>(section, key, v);
        if (key == "cross_modal_link_strength") c.cross_modal_link_strength = parse_value<double>(section, key, v);
        if (key == "seed") {
          c.seed = parse_value<std::uint64_t>(section, key, v);
          synth_seed_given = true;
        }
        if (key == "topics_per_domain") c.topics_per_domain = parse_value<std::size_t>(section, key, v);
        if (key == "vocab_size") c.vocab_size = parse_value<std::size_t>(section, key, v);
        if (key == "words_per_topic") c.words_per_topic = parse_value<std::size_t>(section, key, v);
        if (key == "text_length") c.text_length = parse_value<std::size_t>(section, key, v);
        if (key == "text_noise") c.text_noise = parse_value<double>(section, key, v);
        if (key == "image_offset") c.image_offset = parse_value<double>(section, key, v);
        if (key == "distractors_per_topic") c.distractors_per_topic = parse_value<std::size_t>(section, key, v);
      }
      plan.synth = c;
    } else if (section == "train") {
      check_keys(section, tree, {"epochs", "batch_size", "learning_rate", "temperature", "freeze_weights",
                                 "hard_negatives"});
      for (const auto& [key, node] : tree) {
        const std::string v = node.get_value<std::string>();
        if (key == "epochs") plan.train.epochs = parse_value<std::size_t>(section, key, v);
        if (key == "batch_size") plan.train.batch_size = parse_value<std::size_t>(section, key, v);
        if (key == "learning_rate") plan.train.learning_rate = parse_value<double>(section, key, v);
        if (key == "temperature") plan.train.temperature_init = parse_value<double>(section, key, v);
        if (key == "freeze_weights") plan.train.freeze_weights = parse_value<bool>(section, key, v);
        if (key == "hard_negatives") plan.train.use_hard_negatives = parse_value<bool>(section, key, v);
      }
    } else if (section == "metric") {
      check_keys(section, tree, {"k_list", "k_primary", "fashion_k_list", "fashion_k_primary"});
      for (const auto& [key, node] : tree) {
        const std::string v = node.get_value<std::string>();
        if (key == "k_list") plan.metric.default_metric.k_list = parse_k_list(section, v);
        if (key == "k_primary") plan.metric.default_metric.k_primary = parse_value<std::size_t>(section, key, v);
        if (key == "fashion_k_list") plan.metric.fashion_metric.k_list = parse_k_list(section, v);
        if (key == "fashion_k_primary") plan.metric.fashion_metric.k_primary = parse_value<std::size_t>(section, key, v);
      }
    } else if (section.starts_with("condition.")) {
      check_keys(section, tree, {"train", "instructions", "single_task", "datasets", "mode"});
      Condition c;
      c.name = section.substr(std::string("condition.").size());
      if (c.name.empty()) invalid("condition section without a name");
      for (const auto& [key, node] : tree) {
        const std::string v = node.get_value<std::string>();
        if (key == "train") c.train = parse_value<bool>(section, key, v);
        if (key == "instructions") c.use_instructions = parse_value<bool>(section, key, v);
        if (key == "single_task") c.single_task = parse_value<bool>(section, key, v);
        if (key == "datasets") c.train_datasets = split_list(v);
        if (key == "mode") c.mode = parse_fusion_mode(v);
      }
      plan.conditions.push_back(std::move(c));
    } else {
      invalid("unknown plan section [" + section + "]");
    }
  }
  if (plan.synth && !synth_seed_given) plan.synth->seed = plan.seed;
  plan.train.seed = plan.seed;
  plan.validate();
  return plan;
}

ExperimentPlan read_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_plan(ss.str(), path.parent_path());
}

const ConditionResult& ComparisonReport::at(const std::string& name) const {
  for (const auto& c : conditions)
    if (c.condition.name == name) return c;
  throw Error(ErrorCode::ConfigInvalid, "no condition named '" + name + "'");
}

const HeldOutResult& HeldOutReport::at(const std::string& name) const {
  for (const auto& c : conditions)
    if (c.condition == name) return c;
  throw Error(ErrorCode::ConfigInvalid, "no condition named '" + name + "'");
}

LoadedCorpus load_corpus(const ExperimentPlan& plan) {
  if (plan.synth) {
    SynthCorpus s = generate(*plan.synth);
    return {std::move(s.corpus), std::move(s.features)};
  }
  return {parse_corpus(plan.queries, plan.candidates), read_embeddings(plan.features)};
}

namespace {

ModelParams fit(const ExperimentPlan& plan, const Corpus& corpus, const EmbeddingStore& features,
                const Condition& c, std::vector<std::string> datasets, std::vector<double>* loss_curve) {
  if (!c.train) {
    ModelParams p = ModelParams::init(features.dim(), c.mode, plan.seed);
    p.log_inv_temperature = std::log(1.0 / plan.train.temperature_init);
    return p;
  }
  TrainConfig tc = plan.train;
  tc.seed = plan.seed;
  tc.use_instructions = c.use_instructions;
  tc.mode = c.mode;
  tc.datasets = std::move(datasets);
  TrainResult r = train(corpus, features, tc);
  if (loss_curve) loss_curve->insert(loss_curve->end(), r.loss_curve.begin(), r.loss_curve.end());
  return std::move(r.params);
}

std::vector<QueryOutcome> evaluate_outcomes(const Corpus& corpus, const Pool& pool, const EmbeddingStore& features,
                                            const ModelParams& params, const MetricSpec& metric,
                                            const EvalOptions& options) {
  auto store = std::make_shared<const EmbeddingStore>(embed_pool(pool, features, params));
  const FlatIndex index = build_flat(store, params.weights);
  SearchFn search = [&index](const QueryEmbedding& q, std::size_t k) {
    return index.search(q, k, kernels::Exec::Serial);
  };
  return evaluate(corpus, search, metric, options, features, params).per_query;
}

// Restores corpus order after per-dataset evaluation.
std::vector<QueryOutcome> in_corpus_order(const Corpus& corpus, std::vector<QueryOutcome> outcomes) {
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < corpus.queries.size(); ++i) position.emplace(corpus.queries[i].qid, i);
  std::sort(outcomes.begin(), outcomes.end(),
            [&](const QueryOutcome& a, const QueryOutcome& b) { return position.at(a.qid) < position.at(b.qid); });
  return outcomes;
}

ConditionResult run_condition(const ExperimentPlan& plan, const LoadedCorpus& data, const Condition& c) {
  const Corpus& corpus = data.corpus;
  const auto datasets = dataset_names(corpus.queries);
  ConditionResult result;
  result.condition = c;

  EvalOptions base;
  base.use_instructions = c.use_instructions;
  base.instruction_seed = plan.seed;

  // One model per evaluated dataset group.
  std::vector<std::pair<std::vector<std::string>, ModelParams>> models;
  if (c.single_task && c.train) {
    for (const auto& d : datasets) models.emplace_back(std::vector<std::string>{d}, fit(plan, corpus, data.features, c, {d}, &result.loss_curve));
  } else {
    models.emplace_back(std::vector<std::string>{}, fit(plan, corpus, data.features, c, c.train_datasets, &result.loss_curve));
  }

  std::vector<QueryOutcome> global, local;
  for (const auto& [scope, params] : models) {
    EvalOptions opts = base;
    opts.datasets = scope;
    auto g = evaluate_outcomes(corpus, corpus.pool, data.features, params, plan.metric, opts);
    global.insert(global.end(), std::make_move_iterator(g.begin()), std::make_move_iterator(g.end()));
    if (plan.evaluate_local) {
      for (const auto& d : scope.empty() ? datasets : scope) {
        EvalOptions lo = base;
        lo.datasets = {d};
        auto l = evaluate_outcomes(corpus, local_pool(corpus, d), data.features, params, plan.metric, lo);
        local.insert(local.end(), std::make_move_iterator(l.begin()), std::make_move_iterator(l.end()));
      }
    }
  }
  result.global = aggregate(in_corpus_order(corpus, std::move(global)), plan.metric);
  result.global_errors = classify_errors(corpus, result.global, corpus.pool);
  if (plan.evaluate_local) result.local = aggregate(in_corpus_order(corpus, std::move(local)), plan.metric);
  return result;
}

std::string manifest_json(const ExperimentPlan& plan, const std::filesystem::path& dir,
                          const std::vector<std::string>& artifacts) {
  nlohmann::json m;
  m["plan_hash"] = hex(fnv1a(plan.source_text), 16);
  m["seed"] = plan.seed;
  m["train_seed"] = plan.train.seed;
  if (plan.synth) m["synth_seed"] = plan.synth->seed;
  nlohmann::json conds = nlohmann::json::array();
  for (const auto& c : plan.conditions) conds.push_back(c.name);
  m["conditions"] = conds;
  nlohmann::json files = nlohmann::json::object();
  for (const auto& a : artifacts) files[a] = hex(crc32(read_file_bytes(dir / a)), 8);
  m["artifacts"] = files;
  return m.dump(2) + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
}

}  // namespace

ComparisonReport run_plan(const ExperimentPlan& plan, const LoadedCorpus& data) {
  plan.validate();
  if (data.corpus.queries.empty()) throw Error(ErrorCode::EmptyCorpus, "plan corpus has no queries");
  ComparisonReport report;
  if (plan.parallel_conditions) {
    std::vector<std::future<ConditionResult>> futures;
    for (const auto& c : plan.conditions)
      futures.push_back(std::async(std::launch::async, [&plan, &data, c] { return run_condition(plan, data, c); }));
    for (auto& f : futures) report.conditions.push_back(f.get());
  } else {
    for (const auto& c : plan.conditions) report.conditions.push_back(run_condition(plan, data, c));
  }
  if (plan.delta_treatment) {
    const auto& t = report.at(*plan.delta_treatment);
    const auto& b = report.at(*plan.delta_baseline);
    report.delta_rows = report_rows({&t.global, &t.global_errors}, ReportInput{&b.global, &b.global_errors});
  }
  return report;
}

ComparisonReport run_plan(const ExperimentPlan& plan) { return run_plan(plan, load_corpus(plan)); }

HeldOutReport run_held_out(const ExperimentPlan& plan, const LoadedCorpus& data,
                           const std::vector<std::string>& held_out) {
  plan.validate();
  auto [held_in, held] = split_held_out(data.corpus, held_out, plan.seed);
  HeldOutReport report;
  report.held_out_datasets = dataset_names(held.queries);
  for (const auto& c : plan.conditions) {
    if (c.single_task) continue;  // no model exists for an unseen dataset
    const ModelParams params = fit(plan, held_in, data.features, c, c.train_datasets, nullptr);
    EvalOptions opts;
    opts.use_instructions = c.use_instructions;
    opts.instruction_seed = plan.seed;
    HeldOutResult r;
    r.condition = c.name;
    r.held_out = aggregate(evaluate_outcomes(held, held.pool, data.features, params, plan.metric, opts), plan.metric);
    r.errors = classify_errors(held, r.held_out, held.pool);
    report.conditions.push_back(std::move(r));
  }
  return report;
}

HeldOutReport run_held_out(const ExperimentPlan& plan, const std::vector<std::string>& held_out) {
  return run_held_out(plan, load_corpus(plan), held_out);
}

std::string summarize(const ComparisonReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << "condition            global  local   wrong-modality  wrong-domain  other\n";
  for (const auto& c : report.conditions) {
    os << std::setw(20) << std::left << c.condition.name << std::right << std::setw(6)
       << 100.0 * c.global.average_primary << "  " << std::setw(6)
       << (c.local ? 100.0 * c.local->average_primary : 0.0) << "  " << std::setw(13)
       << 100.0 * c.global_errors.wrong_modality << "%  " << std::setw(11) << 100.0 * c.global_errors.wrong_domain
       << "%  " << std::setw(5) << 100.0 * c.global_errors.other << "%\n";
  }
  if (!report.delta_rows.empty()) {
    os << "\ndelta (treatment - baseline), global pool:\n";
    for (const auto& r : report.delta_rows)
      if (r.delta && (r.metric == "primary" || r.dataset == "average" || r.dataset == "all"))
        os << "  " << r.dataset << ' ' << r.task << ' ' << r.metric << ' ' << std::showpos << 100.0 * *r.delta
           << std::noshowpos << '\n';
  }
  return os.str();
}

std::string summarize(const HeldOutReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << "held-out datasets:";
  for (const auto& d : report.held_out_datasets) os << ' ' << d;
  os << "\ncondition            held-out primary recall  wrong-modality\n";
  for (const auto& c : report.conditions)
    os << std::setw(20) << std::left << c.condition << std::right << std::setw(24)
       << 100.0 * c.held_out.average_primary << "  " << std::setw(13) << 100.0 * c.errors.wrong_modality << "%\n";
  return os.str();
}

std::string write_comparison(const ComparisonReport& report, const ExperimentPlan& plan,
                             const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> artifacts;
  auto emit = [&](const std::string& name, const std::string& text) {
    write_text(dir / name, text);
    artifacts.push_back(name);
  };
  for (const auto& c : report.conditions) {
    const ReportInput g{&c.global, &c.global_errors};
    emit(c.condition.name + ".global.csv", render_report(g, ReportFormat::Csv));
    emit(c.condition.name + ".global.txt", render_report(g, ReportFormat::Text));
    if (c.local) emit(c.condition.name + ".local.csv", render_report({&*c.local, nullptr}, ReportFormat::Csv));
  }
  if (plan.delta_treatment) {
    const auto& t = report.at(*plan.delta_treatment);
    const auto& b = report.at(*plan.delta_baseline);
    const ReportInput ti{&t.global, &t.global_errors}, bi{&b.global, &b.global_errors};
    emit("delta.csv", render_report(ti, ReportFormat::Csv, bi));
    emit("delta.txt", render_report(ti, ReportFormat::Text, bi));
  }
  emit("summary.txt", summarize(report));
  const std::string manifest = manifest_json(plan, dir, artifacts);
  write_text(dir / "manifest.json", manifest);
  return manifest;
}

std::string write_held_out(const HeldOutReport& report, const ExperimentPlan& plan, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> artifacts;
  for (const auto& c : report.conditions) {
    const std::string name = c.condition + ".held_out.csv";
    write_text(dir / name, render_report({&c.held_out, &c.errors}, ReportFormat::Csv));
    artifacts.push_back(name);
  }
  write_text(dir / "held_out_summary.txt", summarize(report));
  artifacts.push_back("held_out_summary.txt");
  const std::string manifest = manifest_json(plan, dir, artifacts);
  write_text(dir / "held_out_manifest.json", manifest);
  return manifest;
}

}  // namespace unir
