// unir: command-line front end for the retrieval engine.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "unir/crc32.hpp"
#include "unir/error.hpp"
#include "unir/eval.hpp"
#include "unir/experiments.hpp"
#include "unir/index_file.hpp"
#include "unir/kernels.hpp"
#include "unir/report.hpp"
#include "unir/service.hpp"
#include "unir/synthgen.hpp"
#include "unir/train.hpp"

using namespace unir;
namespace fs = std::filesystem;

namespace {

enum class Level { Error, Warn, Info, Debug };
Level g_level = Level::Info;

template <class... A>
void log(Level l, const A&... parts) {
  if (l > g_level) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::cerr << "[" << names[static_cast<int>(l)] << "] ";
  (std::cerr << ... << parts) << '\n';
}

struct Usage : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 0;
  int threads = 0;
  std::string log_level = "info";
};

void apply_globals(const Globals& g) {
  static const std::map<std::string, Level> levels = {
      {"error", Level::Error}, {"warn", Level::Warn}, {"info", Level::Info}, {"debug", Level::Debug}};
  g_level = levels.at(g.log_level);
  int threads = g.threads;
  if (const char* env = std::getenv("UNIR_THREADS")) {
    try {
      threads = std::stoi(env);
    } catch (const std::exception&) {
      throw Usage(std::string("UNIR_THREADS is not an integer: ") + env);
    }
  }
  kernels::set_num_threads(threads);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

struct CorpusArgs {
  std::string queries, candidates, features;
  void add(CLI::App* app, bool need_features) {
    app->add_option("--queries", queries, "query JSONL")->required()->check(CLI::ExistingFile);
    app->add_option("--candidates", candidates, "candidate JSONL")->required()->check(CLI::ExistingFile);
    auto* f = app->add_option("--features", features, "raw feature embedding file")->check(CLI::ExistingFile);
    if (need_features) f->required();
  }
};

struct EvalArgs {
  CorpusArgs corpus;
  std::string checkpoint, format = "text", out, pool = "global", baseline;
  bool no_instructions = false;
  void add(CLI::App* app) {
    corpus.add(app, true);
    app->add_option("--checkpoint", checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
    app->add_flag("--no-instructions", no_instructions, "encode queries without instruction prefixes");
    app->add_option("--pool", pool, "global or local")->check(CLI::IsMember({"global", "local"}));
    app->add_option("--format", format, "text, csv or json");
    app->add_option("--out", out, "output path (default stdout)");
  }
};

struct Evaluated {
  Corpus corpus;
  EvalReport report;
  ErrorBreakdown errors;
};

Evaluated run_eval(const EvalArgs& a, std::uint64_t seed) {
  Evaluated r{parse_corpus(a.corpus.queries, a.corpus.candidates), {}, {}};
  const EmbeddingStore features = read_embeddings(a.corpus.features);
  const ModelParams params = read_checkpoint(a.checkpoint);
  const MetricSpec metric;
  EvalOptions opts;
  opts.use_instructions = !a.no_instructions;
  opts.instruction_seed = seed;

  auto eval_on = [&](const Pool& pool, std::vector<std::string> datasets) {
    auto store = std::make_shared<const EmbeddingStore>(embed_pool(pool, features, params));
    const FlatIndex index = build_flat(store, params.weights);
    SearchFn search = [&index](const QueryEmbedding& q, std::size_t k) { return index.search(q, k); };
    EvalOptions o = opts;
    o.datasets = std::move(datasets);
    return evaluate(r.corpus, search, metric, o, features, params).per_query;
  };
  std::vector<QueryOutcome> outcomes;
  if (a.pool == "global") {
    outcomes = eval_on(r.corpus.pool, {});
  } else {
    for (const auto& d : dataset_names(r.corpus.queries)) {
      auto part = eval_on(local_pool(r.corpus, d), {d});
      outcomes.insert(outcomes.end(), part.begin(), part.end());
    }
  }
  r.report = aggregate(std::move(outcomes), metric);
  r.errors = classify_errors(r.corpus, r.report, r.corpus.pool);
  return r;
}

int cmd_validate(const CorpusArgs& a) {
  const Corpus corpus = parse_corpus(a.queries, a.candidates);
  const auto& s = corpus.pool.stats();
  auto count = [&s](Modality m) { return s.by_modality.count(m) ? s.by_modality.at(m) : 0; };
  std::cout << "queries: " << corpus.queries.size() << "\ncandidates: " << s.total << " (text "
            << count(Modality::Text) << ", image " << count(Modality::Image) << ", image+text "
            << count(Modality::ImageText) << ")\n";
  for (const auto& d : dataset_names(corpus.queries)) std::cout << "dataset: " << d << '\n';
  if (!a.features.empty()) {
    const EmbeddingStore features = read_embeddings(a.features);
    std::size_t missing = 0;
    for (const auto& c : corpus.pool.candidates())
      if (c.image_ref && !features.row_of(*c.image_ref)) ++missing;
    for (const auto& q : corpus.queries)
      if (q.image_ref && !features.row_of(*q.image_ref)) ++missing;
    if (missing) throw Error(ErrorCode::MissingFeature, std::to_string(missing) + " image references have no feature row");
    std::cout << "features: " << features.size() << " rows, dim " << features.dim() << '\n';
  }
  for (const auto& w : corpus.warnings) log(Level::Warn, w);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unir: instruction-guided multimodal retrieval engine"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "global seed")->capture_default_str();
  app.add_option("--threads", g.threads, "kernel threads (0 = runtime default; UNIR_THREADS overrides)");
  app.add_option("--log-level", g.log_level, "error, warn, info or debug")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));

  // validate
  CorpusArgs validate_args;
  auto* validate = app.add_subcommand("validate", "parse and link a corpus");
  validate_args.add(validate, false);

  // synth
  SynthConfig synth_cfg;
  std::string synth_out, synth_tasks = "T2I,T2T,I2T,I2I";
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--domains", synth_cfg.n_domains)->capture_default_str();
  synth->add_option("--tasks", synth_tasks, "comma-separated task names")->capture_default_str();
  synth->add_option("--queries-per-task", synth_cfg.queries_per_task)->capture_default_str();
  synth->add_option("--pool-per-task", synth_cfg.pool_per_task)->capture_default_str();
  synth->add_option("--dim", synth_cfg.dim)->capture_default_str();
  synth->add_option("--cluster-spread", synth_cfg.cluster_spread)->capture_default_str();
  synth->add_option("--link", synth_cfg.cross_modal_link_strength)->capture_default_str();
  synth->add_option("--topics", synth_cfg.topics_per_domain)->capture_default_str();
  synth->add_option("--text-noise", synth_cfg.text_noise)->capture_default_str();
  synth->add_option("--image-offset", synth_cfg.image_offset)->capture_default_str();

  // train
  CorpusArgs train_corpus;
  TrainConfig train_cfg;
  std::string train_out, train_mode = "score", train_datasets, loss_curve;
  bool no_instructions = false, no_hard_negatives = false;
  auto* train_cmd = app.add_subcommand("train", "fit encoders and fusion weights");
  train_corpus.add(train_cmd, true);
  train_cmd->add_option("--out", train_out, "checkpoint path")->required();
  train_cmd->add_option("--epochs", train_cfg.epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", train_cfg.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", train_cfg.learning_rate)->capture_default_str();
  train_cmd->add_option("--temperature", train_cfg.temperature_init)->capture_default_str();
  train_cmd->add_option("--mode", train_mode, "score or feature")->check(CLI::IsMember({"score", "feature"}));
  train_cmd->add_option("--datasets", train_datasets, "comma-separated datasets to train on");
  train_cmd->add_flag("--no-instructions", no_instructions);
  train_cmd->add_flag("--no-hard-negatives", no_hard_negatives);
  train_cmd->add_flag("--freeze-weights", train_cfg.freeze_weights);
  train_cmd->add_option("--loss-curve", loss_curve, "write per-step loss CSV here");

  // embed
  std::string embed_candidates, embed_features, embed_checkpoint, embed_out;
  auto* embed = app.add_subcommand("embed", "embed the candidate pool with a checkpoint");
  embed->add_option("--candidates", embed_candidates)->required()->check(CLI::ExistingFile);
  embed->add_option("--features", embed_features)->required()->check(CLI::ExistingFile);
  embed->add_option("--checkpoint", embed_checkpoint)->required()->check(CLI::ExistingFile);
  embed->add_option("--out", embed_out, "embedding file")->required();

  // index-build
  std::string ib_embeddings, ib_out, ib_kind = "flat", ib_checkpoint;
  std::size_t ib_lists = 16, ib_probe = 1;
  auto* index_build = app.add_subcommand("index-build", "build a flat or clustered index over an embedding file");
  index_build->add_option("--embeddings", ib_embeddings)->required()->check(CLI::ExistingFile);
  index_build->add_option("--out", ib_out, "index spec (JSON)")->required();
  index_build->add_option("--kind", ib_kind)->check(CLI::IsMember({"flat", "clustered"}))->capture_default_str();
  index_build->add_option("--lists", ib_lists)->capture_default_str();
  index_build->add_option("--n-probe", ib_probe, "default probe count")->capture_default_str();
  index_build->add_option("--checkpoint", ib_checkpoint, "take fusion weights from this checkpoint")
      ->check(CLI::ExistingFile);

  // search
  std::string s_index, s_checkpoint, s_features, s_txt, s_img, s_instruction;
  std::size_t s_k = 10, s_probe = 0;
  auto* search = app.add_subcommand("search", "run one query against an index");
  search->add_option("--index", s_index)->required()->check(CLI::ExistingFile);
  search->add_option("--checkpoint", s_checkpoint)->required()->check(CLI::ExistingFile);
  search->add_option("--features", s_features)->required()->check(CLI::ExistingFile);
  search->add_option("--txt", s_txt);
  search->add_option("--img-id", s_img);
  search->add_option("--instruction", s_instruction);
  search->add_option("--k", s_k)->capture_default_str();
  search->add_option("--n-probe", s_probe, "clustered only; 0 = index default");

  // serve
  std::string v_addr = "127.0.0.1:8080", v_index, v_checkpoint, v_features;
  auto* serve = app.add_subcommand("serve", "HTTP search service");
  serve->add_option("--addr", v_addr, "host:port")->capture_default_str();
  serve->add_option("--index", v_index)->required()->check(CLI::ExistingFile);
  serve->add_option("--checkpoint", v_checkpoint)->required()->check(CLI::ExistingFile);
  serve->add_option("--features", v_features)->required()->check(CLI::ExistingFile);

  // eval / errors
  EvalArgs eval_args, errors_args;
  auto* eval_cmd = app.add_subcommand("eval", "recall@k on a corpus");
  eval_args.add(eval_cmd);
  eval_cmd->add_option("--baseline", eval_args.baseline, "report CSV to compute deltas against")
      ->check(CLI::ExistingFile);
  auto* errors = app.add_subcommand("errors", "wrong-modality / wrong-domain / other breakdown");
  errors_args.add(errors);

  // experiment
  std::string x_plan, x_out;
  std::size_t x_seeds = 1;
  std::vector<std::string> x_held_out;
  auto* experiment = app.add_subcommand("experiment", "run a declarative experiment plan");
  experiment->require_subcommand(1);
  experiment->fallthrough();
  auto* x_run = experiment->add_subcommand("run", "train, index and evaluate every condition");
  auto* x_held = experiment->add_subcommand("held-out", "train on held-in datasets, evaluate the held-out ones");
  for (auto* sub : {x_run, x_held}) {
    sub->add_option("--plan", x_plan)->required()->check(CLI::ExistingFile);
    sub->add_option("--out", x_out, "run directory (default: plan out_dir or runs/<plan name>)");
    sub->add_option("--seeds", x_seeds, "repeat with seeds plan.seed .. plan.seed+N-1")->capture_default_str();
  }
  x_held->add_option("--held-out", x_held_out, "datasets, task names or random:N (default: plan held_out)");

  // report
  std::string r_input, r_baseline, r_format = "text", r_out;
  auto* report = app.add_subcommand("report", "re-render a report CSV, optionally with deltas");
  report->add_option("--input", r_input)->required()->check(CLI::ExistingFile);
  report->add_option("--baseline", r_baseline)->check(CLI::ExistingFile);
  report->add_option("--format", r_format);
  report->add_option("--out", r_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[USAGE]: " << e.what() << '\n';
    return 1;
  }

  try {
    apply_globals(g);

    if (*validate) return cmd_validate(validate_args);

    if (*synth) {
      synth_cfg.seed = g.seed;
      synth_cfg.tasks.clear();
      std::stringstream ss(synth_tasks);
      for (std::string t; std::getline(ss, t, ',');) synth_cfg.tasks.push_back(parse_task_name(t));
      synth_cfg.validate();
      const SynthCorpus s = generate(synth_cfg);
      const SynthPaths p = write_synth(s, synth_out);
      log(Level::Info, "wrote ", s.corpus.queries.size(), " queries, ", s.corpus.pool.size(), " candidates to ",
          synth_out);
      std::cout << p.queries.string() << '\n' << p.candidates.string() << '\n' << p.features.string() << '\n'
                << p.labels.string() << '\n';
      return 0;
    }

    if (*train_cmd) {
      const Corpus corpus = parse_corpus(train_corpus.queries, train_corpus.candidates);
      const EmbeddingStore features = read_embeddings(train_corpus.features);
      train_cfg.seed = g.seed;
      train_cfg.mode = parse_fusion_mode(train_mode);
      train_cfg.use_instructions = !no_instructions;
      train_cfg.use_hard_negatives = !no_hard_negatives;
      std::stringstream ss(train_datasets);
      for (std::string d; std::getline(ss, d, ',');) train_cfg.datasets.push_back(d);
      const TrainResult r = train(corpus, features, train_cfg);
      for (std::size_t e = 0; e < r.epoch_reports.size(); ++e)
        log(Level::Info, "epoch ", e + 1, " loss ", r.epoch_reports[e].loss, " in-batch acc ",
            r.epoch_reports[e].accuracy_in_batch);
      write_checkpoint(r.params, train_cfg.hash(), train_out);
      if (!loss_curve.empty()) {
        std::ostringstream os;
        os << "step,loss\n";
        for (std::size_t i = 0; i < r.loss_curve.size(); ++i) os << i << ',' << format_double(r.loss_curve[i]) << '\n';
        write_text(loss_curve, os.str());
      }
      return 0;
    }

    if (*embed) {
      std::ifstream cands(embed_candidates);
      std::istringstream no_queries;
      const Corpus corpus = parse_corpus(no_queries, cands);
      const EmbeddingStore features = read_embeddings(embed_features);
      const ModelParams params = read_checkpoint(embed_checkpoint);
      write_embeddings(embed_pool(corpus.pool, features, params), embed_out);
      log(Level::Info, "embedded ", corpus.pool.size(), " candidates (", fusion_mode_name(params.mode), " mode)");
      return 0;
    }

    if (*index_build) {
      IndexSpec spec;
      spec.kind = ib_kind;
      spec.n_lists = ib_kind == "clustered" ? ib_lists : 0;
      spec.n_probe = ib_probe;
      spec.seed = g.seed;
      if (!ib_checkpoint.empty()) spec.weights = read_checkpoint(ib_checkpoint).weights;
      const fs::path out = fs::absolute(ib_out);
      const fs::path emb = fs::absolute(ib_embeddings);
      spec.embeddings = emb.lexically_relative(out.parent_path());
      spec.embeddings_crc = crc32(read_file_bytes(emb));
      write_index_spec(spec, out);
      const LoadedIndex loaded = load_index(out);  // builds once so bad parameters fail here
      if (const auto* c = std::get_if<ClusteredIndex>(&loaded.index)) {
        const auto& h = c->clusters().inertia_history;
        log(Level::Info, "k-means: ", c->n_lists(), " lists, ", h.size(), " steps, inertia ",
            h.empty() ? 0.0 : h.back());
      }
      log(Level::Info, "index over ", loaded.flat().store().size(), " rows written to ", ib_out);
      return 0;
    }

    if (*search) {
      const ModelParams params = read_checkpoint(s_checkpoint);
      const EmbeddingStore features = read_embeddings(s_features);
      const LoadedIndex index = load_index(s_index, params.weights);
      auto opt = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<std::string>(s); };
      if (s_txt.empty() && s_img.empty()) throw Usage("search needs --txt or --img-id");
      const QueryEmbedding q = embed_query_inputs(opt(s_txt), opt(s_img), opt(s_instruction), features, params);
      const RetrievalResult r = index.search(q, s_k, s_probe);
      for (std::size_t i = 0; i < r.entries.size(); ++i)
        std::cout << i + 1 << '\t' << r.entries[i].did << '\t' << format_double(r.entries[i].score) << '\n';
      return 0;
    }

    if (*serve) {
      const auto colon = v_addr.rfind(':');
      if (colon == std::string::npos) throw Usage("--addr must be host:port");
      const std::string host = v_addr.substr(0, colon);
      const int port = std::stoi(v_addr.substr(colon + 1));
      SearchService service;
      HttpServer server(service);
      const int bound = server.bind(host, port);
      // The endpoint answers 503 until the index is in memory.
      std::thread loader([&] {
        try {
          service.set_engine(load_engine(v_index, v_checkpoint, v_features));
          log(Level::Info, "index loaded");
        } catch (const Error& e) {
          log(Level::Error, "cannot load index: ", e.what());
          server.stop();
        }
      });
      log(Level::Info, "listening on ", host, ":", bound);
      server.listen();
      loader.join();
      if (!service.engine()) throw Error(ErrorCode::Io, "index failed to load");
      return 0;
    }

    if (*eval_cmd) {
      const Evaluated r = run_eval(eval_args, g.seed);
      const ReportFormat format = parse_report_format(eval_args.format);
      auto rows = report_rows({&r.report, &r.errors});
      if (!eval_args.baseline.empty()) rows = with_baseline(std::move(rows), parse_report_csv(read_text(eval_args.baseline)));
      write_text(eval_args.out, render_rows(rows, format));
      return 0;
    }

    if (*errors) {
      const Evaluated r = run_eval(errors_args, g.seed);
      const ReportFormat format = parse_report_format(errors_args.format);
      std::vector<ReportRow> rows;
      for (auto& row : report_rows({&r.report, &r.errors}))
        if (row.dataset == "all") rows.push_back(row);
      log(Level::Info, r.errors.failed, " of ", r.errors.total, " queries failed");
      write_text(errors_args.out, render_rows(rows, format));
      return 0;
    }

    if (*experiment) {
      const ExperimentPlan base = read_plan(x_plan);
      fs::path out = !x_out.empty() ? fs::path(x_out)
                     : !base.out_dir.empty() ? base.out_dir
                                             : fs::path("runs") / fs::path(x_plan).stem();
      if (x_seeds == 0) throw Usage("--seeds must be positive");
      for (std::size_t i = 0; i < x_seeds; ++i) {
        const ExperimentPlan plan = x_seeds == 1 && !g.seed ? base : base.with_seed((g.seed ? g.seed : base.seed) + i);
        const fs::path dir = x_seeds == 1 ? out : out / ("seed-" + std::to_string(plan.seed));
        const LoadedCorpus data = load_corpus(plan);
        if (*x_run) {
          const ComparisonReport r = run_plan(plan, data);
          write_comparison(r, plan, dir);
          std::cout << "seed " << plan.seed << '\n' << summarize(r);
        } else {
          const auto held = x_held_out.empty() ? plan.held_out : x_held_out;
          if (held.empty()) throw Usage("no held-out datasets: pass --held-out or set held_out in the plan");
          const HeldOutReport r = run_held_out(plan, data, held);
          write_held_out(r, plan, dir);
          std::cout << "seed " << plan.seed << '\n' << summarize(r);
        }
        log(Level::Info, "artifacts in ", dir.string());
      }
      return 0;
    }

    if (*report) {
      auto rows = parse_report_csv(read_text(r_input));
      if (!r_baseline.empty()) rows = with_baseline(std::move(rows), parse_report_csv(read_text(r_baseline)));
      write_text(r_out, render_rows(rows, parse_report_format(r_format)));
      return 0;
    }
  } catch (const Usage& e) {
    std::cerr << "error[USAGE]: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error[" << error_code_name(e.code()) << "]: " << e.what() << '\n';
    return is_data_error(e.code()) ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error[INTERNAL]: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
