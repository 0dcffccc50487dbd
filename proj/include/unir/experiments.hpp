#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "unir/eval.hpp"
#include "unir/report.hpp"
#include "unir/synthgen.hpp"
#include "unir/train.hpp"

namespace unir {

struct Condition {
  std::string name;
  bool train = true;               // false = zero-shot (untrained encoders)
  bool use_instructions = true;
  bool single_task = false;        // one model per dataset, each evaluated on its own dataset
  std::vector<std::string> train_datasets;  // empty = all (held-in) datasets
  FusionMode mode = FusionMode::ScoreFusion;
};

struct ExperimentPlan {
  std::uint64_t seed = 0;
  std::optional<SynthConfig> synth;  // generate the corpus in-run
  std::filesystem::path queries, candidates, features;
  std::vector<Condition> conditions;
  MetricSpec metric;
  TrainConfig train;                 // shared hyperparameters; per-condition switches override
  std::optional<std::string> delta_treatment;  // Delta = treatment - baseline
  std::optional<std::string> delta_baseline;
  std::vector<std::string> held_out;  // used by run_held_out
  bool evaluate_local = true;
  bool parallel_conditions = false;
  std::filesystem::path out_dir;
  std::string source_text;           // raw plan text, hashed into the manifest

  void validate() const;  // throws ConfigInvalid
  ExperimentPlan with_seed(std::uint64_t s) const;
};

ExperimentPlan parse_plan(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentPlan read_plan(const std::filesystem::path& path);

struct ConditionResult {
  Condition condition;
  EvalReport global;
  ErrorBreakdown global_errors;
  std::optional<EvalReport> local;
  std::vector<double> loss_curve;
};

struct ComparisonReport {
  std::vector<ConditionResult> conditions;
  std::vector<ReportRow> delta_rows;  // treatment vs baseline on the global pool

  const ConditionResult& at(const std::string& name) const;
};

struct HeldOutResult {
  std::string condition;
  EvalReport held_out;
  ErrorBreakdown errors;
};

struct HeldOutReport {
  std::vector<std::string> held_out_datasets;
  std::vector<HeldOutResult> conditions;

  const HeldOutResult& at(const std::string& name) const;
};

// Loads (or generates) the plan's corpus with its raw feature store.
struct LoadedCorpus {
  Corpus corpus;
  EmbeddingStore features;
};
LoadedCorpus load_corpus(const ExperimentPlan& plan);

ComparisonReport run_plan(const ExperimentPlan& plan);
ComparisonReport run_plan(const ExperimentPlan& plan, const LoadedCorpus& data);

// Trains each condition on held-in datasets only and evaluates the held-out
// ones on the global pool without further updates.
HeldOutReport run_held_out(const ExperimentPlan& plan, const std::vector<std::string>& held_out);
HeldOutReport run_held_out(const ExperimentPlan& plan, const LoadedCorpus& data,
                           const std::vector<std::string>& held_out);

// Writes per-condition reports, the delta table, a summary and manifest.json
// (config hash, seeds, CRC-32 of every artifact). Returns the manifest text.
std::string write_comparison(const ComparisonReport& report, const ExperimentPlan& plan,
                             const std::filesystem::path& dir);
std::string write_held_out(const HeldOutReport& report, const ExperimentPlan& plan, const std::filesystem::path& dir);

std::string summarize(const ComparisonReport& report);
std::string summarize(const HeldOutReport& report);

}  // namespace unir
