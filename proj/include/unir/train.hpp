#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unir/corpus.hpp"
#include "unir/embedding_store.hpp"
#include "unir/model.hpp"

namespace unir {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double learning_rate = 1e-2;
  double temperature_init = 0.07;
  std::uint64_t seed = 0;
  bool use_instructions = true;
  FusionMode mode = FusionMode::ScoreFusion;
  bool freeze_weights = false;      // keep w1..w4 at their initial values
  bool use_hard_negatives = true;   // append QueryInstance::negatives as extra columns
  // Restrict training to these datasets; empty means every dataset.
  std::vector<std::string> datasets;

  std::uint64_t hash() const;  // stable fingerprint recorded in checkpoints
};

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;  // dLoss/dSim, same shape as the input
};

// Symmetric InfoNCE over an N x N similarity matrix with positives on the
// diagonal: mean of row-wise and column-wise softmax cross-entropy of sim/tau.
// Throws NonSquare, NonPositiveTemperature.
LossAndGrad contrastive_loss(const Matrix& sim, double temperature);

// N x (N + H) variant: columns past N are hard negatives that join the
// row-wise softmax only. Throws NonSquare when cols < rows.
LossAndGrad contrastive_loss_with_negatives(const Matrix& sim, double temperature);

// Raw model inputs of one query or candidate.
struct ItemInput {
  std::optional<std::vector<double>> text_features;  // normalized hash features
  std::optional<std::vector<float>> image_raw;
};

// Queries pair with the first |queries| candidates; the rest are negatives.
struct Batch {
  std::vector<ItemInput> queries;
  std::vector<ItemInput> candidates;
};

struct ParamGradients {
  double w[4] = {0, 0, 0, 0};
  double log_inv_temperature = 0.0;
  Matrix text_projection;
  Matrix image_projection;
  Matrix fusion_projection;
};

struct BatchLossReport {
  double loss = 0.0;
  double accuracy_in_batch = 0.0;
  std::map<std::string, double> grad_norms;
};

double batch_loss(const ModelParams& params, const Batch& batch);
BatchLossReport batch_loss_and_gradients(const ModelParams& params, const Batch& batch, ParamGradients& grads);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst_parameter;
};

// Central finite differences over w1..w4 (score mode), the log-temperature
// and a seeded sample of projection entries (at least 64).
GradientCheckResult gradient_check(const ModelParams& params, const Batch& batch, double epsilon = 1e-4,
                                   std::size_t projection_samples = 96, std::uint64_t sample_seed = 1);

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_curve;  // one entry per optimizer step
  std::vector<BatchLossReport> epoch_reports;  // mean over each epoch's batches
};

// Builds model inputs for a query (optionally instruction-prefixed) and a candidate.
ItemInput query_input(const QueryInstance& q, const Instruction* instruction, const EmbeddingStore& features,
                      std::size_t dim);
ItemInput candidate_input(const Candidate& c, const EmbeddingStore& features, std::size_t dim);

// Adam (0.9, 0.999, 1e-8) over in-batch contrastive batches; each epoch
// shuffles the queries with the seeded generator.
// Throws EmptyCorpus, BatchTooSmall.
TrainResult train(const Corpus& corpus, const EmbeddingStore& features, const TrainConfig& config,
                  std::optional<ModelParams> initial = std::nullopt);

// Runs `steps` optimizer steps on one fixed batch.
TrainResult train_on_batch(const Batch& batch, ModelParams params, const TrainConfig& config, std::size_t steps);

// Versioned binary checkpoint with a trailing CRC-32.
void write_checkpoint(const ModelParams& params, std::uint64_t config_hash, const std::filesystem::path& path);
ModelParams read_checkpoint(const std::filesystem::path& path, std::uint64_t* config_hash = nullptr);
std::vector<std::uint8_t> serialize_checkpoint(const ModelParams& params, std::uint64_t config_hash);
ModelParams deserialize_checkpoint(std::span<const std::uint8_t> bytes, std::uint64_t* config_hash = nullptr);

}  // namespace unir
