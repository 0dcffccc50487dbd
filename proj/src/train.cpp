#include "unir/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "unir/error.hpp"

namespace unir {

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct ItemForward {
  std::vector<double> image_unit;  // empty when absent or zero
  double image_norm = 0.0;
  std::vector<double> text_unit;
  double text_norm = 0.0;
  std::vector<double> fused_pre;  // feature mode: M [nI; nT]
  double fused_norm = 0.0;
  std::vector<double> embedding;
};

void project_unit(const Matrix& proj, std::span<const double> x, std::vector<double>& unit, double& n) {
  unit = matvec(proj, x);
  n = norm(unit);
  if (n > 0.0)
    for (double& v : unit) v /= n;
  else
    unit.clear();
}

ItemForward forward_item(const ModelParams& p, const ItemInput& in, bool query_side) {
  const std::size_t dim = p.dim();
  ItemForward f;
  if (in.image_raw) {
    if (in.image_raw->size() != dim) throw Error(ErrorCode::DimMismatch, "raw image feature dim mismatch");
    project_unit(p.image.projection, to_double(*in.image_raw), f.image_unit, f.image_norm);
  }
  if (in.text_features) project_unit(p.text.projection, *in.text_features, f.text_unit, f.text_norm);

  f.embedding.assign(dim, 0.0);
  if (p.mode == FusionMode::ScoreFusion) {
    const double wa = query_side ? p.weights.w1 : p.weights.w3;
    const double wb = query_side ? p.weights.w2 : p.weights.w4;
    for (std::size_t d = 0; d < dim; ++d) {
      if (!f.image_unit.empty()) f.embedding[d] += wa * f.image_unit[d];
      if (!f.text_unit.empty()) f.embedding[d] += wb * f.text_unit[d];
    }
    return f;
  }
  f.fused_pre.assign(dim, 0.0);
  for (std::size_t r = 0; r < dim; ++r) {
    auto row = p.fusion_projection.row(r);
    double s = 0.0;
    if (!f.image_unit.empty()) s += dot(row.first(dim), f.image_unit);
    if (!f.text_unit.empty()) s += dot(row.last(dim), f.text_unit);
    f.fused_pre[r] = s;
  }
  f.fused_norm = norm(f.fused_pre);
  if (f.fused_norm > 0.0)
    for (std::size_t d = 0; d < dim; ++d) f.embedding[d] = f.fused_pre[d] / f.fused_norm;
  return f;
}

// d(unit)/d(pre) applied to an upstream gradient: (g - u <u, g>) / |pre|.
std::vector<double> normalize_backward(std::span<const double> unit, double pre_norm, std::span<const double> g) {
  const double ug = dot(unit, g);
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = (g[i] - unit[i] * ug) / pre_norm;
  return out;
}

void add_outer(Matrix& m, std::span<const double> col, std::span<const double> row, std::size_t col_offset = 0) {
  for (std::size_t r = 0; r < col.size(); ++r) {
    if (col[r] == 0.0) continue;
    for (std::size_t c = 0; c < row.size(); ++c) m(r, col_offset + c) += col[r] * row[c];
  }
}

void backward_item(const ModelParams& p, const ItemInput& in, const ItemForward& f, std::span<const double> g_emb,
                   bool query_side, ParamGradients& grads) {
  const std::size_t dim = p.dim();
  std::vector<double> g_img, g_txt;
  if (p.mode == FusionMode::ScoreFusion) {
    const double wa = query_side ? p.weights.w1 : p.weights.w3;
    const double wb = query_side ? p.weights.w2 : p.weights.w4;
    double& dwa = grads.w[query_side ? 0 : 2];
    double& dwb = grads.w[query_side ? 1 : 3];
    if (!f.image_unit.empty()) {
      dwa += dot(g_emb, f.image_unit);
      g_img.resize(dim);
      for (std::size_t d = 0; d < dim; ++d) g_img[d] = wa * g_emb[d];
    }
    if (!f.text_unit.empty()) {
      dwb += dot(g_emb, f.text_unit);
      g_txt.resize(dim);
      for (std::size_t d = 0; d < dim; ++d) g_txt[d] = wb * g_emb[d];
    }
  } else {
    if (f.fused_norm == 0.0) return;
    const auto g_pre = normalize_backward(f.embedding, f.fused_norm, g_emb);
    if (!f.image_unit.empty()) add_outer(grads.fusion_projection, g_pre, f.image_unit, 0);
    if (!f.text_unit.empty()) add_outer(grads.fusion_projection, g_pre, f.text_unit, dim);
    if (!f.image_unit.empty()) g_img.assign(dim, 0.0);
    if (!f.text_unit.empty()) g_txt.assign(dim, 0.0);
    for (std::size_t r = 0; r < dim; ++r) {
      if (g_pre[r] == 0.0) continue;
      auto row = p.fusion_projection.row(r);
      for (std::size_t c = 0; c < dim; ++c) {
        if (!g_img.empty()) g_img[c] += row[c] * g_pre[r];
        if (!g_txt.empty()) g_txt[c] += row[dim + c] * g_pre[r];
      }
    }
  }
  if (!g_img.empty()) {
    const auto g_pre = normalize_backward(f.image_unit, f.image_norm, g_img);
    add_outer(grads.image_projection, g_pre, to_double(*in.image_raw));
  }
  if (!g_txt.empty()) {
    const auto g_pre = normalize_backward(f.text_unit, f.text_norm, g_txt);
    add_outer(grads.text_projection, g_pre, *in.text_features);
  }
}

double log_sum_exp(std::span<const double> xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

struct Forward {
  std::vector<ItemForward> queries;
  std::vector<ItemForward> candidates;
  Matrix sim;
};

Forward forward_batch(const ModelParams& p, const Batch& batch) {
  Forward fw;
  for (const auto& q : batch.queries) fw.queries.push_back(forward_item(p, q, true));
  for (const auto& c : batch.candidates) fw.candidates.push_back(forward_item(p, c, false));
  fw.sim = Matrix(fw.queries.size(), fw.candidates.size());
  for (std::size_t i = 0; i < fw.queries.size(); ++i)
    for (std::size_t j = 0; j < fw.candidates.size(); ++j)
      fw.sim(i, j) = dot(fw.queries[i].embedding, fw.candidates[j].embedding);
  return fw;
}

double frobenius(std::span<const double> xs) { return std::sqrt(dot(xs, xs)); }

}  // namespace

std::uint64_t TrainConfig::hash() const {
  std::uint64_t h = mix64(batch_size);
  auto fold = [&h](std::uint64_t v) { h = mix64(h ^ v); };
  fold(epochs);
  fold(std::bit_cast<std::uint64_t>(learning_rate));
  fold(std::bit_cast<std::uint64_t>(temperature_init));
  fold(seed);
  fold(use_instructions);
  fold(static_cast<std::uint64_t>(mode));
  fold(freeze_weights);
  fold(use_hard_negatives);
  for (const auto& d : datasets)
    for (unsigned char c : d) fold(c);
  return h;
}

LossAndGrad contrastive_loss_with_negatives(const Matrix& sim, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw Error(ErrorCode::NonPositiveTemperature, "temperature must be positive");
  const std::size_t n = sim.rows(), m = sim.cols();
  if (n == 0 || m < n) throw Error(ErrorCode::NonSquare, "similarity matrix needs at least as many columns as rows");

  LossAndGrad out{0.0, Matrix(n, m)};
  const double inv_t = 1.0 / temperature;
  const double scale = 0.5 / static_cast<double>(n);
  std::vector<double> logits(m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) logits[j] = sim(i, j) * inv_t;
    const double lse = log_sum_exp(logits);
    out.loss += scale * (lse - logits[i]);
    for (std::size_t j = 0; j < m; ++j)
      out.grad(i, j) += scale * inv_t * (std::exp(logits[j] - lse) - (i == j ? 1.0 : 0.0));
  }
  std::vector<double> col(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = sim(i, j) * inv_t;
    const double lse = log_sum_exp(col);
    out.loss += scale * (lse - col[j]);
    for (std::size_t i = 0; i < n; ++i)
      out.grad(i, j) += scale * inv_t * (std::exp(col[i] - lse) - (i == j ? 1.0 : 0.0));
  }
  return out;
}

LossAndGrad contrastive_loss(const Matrix& sim, double temperature) {
  if (sim.rows() != sim.cols()) throw Error(ErrorCode::NonSquare, "similarity matrix must be square");
  return contrastive_loss_with_negatives(sim, temperature);
}

double batch_loss(const ModelParams& params, const Batch& batch) {
  const auto fw = forward_batch(params, batch);
  return contrastive_loss_with_negatives(fw.sim, params.temperature()).loss;
}

BatchLossReport batch_loss_and_gradients(const ModelParams& p, const Batch& batch, ParamGradients& grads) {
  const std::size_t dim = p.dim();
  grads = ParamGradients{};
  grads.text_projection = Matrix(dim, dim);
  grads.image_projection = Matrix(dim, dim);
  grads.fusion_projection = Matrix(dim, 2 * dim);

  const auto fw = forward_batch(p, batch);
  const auto lg = contrastive_loss_with_negatives(fw.sim, p.temperature());
  const std::size_t n = fw.queries.size(), m = fw.candidates.size();

  BatchLossReport report;
  report.loss = lg.loss;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < m; ++j)
      if (fw.sim(i, j) > fw.sim(i, best)) best = j;
    correct += best == i;
  }
  report.accuracy_in_batch = static_cast<double>(correct) / static_cast<double>(n);

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) grads.log_inv_temperature += lg.grad(i, j) * fw.sim(i, j);

  std::vector<double> g(dim);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      const double gij = lg.grad(i, j);
      for (std::size_t d = 0; d < dim; ++d) g[d] += gij * fw.candidates[j].embedding[d];
    }
    backward_item(p, batch.queries[i], fw.queries[i], g, true, grads);
  }
  for (std::size_t j = 0; j < m; ++j) {
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double gij = lg.grad(i, j);
      for (std::size_t d = 0; d < dim; ++d) g[d] += gij * fw.queries[i].embedding[d];
    }
    backward_item(p, batch.candidates[j], fw.candidates[j], g, false, grads);
  }

  report.grad_norms["weights"] = frobenius(grads.w);
  report.grad_norms["log_temperature"] = std::abs(grads.log_inv_temperature);
  report.grad_norms["text_projection"] = frobenius(grads.text_projection.data());
  report.grad_norms["image_projection"] = frobenius(grads.image_projection.data());
  if (p.mode == FusionMode::FeatureFusion)
    report.grad_norms["fusion_projection"] = frobenius(grads.fusion_projection.data());
  return report;
}

GradientCheckResult gradient_check(const ModelParams& params, const Batch& batch, double epsilon,
                                   std::size_t projection_samples, std::uint64_t sample_seed) {
  ParamGradients grads;
  batch_loss_and_gradients(params, batch, grads);

  struct Probe {
    std::string name;
    double* (*locate)(ModelParams&, std::size_t);
    std::size_t index;
    double analytic;
  };
  std::vector<Probe> probes;
  if (params.mode == FusionMode::ScoreFusion) {
    static constexpr const char* names[4] = {"w1", "w2", "w3", "w4"};
    for (std::size_t k = 0; k < 4; ++k)
      probes.push_back({names[k],
                        [](ModelParams& p, std::size_t i) -> double* {
                          double* ws[4] = {&p.weights.w1, &p.weights.w2, &p.weights.w3, &p.weights.w4};
                          return ws[i];
                        },
                        k, grads.w[k]});
  }
  probes.push_back({"log_inv_temperature", [](ModelParams& p, std::size_t) { return &p.log_inv_temperature; }, 0,
                    grads.log_inv_temperature});

  struct Group {
    const char* name;
    double* (*locate)(ModelParams&, std::size_t);
    const Matrix* grad;
  };
  std::vector<Group> groups = {
      {"text_projection", [](ModelParams& p, std::size_t i) { return &p.text.projection.data()[i]; },
       &grads.text_projection},
      {"image_projection", [](ModelParams& p, std::size_t i) { return &p.image.projection.data()[i]; },
       &grads.image_projection}};
  if (params.mode == FusionMode::FeatureFusion)
    groups.push_back({"fusion_projection", [](ModelParams& p, std::size_t i) { return &p.fusion_projection.data()[i]; },
                      &grads.fusion_projection});

  std::mt19937_64 rng(sample_seed);
  const std::size_t samples = std::max<std::size_t>(projection_samples, 64);
  for (std::size_t s = 0; s < samples; ++s) {
    const Group& grp = groups[s % groups.size()];
    const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, grp.grad->size() - 1)(rng);
    probes.push_back({std::string(grp.name) + "[" + std::to_string(idx) + "]", grp.locate, idx,
                      grp.grad->data()[idx]});
  }

  GradientCheckResult result;
  ModelParams work = params;
  for (const auto& pr : probes) {
    double* x = pr.locate(work, pr.index);
    const double orig = *x;
    *x = orig + epsilon;
    const double up = batch_loss(work, batch);
    *x = orig - epsilon;
    const double down = batch_loss(work, batch);
    *x = orig;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double denom = std::max({std::abs(pr.analytic), std::abs(numeric), 1e-6});
    const double rel = std::abs(pr.analytic - numeric) / denom;
    ++result.checked;
    if (rel >= result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_parameter = pr.name;
    }
  }
  return result;
}

ItemInput query_input(const QueryInstance& q, const Instruction* instruction, const EmbeddingStore& features,
                      std::size_t dim) {
  ItemInput in;
  if (auto text = query_text_input(q, instruction)) in.text_features = hash_features(*text, dim);
  if (q.image_ref) {
    auto row = features.row_of(*q.image_ref);
    if (!row) throw Error(ErrorCode::MissingFeature, "no raw feature for image '" + *q.image_ref + "'");
    auto r = features.fused_row(*row);
    in.image_raw = std::vector<float>(r.begin(), r.end());
  }
  return in;
}

ItemInput candidate_input(const Candidate& c, const EmbeddingStore& features, std::size_t dim) {
  ItemInput in;
  if (c.text) in.text_features = hash_features(*c.text, dim);
  if (c.image_ref) {
    auto row = features.row_of(*c.image_ref);
    if (!row) throw Error(ErrorCode::MissingFeature, "no raw feature for image '" + *c.image_ref + "'");
    auto r = features.fused_row(*row);
    in.image_raw = std::vector<float>(r.begin(), r.end());
  }
  return in;
}

namespace {

class Adam {
 public:
  Adam(double lr, std::size_t size) : lr_(lr), m_(size, 0.0), v_(size, 0.0) {}

  void step(std::span<double> params, std::span<const double> grads, std::size_t t) {
    const double b1t = 1.0 - std::pow(kBeta1, static_cast<double>(t));
    const double b2t = 1.0 - std::pow(kBeta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grads[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grads[i] * grads[i];
      params[i] -= lr_ * (m_[i] / b1t) / (std::sqrt(v_[i] / b2t) + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_;
  std::vector<double> m_, v_;
};

class Optimizer {
 public:
  Optimizer(const ModelParams& p, const TrainConfig& c)
      : freeze_weights_(c.freeze_weights || p.mode == FusionMode::FeatureFusion),
        weights_(c.learning_rate, 4),
        temperature_(c.learning_rate, 1),
        text_(c.learning_rate, p.text.projection.size()),
        image_(c.learning_rate, p.image.projection.size()),
        fusion_(c.learning_rate, p.fusion_projection.size()) {}

  void step(ModelParams& p, const ParamGradients& g) {
    ++t_;
    if (!freeze_weights_) {
      double w[4] = {p.weights.w1, p.weights.w2, p.weights.w3, p.weights.w4};
      weights_.step(w, g.w, t_);
      p.weights = {w[0], w[1], w[2], w[3]};
    }
    temperature_.step(std::span<double>(&p.log_inv_temperature, 1),
                      std::span<const double>(&g.log_inv_temperature, 1), t_);
    text_.step(p.text.projection.data(), g.text_projection.data(), t_);
    image_.step(p.image.projection.data(), g.image_projection.data(), t_);
    if (p.mode == FusionMode::FeatureFusion) fusion_.step(p.fusion_projection.data(), g.fusion_projection.data(), t_);
  }

 private:
  bool freeze_weights_;
  Adam weights_, temperature_, text_, image_, fusion_;
  std::size_t t_ = 0;
};

BatchLossReport mean_report(const std::vector<BatchLossReport>& reports) {
  BatchLossReport mean;
  if (reports.empty()) return mean;
  for (const auto& r : reports) {
    mean.loss += r.loss;
    mean.accuracy_in_batch += r.accuracy_in_batch;
    for (const auto& [k, v] : r.grad_norms) mean.grad_norms[k] += v;
  }
  const double n = static_cast<double>(reports.size());
  mean.loss /= n;
  mean.accuracy_in_batch /= n;
  for (auto& [k, v] : mean.grad_norms) v /= n;
  return mean;
}

}  // namespace

TrainResult train_on_batch(const Batch& batch, ModelParams params, const TrainConfig& config, std::size_t steps) {
  if (batch.queries.size() < 2) throw Error(ErrorCode::BatchTooSmall, "a batch needs at least two queries");
  TrainResult result;
  Optimizer opt(params, config);
  ParamGradients grads;
  for (std::size_t s = 0; s < steps; ++s) {
    const auto report = batch_loss_and_gradients(params, batch, grads);
    result.loss_curve.push_back(report.loss);
    opt.step(params, grads);
  }
  result.params = std::move(params);
  return result;
}

TrainResult train(const Corpus& corpus, const EmbeddingStore& features, const TrainConfig& config,
                  std::optional<ModelParams> initial) {
  if (config.batch_size < 2) throw Error(ErrorCode::BatchTooSmall, "batch_size must be at least 2");
  if (!(config.temperature_init > 0.0))
    throw Error(ErrorCode::NonPositiveTemperature, "initial temperature must be positive");

  std::vector<const QueryInstance*> queries;
  for (const auto& q : corpus.queries)
    if (config.datasets.empty() ||
        std::find(config.datasets.begin(), config.datasets.end(), q.dataset) != config.datasets.end())
      queries.push_back(&q);
  if (queries.empty()) throw Error(ErrorCode::EmptyCorpus, "no training queries");
  if (queries.size() < 2) throw Error(ErrorCode::BatchTooSmall, "need at least two training queries");

  const std::size_t dim = features.dim();
  TrainResult result;
  if (initial) {
    result.params = std::move(*initial);
    if (result.params.dim() != dim) throw Error(ErrorCode::DimMismatch, "initial parameters dim mismatch");
  } else {
    result.params = ModelParams::init(dim, config.mode, config.seed);
    result.params.log_inv_temperature = std::log(1.0 / config.temperature_init);
  }
  ModelParams& params = result.params;

  std::vector<std::optional<ItemInput>> cand_cache(corpus.pool.size());
  auto cand = [&](const std::string& did) -> const ItemInput& {
    const std::size_t idx = *corpus.pool.index_of(did);
    if (!cand_cache[idx]) cand_cache[idx] = candidate_input(corpus.pool.at(idx), features, dim);
    return *cand_cache[idx];
  };

  std::mt19937_64 rng(config.seed);
  Optimizer opt(params, config);
  ParamGradients grads;
  std::vector<std::size_t> order(queries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const std::uint64_t instruction_seed = mix64(config.seed ^ mix64(epoch + 1));
    std::vector<BatchLossReport> reports;
    for (std::size_t start = 0; start + 2 <= order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      Batch batch;
      std::vector<const ItemInput*> negatives;
      for (std::size_t b = start; b < end; ++b) {
        const QueryInstance& q = *queries[order[b]];
        const Instruction* inst = config.use_instructions ? &select_instruction(q, instruction_seed) : nullptr;
        batch.queries.push_back(query_input(q, inst, features, dim));
        const std::string& pos = q.positives[rng() % q.positives.size()];
        batch.candidates.push_back(cand(pos));
        if (config.use_hard_negatives)
          for (const auto& neg : q.negatives) negatives.push_back(&cand(neg));
      }
      for (const ItemInput* neg : negatives) batch.candidates.push_back(*neg);
      reports.push_back(batch_loss_and_gradients(params, batch, grads));
      result.loss_curve.push_back(reports.back().loss);
      opt.step(params, grads);
    }
    result.epoch_reports.push_back(mean_report(reports));
  }
  return result;
}

}  // namespace unir
