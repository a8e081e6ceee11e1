#include "framesel/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "framesel/errors.hpp"

namespace framesel {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ (b + 0x632BE59BD9B4E019ULL));
}

Matrix gaussian(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

void expect_shape(const ParameterStore& store, std::string_view name, std::size_t rows,
                  std::size_t cols) {
  const Matrix& m = store.value(name);
  if (static_cast<std::size_t>(m.rows()) != rows || static_cast<std::size_t>(m.cols()) != cols) {
    std::ostringstream os;
    os << "generator parameter '" << name << "' is " << m.rows() << "x" << m.cols() << ", expected "
       << rows << "x" << cols;
    throw ShapeError(os.str());
  }
}

Matrix k_hot(std::size_t m, std::span<const std::size_t> indices) {
  Matrix w = Matrix::Zero(static_cast<Eigen::Index>(m), 1);
  for (std::size_t i : indices) w(static_cast<Eigen::Index>(i), 0) = 1.0;
  return w;
}

void check_indices(std::span<const std::size_t> indices, std::size_t m) {
  if (indices.empty()) throw ContractError("selection must contain at least one frame");
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] >= m) throw ContractError("selected frame index out of range");
    if (j > 0 && indices[j] <= indices[j - 1]) {
      throw ContractError("selected frame indices must be strictly ascending");
    }
  }
}

std::size_t argmax_lowest(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

double norm_of(const Matrix& m) { return m.norm(); }

Inference answer_with_gate(const VideoQAInstance& instance, const Model& model, Graph& graph,
                           std::span<const std::size_t> indices) {
  const GeneratorNodes gen = bind_generator(graph, model.params, model.dims);
  const NodeId gate = graph.constant(k_hot(instance.frames.frame_count(), indices));
  const std::vector<NodeId> logit_nodes =
      answer_logits(instance, gate, static_cast<double>(indices.size()), gen, graph);

  Inference out;
  out.logits.reserve(logit_nodes.size());
  for (NodeId id : logit_nodes) out.logits.push_back(graph.scalar_value(id));
  out.predicted_answer = argmax_lowest(out.logits);
  return out;
}

}  // namespace

void VideoQAInstance::validate() const {
  if (options.size() < 2) throw ContractError("an instance needs at least two answer options");
  if (answer_index >= options.size()) {
    throw ContractError("answer index " + std::to_string(answer_index) + " out of range for " +
                        std::to_string(options.size()) + " options");
  }
  for (const Vector& o : options) {
    if (static_cast<std::size_t>(o.size()) != question.dim()) {
      throw ShapeError("option dimension " + std::to_string(o.size()) +
                       " does not match question dimension " + std::to_string(question.dim()));
    }
    if (!o.allFinite()) throw ContractError("option embedding contains non-finite values");
  }
  if (planted_keyframes) {
    for (std::size_t i : *planted_keyframes) {
      if (i >= frames.frame_count()) throw ContractError("planted keyframe index out of range");
    }
  }
}

void init_generator_params(ParameterStore& store, const ModelDims& dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto dv = dims.frame_dim;
  const auto dt = dims.question_dim;
  const auto dh = dims.hidden_dim;
  auto inv_sqrt = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };

  using namespace generator_param;
  store.add(std::string(kPoolWeight), gaussian(rng, dh, dv, inv_sqrt(dv)));
  store.add(std::string(kPoolBias), Matrix::Zero(dh, 1));
  store.add(std::string(kQuestionWeight), gaussian(rng, dh, dt, inv_sqrt(dt)));
  store.add(std::string(kQuestionBias), Matrix::Zero(dh, 1));
  store.add(std::string(kJointWeight), gaussian(rng, dh, 2 * dh, inv_sqrt(2 * dh)));
  store.add(std::string(kJointBias), Matrix::Zero(dh, 1));
  store.add(std::string(kOptionWeight), gaussian(rng, dh, dt, inv_sqrt(dt)));
  store.add(std::string(kOptionBias), Matrix::Zero(dh, 1));
}

GeneratorNodes bind_generator(Graph& graph, const ParameterStore& store, const ModelDims& dims) {
  using namespace generator_param;
  const auto dv = dims.frame_dim;
  const auto dt = dims.question_dim;
  const auto dh = dims.hidden_dim;
  expect_shape(store, kPoolWeight, dh, dv);
  expect_shape(store, kPoolBias, dh, 1);
  expect_shape(store, kQuestionWeight, dh, dt);
  expect_shape(store, kQuestionBias, dh, 1);
  expect_shape(store, kJointWeight, dh, 2 * dh);
  expect_shape(store, kJointBias, dh, 1);
  expect_shape(store, kOptionWeight, dh, dt);
  expect_shape(store, kOptionBias, dh, 1);

  GeneratorNodes n;
  n.dims = dims;
  n.pool_weight = graph.parameter(store, kPoolWeight);
  n.pool_bias = graph.parameter(store, kPoolBias);
  n.question_weight = graph.parameter(store, kQuestionWeight);
  n.question_bias = graph.parameter(store, kQuestionBias);
  n.joint_weight = graph.parameter(store, kJointWeight);
  n.joint_bias = graph.parameter(store, kJointBias);
  n.option_weight = graph.parameter(store, kOptionWeight);
  n.option_bias = graph.parameter(store, kOptionBias);
  return n;
}

Model Model::initialize(const ModelDims& dims, std::uint64_t seed, Mechanisms mechanisms) {
  Model model;
  model.dims = dims;
  model.mechanisms = mechanisms;
  init_scorer_params(model.params, dims, mix_seed(seed, 1));
  init_generator_params(model.params, dims, mix_seed(seed, 2));
  return model;
}

std::vector<NodeId> answer_logits(const VideoQAInstance& instance, NodeId relaxed_weights,
                                  double normalizer, const GeneratorNodes& gen, Graph& graph) {
  const std::size_t m = instance.frames.frame_count();
  const Matrix& w = graph.value(relaxed_weights);
  if (static_cast<std::size_t>(w.rows()) != m || w.cols() != 1) {
    throw ShapeError("answer_logits: weight vector is " + std::to_string(w.rows()) + "x" +
                     std::to_string(w.cols()) + ", expected " + std::to_string(m) + "x1");
  }
  if (instance.frames.dim() != gen.dims.frame_dim) {
    throw ShapeError("answer_logits: frame dimension " + std::to_string(instance.frames.dim()) +
                     " does not match generator " + std::to_string(gen.dims.frame_dim));
  }
  if (instance.question.dim() != gen.dims.question_dim) {
    throw ShapeError("answer_logits: question dimension mismatch");
  }
  if (!(normalizer > 0.0)) throw DomainError("answer_logits: normalizer must be > 0");

  // Column i of `pooled_frames` is tanh(P h_i + b); the bias is broadcast by
  // an outer product with a row of ones.
  const auto cols = static_cast<Eigen::Index>(m);
  const NodeId frames_t = graph.constant(Matrix(instance.frames.embeddings().transpose()));
  const NodeId bias_rows = graph.matmul(gen.pool_bias, graph.constant(Matrix::Ones(1, cols)));
  const NodeId pooled_frames =
      graph.tanh(graph.add(graph.matmul(gen.pool_weight, frames_t), bias_rows));
  const NodeId pooled = graph.scale(graph.matvec(pooled_frames, relaxed_weights), 1.0 / normalizer);

  const NodeId q = graph.constant(instance.question.embedding());
  const NodeId projected_question =
      graph.tanh(graph.add(graph.matvec(gen.question_weight, q), gen.question_bias));
  const NodeId joint_in[] = {pooled, projected_question};
  const NodeId joint =
      graph.tanh(graph.add(graph.matvec(gen.joint_weight, graph.concat(joint_in)), gen.joint_bias));

  std::vector<NodeId> logits;
  logits.reserve(instance.options.size());
  for (const Vector& option : instance.options) {
    if (static_cast<std::size_t>(option.size()) != gen.dims.question_dim) {
      throw ShapeError("answer_logits: option dimension mismatch");
    }
    const NodeId a = graph.constant(option);
    const NodeId projected = graph.add(graph.matvec(gen.option_weight, a), gen.option_bias);
    logits.push_back(graph.dot(joint, projected));
  }
  return logits;
}

NodeId answer_loss(Graph& graph, std::span<const NodeId> logits, std::size_t answer_index) {
  if (answer_index >= logits.size()) {
    throw ContractError("answer index " + std::to_string(answer_index) + " out of range for " +
                        std::to_string(logits.size()) + " logits");
  }
  return graph.cross_entropy(graph.concat(logits), answer_index);
}

const char* strategy_name(SelectionStrategy strategy) {
  switch (strategy) {
    case SelectionStrategy::kLearned: return "learned";
    case SelectionStrategy::kUniform: return "uniform";
    case SelectionStrategy::kRandom: return "random";
  }
  return "unknown";
}

std::vector<std::size_t> uniform_indices(std::size_t frame_count, std::size_t k) {
  if (k < 1 || k > frame_count) {
    throw ContractError("requested k exceeds frame count M (k=" + std::to_string(k) +
                        ", M=" + std::to_string(frame_count) + ")");
  }
  std::vector<std::size_t> out(k);
  for (std::size_t j = 0; j < k; ++j) out[j] = j * frame_count / k;
  return out;
}

std::vector<std::size_t> random_indices(std::size_t frame_count, std::size_t k,
                                        std::uint64_t seed) {
  if (k < 1 || k > frame_count) {
    throw ContractError("requested k exceeds frame count M (k=" + std::to_string(k) +
                        ", M=" + std::to_string(frame_count) + ")");
  }
  std::vector<std::size_t> all(frame_count);
  std::iota(all.begin(), all.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates with an explicit bounded draw keeps the sequence
  // independent of the standard library's shuffle implementation.
  for (std::size_t j = 0; j < k; ++j) {
    std::uniform_int_distribution<std::size_t> pick(j, frame_count - 1);
    std::swap(all[j], all[pick(rng)]);
  }
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ContractError("learning rate must be finite and non-negative");
  }
  if (epochs < 1) throw ContractError("epochs must be at least 1");
  if (batch_size < 1) throw ContractError("batch size must be at least 1");
  if (!(sampler.tau > 0.0)) throw DomainError("tau must be > 0");
  if (sampler.k < 1) throw ContractError("k must be at least 1");
  if (strategy == SelectionStrategy::kLearned && !mechanisms.any()) {
    throw ContractError("empty scorer");
  }
}

StepReport training_step(std::span<const VideoQAInstance> batch, Model& model,
                         const TrainConfig& config, std::uint64_t step_seed) {
  config.validate();
  if (batch.empty()) throw ContractError("training batch is empty");
  for (const VideoQAInstance& inst : batch) {
    inst.validate();
    if (config.sampler.k > inst.frames.frame_count()) {
      throw ContractError(
          "requested k exceeds frame count M (k=" + std::to_string(config.sampler.k) +
          ", M=" + std::to_string(inst.frames.frame_count()) + ")");
    }
  }

  Graph graph;
  const GeneratorNodes gen = bind_generator(graph, model.params, model.dims);
  std::optional<ScorerNodes> scorer;
  if (config.strategy == SelectionStrategy::kLearned) {
    scorer = bind_scorer(graph, model.params, model.dims);
  }

  std::vector<NodeId> losses;
  losses.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const VideoQAInstance& inst = batch[i];
    const std::uint64_t instance_seed = mix_seed(step_seed, i);
    NodeId gate;
    switch (config.strategy) {
      case SelectionStrategy::kLearned: {
        const ScoreNodes scores =
            score_frames(inst.frames, inst.question, *scorer, config.mechanisms, graph);
        gate = *relaxed_topk(graph, scores.aggregate, config.sampler, instance_seed).weights_node;
        break;
      }
      case SelectionStrategy::kUniform:
        gate = graph.constant(k_hot(inst.frames.frame_count(),
                                    uniform_indices(inst.frames.frame_count(), config.sampler.k)));
        break;
      case SelectionStrategy::kRandom:
        gate = graph.constant(
            k_hot(inst.frames.frame_count(),
                  random_indices(inst.frames.frame_count(), config.sampler.k, instance_seed)));
        break;
    }
    const std::vector<NodeId> logits =
        answer_logits(inst, gate, static_cast<double>(config.sampler.k), gen, graph);
    losses.push_back(answer_loss(graph, logits, inst.answer_index));
  }
  const NodeId objective = graph.mean(graph.concat(losses));

  model.params.zero_gradients();
  graph.backward(objective, model.params);

  StepReport report;
  report.mean_loss = graph.scalar_value(objective);
  report.loss_nodes = graph.count(Op::kCrossEntropy);
  double scorer_sq = 0.0;
  double generator_sq = 0.0;
  for (const std::string& name : model.params.names()) {
    const double n = norm_of(model.params.gradient(name));
    report.gradient_norms[name] = n;
    (name.starts_with("scorer.") ? scorer_sq : generator_sq) += n * n;
  }
  report.scorer_gradient_norm = std::sqrt(scorer_sq);
  report.generator_gradient_norm = std::sqrt(generator_sq);

  model.params.apply_gradient_descent(config.learning_rate);
  return report;
}

std::vector<StepReport> train(std::span<const VideoQAInstance> data, Model& model,
                              const TrainConfig& config,
                              const std::function<void(const StepReport&)>& on_step) {
  config.validate();
  if (data.empty()) throw ContractError("training set is empty");
  for (const VideoQAInstance& inst : data) {
    if (config.sampler.k > inst.frames.frame_count()) {
      throw ContractError(
          "requested k exceeds frame count M (k=" + std::to_string(config.sampler.k) +
          ", M=" + std::to_string(inst.frames.frame_count()) + ")");
    }
  }
  model.mechanisms = config.mechanisms;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<StepReport> reports;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(config.seed, 0x5348554646ULL + epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(shuffle_rng)]);
    }
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<VideoQAInstance> batch;
      batch.reserve(end - start);
      for (std::size_t j = start; j < end; ++j) batch.push_back(data[order[j]]);
      StepReport report = training_step(batch, model, config, mix_seed(config.seed, step));
      report.step = step++;
      if (on_step) on_step(report);
      reports.push_back(std::move(report));
    }
  }
  return reports;
}

Inference infer(const VideoQAInstance& instance, const Model& model, std::size_t k_prime) {
  instance.validate();
  Graph graph;
  const ScorerNodes scorer = bind_scorer(graph, model.params, model.dims);
  const ScoreNodes nodes =
      score_frames(instance.frames, instance.question, scorer, model.mechanisms, graph);
  ScoreBreakdown breakdown = read_breakdown(graph, nodes);
  SelectionResult selection = hard_topk(breakdown.aggregate, k_prime);

  Inference out = answer_with_gate(instance, model, graph, selection.indices);
  out.selection = std::move(selection);
  out.scores = std::move(breakdown);
  return out;
}

Inference infer_with_indices(const VideoQAInstance& instance, const Model& model,
                             std::span<const std::size_t> indices) {
  instance.validate();
  const std::size_t m = instance.frames.frame_count();
  check_indices(indices, m);
  Graph graph;
  Inference out = answer_with_gate(instance, model, graph, indices);
  out.selection.indices.assign(indices.begin(), indices.end());
  out.selection.relaxed_weights.assign(m, 0.0);
  for (std::size_t i : indices) out.selection.relaxed_weights[i] = 1.0;
  out.selection.mode = SelectionMode::kInference;
  return out;
}

}  // namespace framesel
