#pragma once

// End-to-end toy VideoQA: scorer -> relaxed top-k -> answer generator -> loss.
//
// The generator pools frames through soft gates (the relaxed k-hot vector),
// so the only training signal, softmax cross-entropy over the answer options,
// reaches the scorer through the selection weights.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "framesel/autodiff.hpp"
#include "framesel/sampler.hpp"
#include "framesel/scoring.hpp"

namespace framesel {

struct VideoQAInstance {
  FrameSet frames;
  QuestionEmbedding question;
  std::vector<Vector> options;  // candidate answers, each of question dimension
  std::size_t answer_index = 0;
  std::optional<std::vector<std::size_t>> planted_keyframes;

  // Throws ContractError on N < 2, a bad answer index, non-finite options,
  // or out-of-range planted indices.
  void validate() const;
};

namespace generator_param {
inline constexpr std::string_view kPoolWeight = "generator.pool.weight";
inline constexpr std::string_view kPoolBias = "generator.pool.bias";
inline constexpr std::string_view kQuestionWeight = "generator.question.weight";
inline constexpr std::string_view kQuestionBias = "generator.question.bias";
inline constexpr std::string_view kJointWeight = "generator.joint.weight";
inline constexpr std::string_view kJointBias = "generator.joint.bias";
inline constexpr std::string_view kOptionWeight = "generator.option.weight";
inline constexpr std::string_view kOptionBias = "generator.option.bias";
}  // namespace generator_param

void init_generator_params(ParameterStore& store, const ModelDims& dims, std::uint64_t seed);

struct GeneratorNodes {
  ModelDims dims;
  NodeId pool_weight, pool_bias;
  NodeId question_weight, question_bias;
  NodeId joint_weight, joint_bias;
  NodeId option_weight, option_bias;
};

GeneratorNodes bind_generator(Graph& graph, const ParameterStore& store, const ModelDims& dims);

// Scorer and generator parameters in one store, plus the scoring mechanisms
// the scorer was trained with.
struct Model {
  ModelDims dims;
  Mechanisms mechanisms;
  ParameterStore params;

  static Model initialize(const ModelDims& dims, std::uint64_t seed, Mechanisms mechanisms = {});
};

// pooled = sum_i w_i * tanh(P h_i + b) / normalizer
// joint  = tanh(J [pooled; tanh(Q q + c)] + d)
// logit_n = joint . (O a_n + e)
std::vector<NodeId> answer_logits(const VideoQAInstance& instance, NodeId relaxed_weights,
                                  double normalizer, const GeneratorNodes& generator, Graph& graph);

NodeId answer_loss(Graph& graph, std::span<const NodeId> logits, std::size_t answer_index);

// How training and inference pick frames. kLearned uses the scorer; the other
// two are fixed baselines that bypass it.
enum class SelectionStrategy { kLearned, kUniform, kRandom };

const char* strategy_name(SelectionStrategy strategy);

// Evenly spaced indices floor(j * M / k), j = 0..k-1.
std::vector<std::size_t> uniform_indices(std::size_t frame_count, std::size_t k);
// Seeded draw of k distinct indices, returned ascending.
std::vector<std::size_t> random_indices(std::size_t frame_count, std::size_t k, std::uint64_t seed);

struct TrainConfig {
  SamplerConfig sampler;
  double learning_rate = 0.1;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  Mechanisms mechanisms;
  SelectionStrategy strategy = SelectionStrategy::kLearned;

  void validate() const;
};

struct StepReport {
  std::size_t step = 0;
  double mean_loss = 0.0;
  std::size_t loss_nodes = 0;
  double scorer_gradient_norm = 0.0;
  double generator_gradient_norm = 0.0;
  std::map<std::string, double> gradient_norms;  // per tensor
};

// Scores, samples and answers every instance on one graph, backpropagates the
// mean loss and applies one gradient-descent update. All preconditions are
// checked before any parameter is touched.
StepReport training_step(std::span<const VideoQAInstance> batch, Model& model,
                         const TrainConfig& config, std::uint64_t step_seed);

// Runs config.epochs passes in a seeded shuffled order. The callback, if set,
// sees every step report.
std::vector<StepReport> train(std::span<const VideoQAInstance> data, Model& model,
                              const TrainConfig& config,
                              const std::function<void(const StepReport&)>& on_step = {});

struct Inference {
  std::size_t predicted_answer = 0;
  std::vector<double> logits;
  SelectionResult selection;
  ScoreBreakdown scores;
};

// Hard top-k' over the aggregate scores, logits over the k'-hot gate.
Inference infer(const VideoQAInstance& instance, const Model& model, std::size_t k_prime);

// Answers with an externally chosen frame subset (baselines, oracles).
Inference infer_with_indices(const VideoQAInstance& instance, const Model& model,
                             std::span<const std::size_t> indices);

}  // namespace framesel
