#include "framesel/diagnostics.hpp"

#include <random>

#include "framesel/sampler.hpp"

namespace framesel {
namespace {

Matrix normal_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

std::vector<std::string> scorer_names(const ParameterStore& store) {
  std::vector<std::string> out;
  for (const std::string& name : store.names()) {
    if (name.starts_with("scorer.")) out.push_back(name);
  }
  return out;
}

}  // namespace

VideoQAInstance random_instance(const GradientSuiteConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  Matrix frames = normal_matrix(rng, config.frames, config.dims.frame_dim);
  Vector question = normal_matrix(rng, config.dims.question_dim, 1);
  std::vector<Vector> options;
  for (std::size_t n = 0; n < config.options; ++n) {
    options.emplace_back(normal_matrix(rng, config.dims.question_dim, 1));
  }
  std::uniform_int_distribution<std::size_t> pick(0, config.options - 1);
  const std::size_t answer = pick(rng);
  return VideoQAInstance{FrameSet(std::move(frames), "gradcheck"),
                         QuestionEmbedding(std::move(question), "gradcheck"), std::move(options),
                         answer, std::nullopt};
}

std::vector<NamedReport> run_gradient_suite(const GradientSuiteConfig& config) {
  const Model model = Model::initialize(config.dims, config.seed);
  const VideoQAInstance inst = random_instance(config, config.seed + 1);
  const ModelDims dims = config.dims;

  std::vector<NamedReport> reports;

  GradCheckOptions qfs_opts = config.check;
  qfs_opts.parameters = {std::string(scorer_param::kFrameProjection),
                         std::string(scorer_param::kQuestionProjection)};
  reports.push_back({"qfs", grad_check(
                                [&](Graph& g, const ParameterStore& p) {
                                  const ScorerNodes s = bind_scorer(g, p, dims);
                                  return qfs_scores(inst.frames, inst.question, s, g).front();
                                },
                                model.params, qfs_opts)});

  GradCheckOptions qfm_opts = config.check;
  qfm_opts.parameters = {
      std::string(scorer_param::kFusionHiddenWeight), std::string(scorer_param::kFusionHiddenBias),
      std::string(scorer_param::kFusionOutputWeight), std::string(scorer_param::kFusionOutputBias)};
  reports.push_back({"qfm", grad_check(
                                [&](Graph& g, const ParameterStore& p) {
                                  const ScorerNodes s = bind_scorer(g, p, dims);
                                  const std::vector<NodeId> scores =
                                      qfm_scores(inst.frames, inst.question, s, g);
                                  return g.sum(g.concat(scores));
                                },
                                model.params, qfm_opts)});

  Rng noise_rng(config.seed + 2);
  const std::vector<double> noise = gumbel_noise(config.frames, noise_rng);
  SamplerConfig sampler;
  sampler.k = config.k;
  sampler.tau = config.tau;
  sampler.stochastic = true;
  GradCheckOptions pipe_opts = config.check;
  pipe_opts.parameters = scorer_names(model.params);
  reports.push_back({"pipeline", grad_check(
                                     [&](Graph& g, const ParameterStore& p) {
                                       const ScorerNodes s = bind_scorer(g, p, dims);
                                       const GeneratorNodes gen = bind_generator(g, p, dims);
                                       const ScoreNodes scores = score_frames(
                                           inst.frames, inst.question, s, Mechanisms{}, g);
                                       const SelectionResult sel =
                                           relaxed_topk(g, scores.aggregate, sampler, noise);
                                       const std::vector<NodeId> logits =
                                           answer_logits(inst, *sel.weights_node,
                                                         static_cast<double>(sampler.k), gen, g);
                                       return answer_loss(g, logits, inst.answer_index);
                                     },
                                     model.params, pipe_opts)});
  return reports;
}

}  // namespace framesel
