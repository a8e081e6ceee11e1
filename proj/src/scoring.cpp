#include "framesel/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <sstream>

#include "framesel/errors.hpp"

namespace framesel {
namespace {

constexpr double kMinRowNorm = 1e-9;

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
    os << "scorer parameter '" << name << "' is " << m.rows() << "x" << m.cols() << ", expected "
       << rows << "x" << cols;
    throw ShapeError(os.str());
  }
}

NodeId affine_tanh(Graph& graph, NodeId weight, NodeId bias, NodeId x) {
  return graph.tanh(graph.add(graph.matvec(weight, x), bias));
}

}  // namespace

FrameSet::FrameSet(Matrix embeddings, std::string video_id)
    : embeddings_(std::move(embeddings)), video_id_(std::move(video_id)) {
  if (embeddings_.rows() < 1 || embeddings_.cols() < 1) {
    throw ContractError("frame set '" + video_id_ + "' is empty");
  }
  for (Eigen::Index r = 0; r < embeddings_.rows(); ++r) {
    if (!embeddings_.row(r).allFinite()) {
      throw ContractError("frame set '" + video_id_ + "': non-finite value in row " +
                          std::to_string(r));
    }
    if (!(embeddings_.row(r).norm() > kMinRowNorm)) {
      throw ContractError("frame set '" + video_id_ + "': row " + std::to_string(r) +
                          " has (near-)zero norm");
    }
  }
}

Vector FrameSet::frame(std::size_t i) const {
  if (i >= frame_count()) throw ContractError("frame index out of range");
  return embeddings_.row(static_cast<Eigen::Index>(i)).transpose();
}

QuestionEmbedding::QuestionEmbedding(Vector embedding, std::string question_id)
    : embedding_(std::move(embedding)), question_id_(std::move(question_id)) {
  if (embedding_.size() < 1 || !embedding_.allFinite() || !(embedding_.norm() > kMinRowNorm)) {
    throw ContractError("question '" + question_id_ +
                        "' must be non-empty, finite and have norm > 1e-9");
  }
}

Mechanisms Mechanisms::without(std::string_view disabled) {
  Mechanisms m;
  std::size_t pos = 0;
  while (pos <= disabled.size()) {
    const std::size_t comma = std::min(disabled.find(',', pos), disabled.size());
    const std::string_view token = disabled.substr(pos, comma - pos);
    if (token == "qfs") {
      m.qfs = false;
    } else if (token == "qfm") {
      m.qfm = false;
    } else if (token == "ifd") {
      m.ifd = false;
    } else if (!token.empty()) {
      throw ContractError("unknown scoring mechanism '" + std::string(token) +
                          "' (expected qfs, qfm or ifd)");
    }
    pos = comma + 1;
  }
  return m;
}

std::string Mechanisms::disabled_list() const {
  std::string out;
  auto append = [&out](bool enabled, const char* name) {
    if (enabled) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  append(qfs, "qfs");
  append(qfm, "qfm");
  append(ifd, "ifd");
  return out;
}

void init_scorer_params(ParameterStore& store, const ModelDims& dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto dv = dims.frame_dim;
  const auto dt = dims.question_dim;
  const auto dh = dims.hidden_dim;
  const auto dp = dims.projection_dim;
  auto inv_sqrt = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };

  using namespace scorer_param;
  store.add(std::string(kExtractorWeight), gaussian(rng, dh, dv, inv_sqrt(dv)));
  store.add(std::string(kExtractorBias), Matrix::Zero(dh, 1));
  store.add(std::string(kTextWeight), gaussian(rng, dh, dt, inv_sqrt(dt)));
  store.add(std::string(kTextBias), Matrix::Zero(dh, 1));
  store.add(std::string(kFrameProjection), gaussian(rng, dp, dh, inv_sqrt(dh)));
  store.add(std::string(kQuestionProjection), gaussian(rng, dp, dh, inv_sqrt(dh)));
  store.add(std::string(kFusionHiddenWeight), gaussian(rng, dh, 3 * dh, inv_sqrt(3 * dh)));
  store.add(std::string(kFusionHiddenBias), Matrix::Zero(dh, 1));
  store.add(std::string(kFusionOutputWeight), gaussian(rng, 1, dh, inv_sqrt(dh)));
  store.add(std::string(kFusionOutputBias), Matrix::Zero(1, 1));
}

ScorerNodes bind_scorer(Graph& graph, const ParameterStore& store, const ModelDims& dims) {
  using namespace scorer_param;
  const auto dv = dims.frame_dim;
  const auto dt = dims.question_dim;
  const auto dh = dims.hidden_dim;
  const auto dp = dims.projection_dim;
  expect_shape(store, kExtractorWeight, dh, dv);
  expect_shape(store, kExtractorBias, dh, 1);
  expect_shape(store, kTextWeight, dh, dt);
  expect_shape(store, kTextBias, dh, 1);
  expect_shape(store, kFrameProjection, dp, dh);
  expect_shape(store, kQuestionProjection, dp, dh);
  expect_shape(store, kFusionHiddenWeight, dh, 3 * dh);
  expect_shape(store, kFusionHiddenBias, dh, 1);
  expect_shape(store, kFusionOutputWeight, 1, dh);
  expect_shape(store, kFusionOutputBias, 1, 1);

  ScorerNodes n;
  n.dims = dims;
  n.extractor_weight = graph.parameter(store, kExtractorWeight);
  n.extractor_bias = graph.parameter(store, kExtractorBias);
  n.text_weight = graph.parameter(store, kTextWeight);
  n.text_bias = graph.parameter(store, kTextBias);
  n.frame_projection = graph.parameter(store, kFrameProjection);
  n.question_projection = graph.parameter(store, kQuestionProjection);
  n.fusion_hidden_weight = graph.parameter(store, kFusionHiddenWeight);
  n.fusion_hidden_bias = graph.parameter(store, kFusionHiddenBias);
  n.fusion_output_weight = graph.parameter(store, kFusionOutputWeight);
  n.fusion_output_bias = graph.parameter(store, kFusionOutputBias);
  return n;
}

Encoding encode(const FrameSet& frames, const QuestionEmbedding& question,
                const ScorerNodes& scorer, Graph& graph) {
  if (frames.dim() != scorer.dims.frame_dim) {
    throw ShapeError("frame embeddings have dimension " + std::to_string(frames.dim()) +
                     ", scorer expects " + std::to_string(scorer.dims.frame_dim));
  }
  if (question.dim() != scorer.dims.question_dim) {
    throw ShapeError("question embedding has dimension " + std::to_string(question.dim()) +
                     ", scorer expects " + std::to_string(scorer.dims.question_dim));
  }
  Encoding enc;
  enc.frames.reserve(frames.frame_count());
  for (std::size_t i = 0; i < frames.frame_count(); ++i) {
    const NodeId h = graph.constant(frames.frame(i));
    enc.frames.push_back(affine_tanh(graph, scorer.extractor_weight, scorer.extractor_bias, h));
  }
  const NodeId q = graph.constant(question.embedding());
  enc.question = affine_tanh(graph, scorer.text_weight, scorer.text_bias, q);
  return enc;
}

std::vector<NodeId> qfs_scores(const Encoding& encoding, const ScorerNodes& scorer, Graph& graph) {
  const NodeId projected_question = graph.matvec(scorer.question_projection, encoding.question);
  std::vector<NodeId> out;
  out.reserve(encoding.frames.size());
  for (NodeId u : encoding.frames) {
    out.push_back(graph.cosine(graph.matvec(scorer.frame_projection, u), projected_question));
  }
  return out;
}

std::vector<NodeId> qfs_scores(const FrameSet& frames, const QuestionEmbedding& question,
                               const ScorerNodes& scorer, Graph& graph) {
  return qfs_scores(encode(frames, question, scorer, graph), scorer, graph);
}

std::vector<NodeId> qfm_scores(const Encoding& encoding, const ScorerNodes& scorer, Graph& graph) {
  std::vector<NodeId> out;
  out.reserve(encoding.frames.size());
  for (NodeId u : encoding.frames) {
    const NodeId fused_in[] = {u, encoding.question, graph.multiply(u, encoding.question)};
    const NodeId hidden = affine_tanh(graph, scorer.fusion_hidden_weight, scorer.fusion_hidden_bias,
                                      graph.concat(fused_in));
    const NodeId logit =
        graph.add(graph.matvec(scorer.fusion_output_weight, hidden), scorer.fusion_output_bias);
    out.push_back(graph.sigmoid(logit));
  }
  return out;
}

std::vector<NodeId> qfm_scores(const FrameSet& frames, const QuestionEmbedding& question,
                               const ScorerNodes& scorer, Graph& graph) {
  return qfm_scores(encode(frames, question, scorer, graph), scorer, graph);
}

Matrix pairwise_similarity(const FrameSet& frames) {
  const Matrix& h = frames.embeddings();
  Matrix unit(h.rows(), h.cols());
  for (Eigen::Index r = 0; r < h.rows(); ++r) {
    unit.row(r) = h.row(r) / std::max(h.row(r).norm(), kNormalizeEpsilon);
  }
  Matrix sim = unit * unit.transpose();
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    sim(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < sim.cols(); ++j) {
      const double s = std::clamp(sim(i, j), -1.0, 1.0);
      sim(i, j) = s;
      sim(j, i) = s;
    }
  }
  return sim;
}

std::vector<NodeId> ifd_scores(const FrameSet& frames, Graph& graph) {
  const std::size_t m = frames.frame_count();
  std::vector<NodeId> out;
  out.reserve(m);
  if (m == 1) {
    out.push_back(graph.scalar(0.0));
    return out;
  }
  const Matrix sim = pairwise_similarity(frames);
  for (std::size_t i = 0; i < m; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i) total += 1.0 - sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    out.push_back(graph.scalar(total / static_cast<double>(m - 1)));
  }
  return out;
}

ScoreNodes aggregate_scores(Graph& graph, std::span<const NodeId> qfs, std::span<const NodeId> qfm,
                            std::span<const NodeId> ifd) {
  const std::span<const NodeId> parts[] = {qfs, qfm, ifd};
  std::size_t m = 0;
  for (const auto& part : parts) {
    if (part.empty()) continue;
    if (m != 0 && part.size() != m) {
      throw ShapeError("aggregate_scores: score vectors have different lengths (" +
                       std::to_string(m) + " vs " + std::to_string(part.size()) + ")");
    }
    m = part.size();
  }
  if (m == 0) throw ContractError("empty scorer");

  ScoreNodes out;
  out.qfs.assign(qfs.begin(), qfs.end());
  out.qfm.assign(qfm.begin(), qfm.end());
  out.ifd.assign(ifd.begin(), ifd.end());
  out.aggregate.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::optional<NodeId> acc;
    for (const auto& part : parts) {
      if (part.empty()) continue;
      acc = acc ? graph.add(*acc, part[i]) : part[i];
    }
    out.aggregate.push_back(*acc);
  }
  return out;
}

ScoreNodes score_frames(const FrameSet& frames, const QuestionEmbedding& question,
                        const ScorerNodes& scorer, const Mechanisms& mechanisms, Graph& graph) {
  if (!mechanisms.any()) throw ContractError("empty scorer");
  std::vector<NodeId> qfs;
  std::vector<NodeId> qfm;
  std::vector<NodeId> ifd;
  if (mechanisms.qfs || mechanisms.qfm) {
    const Encoding enc = encode(frames, question, scorer, graph);
    if (mechanisms.qfs) qfs = qfs_scores(enc, scorer, graph);
    if (mechanisms.qfm) qfm = qfm_scores(enc, scorer, graph);
  }
  if (mechanisms.ifd) ifd = ifd_scores(frames, graph);
  return aggregate_scores(graph, qfs, qfm, ifd);
}

ScoreBreakdown read_breakdown(const Graph& graph, const ScoreNodes& nodes) {
  auto values = [&graph](const std::vector<NodeId>& ids) {
    std::vector<double> v;
    v.reserve(ids.size());
    for (NodeId id : ids) v.push_back(graph.scalar_value(id));
    return v;
  };
  return ScoreBreakdown{values(nodes.qfs), values(nodes.qfm), values(nodes.ifd),
                        values(nodes.aggregate)};
}

}  // namespace framesel
