#pragma once

// Per-frame scoring for a (video, question) pair.
//
//   qfs_i = cos(W_e * E_e(h_i), W_q * E_t(q))              question-frame similarity
//   qfm_i = sigmoid(mlp([u_i, v, u_i * v]))                  question-frame matching
//   ifd_i = sum_{j != i} (1 - cos(h_i, h_j)) / (M - 1)       inter-frame distinctiveness
//   aggregate_i = qfs_i + qfm_i + ifd_i
//
// where u_i = E_e(h_i) and v = E_t(q) are affine maps followed by tanh.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "framesel/autodiff.hpp"

namespace framesel {

struct ModelDims {
  std::size_t frame_dim = 64;       // d_v
  std::size_t question_dim = 32;    // d_t
  std::size_t hidden_dim = 64;      // d_h
  std::size_t projection_dim = 32;  // d_p
};

// Per-frame visual embeddings of one video, rows in temporal order.
class FrameSet {
 public:
  // Throws ContractError unless M >= 1, every entry is finite and every row
  // has norm > 1e-9.
  explicit FrameSet(Matrix embeddings, std::string video_id = {});

  [[nodiscard]] const Matrix& embeddings() const { return embeddings_; }
  [[nodiscard]] std::size_t frame_count() const {
    return static_cast<std::size_t>(embeddings_.rows());
  }
  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(embeddings_.cols()); }
  [[nodiscard]] Vector frame(std::size_t i) const;
  [[nodiscard]] const std::string& video_id() const { return video_id_; }

 private:
  Matrix embeddings_;
  std::string video_id_;
};

class QuestionEmbedding {
 public:
  explicit QuestionEmbedding(Vector embedding, std::string question_id = {});

  [[nodiscard]] const Vector& embedding() const { return embedding_; }
  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(embedding_.size()); }
  [[nodiscard]] const std::string& question_id() const { return question_id_; }

 private:
  Vector embedding_;
  std::string question_id_;
};

// Which scoring mechanisms contribute to the aggregate.
struct Mechanisms {
  bool qfs = true;
  bool qfm = true;
  bool ifd = true;

  [[nodiscard]] bool any() const { return qfs || qfm || ifd; }
  // Parses a comma list of mechanisms to switch off, e.g. "qfs,ifd".
  static Mechanisms without(std::string_view disabled);
  [[nodiscard]] std::string disabled_list() const;
  friend bool operator==(const Mechanisms&, const Mechanisms&) = default;
};

namespace scorer_param {
inline constexpr std::string_view kExtractorWeight = "scorer.extractor.weight";  // E_e
inline constexpr std::string_view kExtractorBias = "scorer.extractor.bias";
inline constexpr std::string_view kTextWeight = "scorer.text.weight";  // E_t
inline constexpr std::string_view kTextBias = "scorer.text.bias";
inline constexpr std::string_view kFrameProjection = "scorer.frame_projection";        // W_e
inline constexpr std::string_view kQuestionProjection = "scorer.question_projection";  // W_q
inline constexpr std::string_view kFusionHiddenWeight = "scorer.fusion.hidden.weight";
inline constexpr std::string_view kFusionHiddenBias = "scorer.fusion.hidden.bias";
inline constexpr std::string_view kFusionOutputWeight = "scorer.fusion.output.weight";  // W_f
inline constexpr std::string_view kFusionOutputBias = "scorer.fusion.output.bias";
}  // namespace scorer_param

// Adds every scorer tensor to the store with scaled-Gaussian initialisation.
void init_scorer_params(ParameterStore& store, const ModelDims& dims, std::uint64_t seed);

// Scorer parameters bound as leaves on one graph.
struct ScorerNodes {
  ModelDims dims;
  NodeId extractor_weight, extractor_bias;
  NodeId text_weight, text_bias;
  NodeId frame_projection, question_projection;
  NodeId fusion_hidden_weight, fusion_hidden_bias;
  NodeId fusion_output_weight, fusion_output_bias;
};

// Throws ShapeError if any stored tensor disagrees with dims.
ScorerNodes bind_scorer(Graph& graph, const ParameterStore& store, const ModelDims& dims);

// Shared encoder outputs: u_i = E_e(h_i) per frame and v = E_t(q).
struct Encoding {
  std::vector<NodeId> frames;
  NodeId question;
};

Encoding encode(const FrameSet& frames, const QuestionEmbedding& question,
                const ScorerNodes& scorer, Graph& graph);

std::vector<NodeId> qfs_scores(const FrameSet& frames, const QuestionEmbedding& question,
                               const ScorerNodes& scorer, Graph& graph);
std::vector<NodeId> qfs_scores(const Encoding& encoding, const ScorerNodes& scorer, Graph& graph);

std::vector<NodeId> qfm_scores(const FrameSet& frames, const QuestionEmbedding& question,
                               const ScorerNodes& scorer, Graph& graph);
std::vector<NodeId> qfm_scores(const Encoding& encoding, const ScorerNodes& scorer, Graph& graph);

// Constant leaves; M = 1 yields a single 0.
std::vector<NodeId> ifd_scores(const FrameSet& frames, Graph& graph);

// Cosine similarity of L2-normalised rows: symmetric, unit diagonal, in [-1, 1].
Matrix pairwise_similarity(const FrameSet& frames);

struct ScoreNodes {
  std::vector<NodeId> qfs;  // empty when the mechanism is switched off
  std::vector<NodeId> qfm;
  std::vector<NodeId> ifd;
  std::vector<NodeId> aggregate;
};

// aggregate_i = sum of the non-empty components. All-empty throws
// ContractError("empty scorer"); unequal non-empty lengths throw ShapeError.
ScoreNodes aggregate_scores(Graph& graph, std::span<const NodeId> qfs, std::span<const NodeId> qfm,
                            std::span<const NodeId> ifd);

ScoreNodes score_frames(const FrameSet& frames, const QuestionEmbedding& question,
                        const ScorerNodes& scorer, const Mechanisms& mechanisms, Graph& graph);

struct ScoreBreakdown {
  std::vector<double> qfs;  // empty when switched off
  std::vector<double> qfm;
  std::vector<double> ifd;
  std::vector<double> aggregate;
};

ScoreBreakdown read_breakdown(const Graph& graph, const ScoreNodes& nodes);

}  // namespace framesel
