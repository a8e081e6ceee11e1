#pragma once

// Synthetic VideoQA benchmark with planted keyframes and a redundancy trap.
//
// Concepts are orthonormal directions in frame space and in text space, shared
// by every dataset generated with the same basis seed. Each question is about
// one concept and offers N other concepts as answers. Per video:
//   planted frames  : question concept + correct-answer concept + noise
//   redundancy trap : near-copies of one pure question-concept frame
//   the rest        : isotropic noise with no answer signal
// The answer is recoverable from the planted frames and from nothing else.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "framesel/pipeline.hpp"

namespace framesel {

struct BenchConfig {
  std::size_t videos = 200;
  std::size_t frames = 32;       // M
  std::size_t options = 5;       // N
  std::size_t planted = 3;       // r
  std::size_t cluster_size = 6;  // near-duplicate distractors
  double noise_sigma = 0.1;      // expected norm of a perturbation
  std::uint64_t seed = 0;
  std::uint64_t basis_seed = 7919;
  std::size_t concepts = 16;
  double question_weight = 0.6;  // question-concept amplitude in planted frames
  double answer_weight = 1.0;    // answer-concept amplitude in planted frames
  double scene_weight = 1.0;     // norm of the per-frame content every frame carries
  std::size_t frame_dim = 64;
  std::size_t question_dim = 32;

  void validate() const;
};

struct BenchBasis {
  Matrix frame_concepts;  // frame_dim x concepts, orthonormal columns
  Matrix text_concepts;   // question_dim x concepts, orthonormal columns
};

BenchBasis make_basis(const BenchConfig& config);

std::vector<VideoQAInstance> generate_dataset(const BenchConfig& config);

// FNV-1a over every embedding byte, answer index and planted set.
std::uint64_t dataset_hash(std::span<const VideoQAInstance> dataset);

// Reads the answer off the selected frames using the generating basis.
std::size_t oracle_readout(const VideoQAInstance& instance, const BenchBasis& basis,
                           std::span<const std::size_t> selected);

struct BenchMetrics {
  double keyframe_recall = 0.0;
  double answer_accuracy = 0.0;
  double redundancy = 0.0;
  std::size_t instances = 0;
};

// |selected ∩ planted| / |planted|.
double keyframe_recall(std::span<const std::size_t> selected, std::span<const std::size_t> planted);
// Mean cosine similarity over selected pairs; 0 when fewer than two frames.
double selection_redundancy(const FrameSet& frames, std::span<const std::size_t> selected);

// Per-instance inference with the given strategy; kRandom draws are seeded
// from (seed, instance index).
BenchMetrics evaluate(const Model& model, std::span<const VideoQAInstance> dataset,
                      std::size_t k_prime, SelectionStrategy strategy = SelectionStrategy::kLearned,
                      std::uint64_t seed = 0);

struct AblationSettings {
  TrainConfig train;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t test_videos = 200;
  std::size_t k_prime = 0;  // 0 means train.sampler.k
  ModelDims dims;
};

struct AblationRow {
  std::string variant;
  BenchMetrics mean;
  std::vector<BenchMetrics> per_seed;
  std::vector<std::uint64_t> dataset_hashes;  // one per seed, train + test
};

// Trains and evaluates {full, w/o QFS, w/o QFM, w/o IFD, uniform, random} on
// identical data, initialisation and seeds.
std::vector<AblationRow> run_ablation(const BenchConfig& config, const AblationSettings& settings);

std::string format_ablation_table(std::span<const AblationRow> rows);

}  // namespace framesel
