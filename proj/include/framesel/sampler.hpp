#pragma once

// Turning aggregate frame scores into a selected subset.
//
// Training uses a relaxed k-hot vector built by k successive tempered
// softmaxes over Gumbel-perturbed scores, with a log(1 - a) mask that pushes
// already-chosen mass out of later rounds. Inference takes the hard top-k.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "framesel/autodiff.hpp"

namespace framesel {

using Rng = std::mt19937_64;

inline constexpr double kDefaultGumbelClamp = 1e-12;
inline constexpr double kMaskLogFloor = 1e-12;

enum class SelectionMode { kTrainStochastic, kTrainDeterministic, kInference };

const char* mode_name(SelectionMode mode);

struct SamplerConfig {
  std::size_t k = 8;
  double tau = 0.1;
  bool stochastic = true;
  double gumbel_clamp = kDefaultGumbelClamp;
};

struct SelectionResult {
  std::vector<std::size_t> indices;     // strictly ascending, size k
  std::vector<double> relaxed_weights;  // length M, sums to k
  std::optional<NodeId> weights_node;   // set by relaxed_topk
  SelectionMode mode = SelectionMode::kInference;
  double tau = 0.0;
  std::optional<std::uint64_t> seed;
};

// p_i = exp(S_i / tau) / sum_j exp(S_j / tau), max-stabilised.
std::vector<double> selection_probabilities(std::span<const double> scores, double tau);

// Uniform draws in [clamp, 1 - clamp].
std::vector<double> clamped_uniforms(std::size_t count, Rng& rng,
                                     double clamp = kDefaultGumbelClamp);
// g_i = -log(-log u_i) with u_i clamped to [clamp, 1 - clamp].
std::vector<double> gumbel_from_uniforms(std::span<const double> uniforms,
                                         double clamp = kDefaultGumbelClamp);
std::vector<double> gumbel_noise(std::size_t count, Rng& rng, double clamp = kDefaultGumbelClamp);

// Indices of the k largest keys, ties toward the lower index, returned ascending.
std::vector<std::size_t> top_k_indices(std::span<const double> keys, std::size_t k);

// Gumbel-top-k: keys S_i / tau + g_i. For k = 1 index i is drawn with
// probability selection_probabilities(S, tau)_i.
std::vector<std::size_t> wrs_indices(std::span<const double> scores, std::size_t k, double tau,
                                     Rng& rng, double clamp = kDefaultGumbelClamp);
std::vector<std::size_t> wrs_indices_from_uniforms(std::span<const double> scores, std::size_t k,
                                                   double tau, std::span<const double> uniforms,
                                                   double clamp = kDefaultGumbelClamp);

// Efraimidis-Spirakis reservoir keys u_i^(1 / w_i), compared in log form.
std::vector<std::size_t> efraimidis_indices(std::span<const double> weights, std::size_t k,
                                            std::span<const double> uniforms);

// Relaxed top-k over score nodes. Keys are r_i = S_i + tau * g_i (so that
// r_i / tau = S_i / tau + g_i) in stochastic mode and r_i = S_i otherwise.
// The noise overload takes g directly (frozen noise); deterministic configs
// ignore it.
SelectionResult relaxed_topk(Graph& graph, std::span<const NodeId> scores,
                             const SamplerConfig& config, std::uint64_t seed);
SelectionResult relaxed_topk(Graph& graph, std::span<const NodeId> scores,
                             const SamplerConfig& config, std::span<const double> noise);

// Exact k-hot selection of the largest scores.
SelectionResult hard_topk(std::span<const double> scores, std::size_t k);

}  // namespace framesel
