#include "framesel/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "framesel/errors.hpp"

namespace framesel {
namespace {

void check_k(std::size_t k, std::size_t m) {
  if (k < 1) throw ContractError("k must be at least 1");
  if (k > m) {
    throw ContractError("requested k exceeds frame count M (k=" + std::to_string(k) +
                        ", M=" + std::to_string(m) + ")");
  }
}

void check_tau(double tau) {
  if (!(tau > 0.0)) throw DomainError("tau must be > 0, got " + std::to_string(tau));
}

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError(std::string(what) + " must be finite");
  }
}

}  // namespace

const char* mode_name(SelectionMode mode) {
  switch (mode) {
    case SelectionMode::kTrainStochastic: return "train-stochastic";
    case SelectionMode::kTrainDeterministic: return "train-deterministic";
    case SelectionMode::kInference: return "inference";
  }
  return "unknown";
}

std::vector<double> selection_probabilities(std::span<const double> scores, double tau) {
  check_tau(tau);
  check_finite(scores, "scores");
  if (scores.empty()) throw ShapeError("selection_probabilities: empty score vector");
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp((scores[i] - top) / tau);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

std::vector<double> clamped_uniforms(std::size_t count, Rng& rng, double clamp) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::vector<double> u(count);
  for (double& v : u) v = std::clamp(dist(rng), clamp, 1.0 - clamp);
  return u;
}

std::vector<double> gumbel_from_uniforms(std::span<const double> uniforms, double clamp) {
  std::vector<double> g(uniforms.size());
  for (std::size_t i = 0; i < uniforms.size(); ++i) {
    const double u = std::clamp(uniforms[i], clamp, 1.0 - clamp);
    g[i] = -std::log(-std::log(u));
  }
  return g;
}

std::vector<double> gumbel_noise(std::size_t count, Rng& rng, double clamp) {
  return gumbel_from_uniforms(clamped_uniforms(count, rng, clamp), clamp);
}

std::vector<std::size_t> top_k_indices(std::span<const double> keys, std::size_t k) {
  check_k(k, keys.size());
  std::vector<std::size_t> order(keys.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&keys](std::size_t a, std::size_t b) {
                      if (keys[a] != keys[b]) return keys[a] > keys[b];
                      return a < b;
                    });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<std::size_t> wrs_indices_from_uniforms(std::span<const double> scores, std::size_t k,
                                                   double tau, std::span<const double> uniforms,
                                                   double clamp) {
  check_k(k, scores.size());
  check_tau(tau);
  check_finite(scores, "scores");
  if (uniforms.size() != scores.size()) {
    throw ShapeError("wrs_indices: need one uniform per score");
  }
  const std::vector<double> g = gumbel_from_uniforms(uniforms, clamp);
  std::vector<double> keys(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) keys[i] = scores[i] / tau + g[i];
  return top_k_indices(keys, k);
}

std::vector<std::size_t> wrs_indices(std::span<const double> scores, std::size_t k, double tau,
                                     Rng& rng, double clamp) {
  const std::vector<double> u = clamped_uniforms(scores.size(), rng, clamp);
  return wrs_indices_from_uniforms(scores, k, tau, u, clamp);
}

std::vector<std::size_t> efraimidis_indices(std::span<const double> weights, std::size_t k,
                                            std::span<const double> uniforms) {
  check_k(k, weights.size());
  if (uniforms.size() != weights.size()) {
    throw ShapeError("efraimidis_indices: need one uniform per weight");
  }
  std::vector<double> keys(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw DomainError("efraimidis_indices: weights must be positive and finite");
    }
    if (!(uniforms[i] > 0.0 && uniforms[i] < 1.0)) {
      throw DomainError("efraimidis_indices: uniforms must lie in (0, 1)");
    }
    // log(u^(1/w)); same ordering as u^(1/w) without underflow to 0 or 1.
    keys[i] = std::log(uniforms[i]) / weights[i];
  }
  return top_k_indices(keys, k);
}

SelectionResult relaxed_topk(Graph& graph, std::span<const NodeId> scores,
                             const SamplerConfig& config, std::span<const double> noise) {
  const std::size_t m = scores.size();
  check_k(config.k, m);
  check_tau(config.tau);
  if (config.stochastic && noise.size() != m) {
    throw ShapeError("relaxed_topk: noise has " + std::to_string(noise.size()) + " entries for " +
                     std::to_string(m) + " scores");
  }

  const auto rows = static_cast<Eigen::Index>(m);
  NodeId keys = graph.concat(scores);
  if (config.stochastic) {
    Matrix scaled(rows, 1);
    for (std::size_t i = 0; i < m; ++i)
      scaled(static_cast<Eigen::Index>(i), 0) = config.tau * noise[i];
    keys = graph.add(keys, graph.constant(std::move(scaled)));
  }

  const NodeId ones = graph.constant(Matrix::Ones(rows, 1));
  std::optional<NodeId> mask;
  std::optional<NodeId> weights;
  for (std::size_t j = 0; j < config.k; ++j) {
    const NodeId masked = mask ? graph.add(keys, *mask) : keys;
    const NodeId a = graph.softmax(masked, config.tau);
    weights = weights ? graph.add(*weights, a) : a;
    if (j + 1 < config.k) {
      const NodeId step = graph.log(graph.clamp_min(graph.subtract(ones, a), kMaskLogFloor));
      mask = mask ? graph.add(*mask, step) : step;
    }
  }

  const Matrix& key_values = graph.value(keys);
  const Matrix& weight_values = graph.value(*weights);
  SelectionResult result;
  result.indices = top_k_indices(std::span<const double>(key_values.data(), m), config.k);
  result.relaxed_weights.assign(weight_values.data(), weight_values.data() + m);
  result.weights_node = *weights;
  result.mode =
      config.stochastic ? SelectionMode::kTrainStochastic : SelectionMode::kTrainDeterministic;
  result.tau = config.tau;
  return result;
}

SelectionResult relaxed_topk(Graph& graph, std::span<const NodeId> scores,
                             const SamplerConfig& config, std::uint64_t seed) {
  std::vector<double> noise;
  if (config.stochastic) {
    Rng rng(seed);
    noise = gumbel_noise(scores.size(), rng, config.gumbel_clamp);
  }
  SelectionResult result = relaxed_topk(graph, scores, config, noise);
  if (config.stochastic) result.seed = seed;
  return result;
}

SelectionResult hard_topk(std::span<const double> scores, std::size_t k) {
  check_finite(scores, "scores");
  SelectionResult result;
  result.indices = top_k_indices(scores, k);
  result.relaxed_weights.assign(scores.size(), 0.0);
  for (std::size_t i : result.indices) result.relaxed_weights[i] = 1.0;
  result.mode = SelectionMode::kInference;
  result.tau = 0.0;
  return result;
}

}  // namespace framesel
