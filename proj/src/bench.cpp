#include "framesel/bench.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

#include "framesel/errors.hpp"

namespace framesel {
namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b * 0x9E3779B97F4A7C15ULL + 0x7F4A7C15ULL);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Vector gaussian(Rng& rng, std::size_t n, double stddev) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = stddev * dist(rng);
  return v;
}

Matrix orthonormal_columns(Rng& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix g(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = dist(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(g.rows(), g.cols());
}

class Fnv1a {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001B3ULL;
    }
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void doubles(const double* d, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) u64(std::bit_cast<std::uint64_t>(d[i]));
  }
  [[nodiscard]] std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xCBF29CE484222325ULL;
};

}  // namespace

void BenchConfig::validate() const {
  if (frames < 1) throw ContractError("bench: frames must be at least 1");
  if (options < 2) throw ContractError("bench: at least two options are required");
  if (planted < 1 || planted >= frames) {
    throw ContractError("bench: planted keyframes must satisfy 1 <= r < M");
  }
  if (planted + cluster_size > frames) {
    throw ContractError("bench: planted + cluster size exceeds frame count");
  }
  if (concepts < options + 1) {
    throw ContractError("bench: need at least N + 1 concepts");
  }
  if (concepts > frame_dim || concepts > question_dim) {
    throw ContractError("bench: concepts must not exceed the embedding dimensions");
  }
  if (!(scene_weight >= 0.0) || !std::isfinite(scene_weight)) {
    throw ContractError("bench: scene weight must be finite and non-negative");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ContractError("bench: noise sigma must be finite and non-negative");
  }
}

BenchBasis make_basis(const BenchConfig& config) {
  config.validate();
  Rng rng(config.basis_seed);
  BenchBasis basis;
  basis.frame_concepts = orthonormal_columns(rng, config.frame_dim, config.concepts);
  basis.text_concepts = orthonormal_columns(rng, config.question_dim, config.concepts);
  return basis;
}

std::vector<VideoQAInstance> generate_dataset(const BenchConfig& config) {
  config.validate();
  const BenchBasis basis = make_basis(config);
  const double sigma = config.noise_sigma;
  const auto m = config.frames;

  std::vector<VideoQAInstance> out;
  out.reserve(config.videos);
  for (std::size_t v = 0; v < config.videos; ++v) {
    Rng rng(mix(config.seed, v));

    std::vector<std::size_t> concepts(config.concepts);
    std::iota(concepts.begin(), concepts.end(), std::size_t{0});
    for (std::size_t j = 0; j <= config.options; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, concepts.size() - 1);
      std::swap(concepts[j], concepts[pick(rng)]);
    }
    const std::size_t question_concept = concepts[0];
    std::uniform_int_distribution<std::size_t> pick_answer(0, config.options - 1);
    const std::size_t answer = pick_answer(rng);

    std::vector<std::size_t> slots(m);
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    for (std::size_t j = 0; j < config.planted + config.cluster_size; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, m - 1);
      std::swap(slots[j], slots[pick(rng)]);
    }

    const auto concept_frame = [&](std::size_t c) -> Vector {
      return basis.frame_concepts.col(static_cast<Eigen::Index>(c));
    };
    const auto concept_text = [&](std::size_t c) -> Vector {
      return basis.text_concepts.col(static_cast<Eigen::Index>(c));
    };

    const double frame_unit = 1.0 / std::sqrt(static_cast<double>(config.frame_dim));
    const double text_unit = 1.0 / std::sqrt(static_cast<double>(config.question_dim));
    const auto scene = [&] {
      return gaussian(rng, config.frame_dim, config.scene_weight * frame_unit);
    };
    const auto perturb = [&] { return gaussian(rng, config.frame_dim, sigma * frame_unit); };

    Matrix frames(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(config.frame_dim));
    std::vector<bool> assigned(m, false);
    std::vector<std::size_t> planted(slots.begin(),
                                     slots.begin() + static_cast<std::ptrdiff_t>(config.planted));
    for (std::size_t slot : planted) {
      const Vector f = config.question_weight * concept_frame(question_concept) +
                       config.answer_weight * concept_frame(concepts[1 + answer]) + scene() +
                       perturb();
      frames.row(static_cast<Eigen::Index>(slot)) = f.transpose();
      assigned[slot] = true;
    }
    // One question-aligned frame without answer content, copied with small perturbations.
    const Vector cluster_base = concept_frame(question_concept) + scene();
    for (std::size_t j = 0; j < config.cluster_size; ++j) {
      const std::size_t slot = slots[config.planted + j];
      const Vector f = cluster_base + perturb();
      frames.row(static_cast<Eigen::Index>(slot)) = f.transpose();
      assigned[slot] = true;
    }
    for (std::size_t slot = 0; slot < m; ++slot) {
      if (assigned[slot]) continue;
      frames.row(static_cast<Eigen::Index>(slot)) = scene().transpose();
    }

    const Vector question =
        concept_text(question_concept) + gaussian(rng, config.question_dim, sigma * text_unit);
    std::vector<Vector> options;
    options.reserve(config.options);
    for (std::size_t n = 0; n < config.options; ++n) {
      options.push_back(concept_text(concepts[1 + n]) +
                        gaussian(rng, config.question_dim, sigma * text_unit));
    }

    std::sort(planted.begin(), planted.end());
    const std::string id = "v" + std::to_string(v);
    VideoQAInstance inst{FrameSet(std::move(frames), id), QuestionEmbedding(question, id),
                         std::move(options), answer, std::move(planted)};
    inst.validate();
    out.push_back(std::move(inst));
  }
  return out;
}

std::uint64_t dataset_hash(std::span<const VideoQAInstance> dataset) {
  Fnv1a h;
  h.u64(dataset.size());
  for (const VideoQAInstance& inst : dataset) {
    const Matrix& f = inst.frames.embeddings();
    h.u64(static_cast<std::uint64_t>(f.rows()));
    h.u64(static_cast<std::uint64_t>(f.cols()));
    h.doubles(f.data(), static_cast<std::size_t>(f.size()));
    const Vector& q = inst.question.embedding();
    h.doubles(q.data(), static_cast<std::size_t>(q.size()));
    h.u64(inst.options.size());
    for (const Vector& o : inst.options) h.doubles(o.data(), static_cast<std::size_t>(o.size()));
    h.u64(inst.answer_index);
    if (inst.planted_keyframes) {
      h.u64(inst.planted_keyframes->size());
      for (std::size_t i : *inst.planted_keyframes) h.u64(i);
    } else {
      h.u64(~0ULL);
    }
  }
  return h.value();
}

std::size_t oracle_readout(const VideoQAInstance& instance, const BenchBasis& basis,
                           std::span<const std::size_t> selected) {
  if (selected.empty()) throw ContractError("oracle_readout: empty selection");
  Vector mean = Vector::Zero(static_cast<Eigen::Index>(instance.frames.dim()));
  for (std::size_t i : selected) mean += instance.frames.frame(i);
  mean /= static_cast<double>(selected.size());

  const Vector frame_latent = basis.frame_concepts.transpose() * mean;
  const Vector question_latent = basis.text_concepts.transpose() * instance.question.embedding();
  Eigen::Index question_concept = 0;
  question_latent.cwiseAbs().maxCoeff(&question_concept);
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < instance.options.size(); ++n) {
    Vector option_latent = basis.text_concepts.transpose() * instance.options[n];
    // Shared question content must not vote for an option.
    option_latent(question_concept) = 0.0;
    const double score = frame_latent.dot(option_latent);
    if (score > best_score) {
      best_score = score;
      best = n;
    }
  }
  return best;
}

double keyframe_recall(std::span<const std::size_t> selected,
                       std::span<const std::size_t> planted) {
  if (planted.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t p : planted) {
    if (std::find(selected.begin(), selected.end(), p) != selected.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(planted.size());
}

double selection_redundancy(const FrameSet& frames, std::span<const std::size_t> selected) {
  if (selected.size() < 2) return 0.0;
  const Matrix sim = pairwise_similarity(frames);
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < selected.size(); ++a) {
    for (std::size_t b = a + 1; b < selected.size(); ++b) {
      total += sim(static_cast<Eigen::Index>(selected[a]), static_cast<Eigen::Index>(selected[b]));
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

BenchMetrics evaluate(const Model& model, std::span<const VideoQAInstance> dataset,
                      std::size_t k_prime, SelectionStrategy strategy, std::uint64_t seed) {
  BenchMetrics metrics;
  if (dataset.empty()) return metrics;
  double recall = 0.0;
  double redundancy = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const VideoQAInstance& inst = dataset[i];
    Inference result;
    switch (strategy) {
      case SelectionStrategy::kLearned: result = infer(inst, model, k_prime); break;
      case SelectionStrategy::kUniform:
        result =
            infer_with_indices(inst, model, uniform_indices(inst.frames.frame_count(), k_prime));
        break;
      case SelectionStrategy::kRandom:
        result = infer_with_indices(
            inst, model, random_indices(inst.frames.frame_count(), k_prime, mix(seed, i)));
        break;
    }
    const auto& selected = result.selection.indices;
    if (inst.planted_keyframes) recall += keyframe_recall(selected, *inst.planted_keyframes);
    redundancy += selection_redundancy(inst.frames, selected);
    if (result.predicted_answer == inst.answer_index) ++correct;
  }
  const auto n = static_cast<double>(dataset.size());
  metrics.keyframe_recall = recall / n;
  metrics.answer_accuracy = static_cast<double>(correct) / n;
  metrics.redundancy = redundancy / n;
  metrics.instances = dataset.size();
  return metrics;
}

std::vector<AblationRow> run_ablation(const BenchConfig& config, const AblationSettings& settings) {
  config.validate();
  settings.train.validate();
  if (settings.seeds.empty()) throw ContractError("ablation needs at least one seed");
  const std::size_t k_prime = settings.k_prime == 0 ? settings.train.sampler.k : settings.k_prime;

  struct Variant {
    const char* name;
    Mechanisms mechanisms;
    SelectionStrategy strategy;
  };
  const Variant variants[] = {
      {"full", Mechanisms{}, SelectionStrategy::kLearned},
      {"w/o QFS", Mechanisms::without("qfs"), SelectionStrategy::kLearned},
      {"w/o QFM", Mechanisms::without("qfm"), SelectionStrategy::kLearned},
      {"w/o IFD", Mechanisms::without("ifd"), SelectionStrategy::kLearned},
      {"uniform", Mechanisms{}, SelectionStrategy::kUniform},
      {"random", Mechanisms{}, SelectionStrategy::kRandom},
  };

  std::vector<AblationRow> rows;
  for (const Variant& v : variants) rows.push_back(AblationRow{v.name, {}, {}, {}});

  for (std::uint64_t seed : settings.seeds) {
    BenchConfig train_cfg = config;
    train_cfg.seed = mix(seed, 0x747261696EULL);
    BenchConfig test_cfg = config;
    test_cfg.seed = mix(seed, 0x74657374ULL);
    test_cfg.videos = settings.test_videos;
    const std::vector<VideoQAInstance> train_set = generate_dataset(train_cfg);
    const std::vector<VideoQAInstance> test_set = generate_dataset(test_cfg);

    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Variant& v = variants[r];
      TrainConfig tc = settings.train;
      tc.seed = seed;
      tc.mechanisms = v.mechanisms;
      tc.strategy = v.strategy;
      Model model = Model::initialize(settings.dims, seed, v.mechanisms);
      train(train_set, model, tc);
      rows[r].per_seed.push_back(evaluate(model, test_set, k_prime, v.strategy, seed));
      Fnv1a h;
      h.u64(dataset_hash(train_set));
      h.u64(dataset_hash(test_set));
      rows[r].dataset_hashes.push_back(h.value());
    }
  }

  for (AblationRow& row : rows) {
    const auto n = static_cast<double>(row.per_seed.size());
    for (const BenchMetrics& m : row.per_seed) {
      row.mean.keyframe_recall += m.keyframe_recall / n;
      row.mean.answer_accuracy += m.answer_accuracy / n;
      row.mean.redundancy += m.redundancy / n;
      row.mean.instances += m.instances;
    }
  }
  return rows;
}

std::string format_ablation_table(std::span<const AblationRow> rows) {
  std::string out = "variant      recall   accuracy  redundancy\n";
  char line[128];
  for (const AblationRow& row : rows) {
    std::snprintf(line, sizeof line, "%-10s  %7.4f  %9.4f  %10.4f\n", row.variant.c_str(),
                  row.mean.keyframe_recall, row.mean.answer_accuracy, row.mean.redundancy);
    out += line;
  }
  return out;
}

}  // namespace framesel
