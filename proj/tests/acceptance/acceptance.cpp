// Acceptance gate. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Every tolerance and time limit is fixed here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "framesel/bench.hpp"
#include "framesel/diagnostics.hpp"
#include "framesel/fseb.hpp"
#include "framesel/manifest.hpp"
#include "framesel/pipeline.hpp"
#include "framesel/sampler.hpp"
#include "framesel/scoring.hpp"

namespace fs = std::filesystem;
using namespace framesel;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::vector<long double> softmax_ld(const std::vector<double>& s, double tau) {
  long double hi = *std::max_element(s.begin(), s.end());
  std::vector<long double> p(s.size());
  long double z = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    p[i] = std::exp((static_cast<long double>(s[i]) - hi) / tau);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

std::vector<double> uniform_vector(Rng& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

Matrix gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

std::vector<double> ifd_values(const FrameSet& frames) {
  Graph g;
  std::vector<double> out;
  for (NodeId n : ifd_scores(frames, g)) out.push_back(g.scalar_value(n));
  return out;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// Settings shared by the learning and ablation criteria.
BenchConfig bench_config(std::uint64_t seed, std::size_t videos) {
  BenchConfig c;
  c.videos = videos;
  c.seed = seed;
  return c;
}

TrainConfig train_config(std::uint64_t seed) {
  TrainConfig t;
  t.sampler.k = 8;
  t.sampler.tau = 0.1;
  t.learning_rate = 0.3;
  t.epochs = 5;
  t.batch_size = 8;
  t.seed = seed;
  return t;
}

constexpr std::size_t kTrainVideos = 1000;
constexpr std::size_t kTestVideos = 500;

Outcome softmax_law() {
  const std::vector<double> got = selection_probabilities(std::vector<double>{2.0, 0.0}, 1.0);
  const std::vector<long double> oracle = softmax_ld({2.0, 0.0}, 1.0);
  const double expected[] = {0.8807970779778823, 0.11920292202211755};
  double err = 0;
  for (int i = 0; i < 2; ++i) {
    err = std::max(err, std::abs(got[i] - expected[i]));
    err = std::max(err, static_cast<double>(std::abs(oracle[i] - expected[i])));
  }
  Rng rng(101);
  double shift_err = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> s = uniform_vector(rng, 2 + t % 30, -5, 5);
    const double tau = std::uniform_real_distribution<double>(0.05, 2.0)(rng);
    const double c = std::uniform_real_distribution<double>(-50, 50)(rng);
    const std::vector<double> p = selection_probabilities(s, tau);
    for (double& x : s) x += c;
    const std::vector<double> q = selection_probabilities(s, tau);
    for (std::size_t i = 0; i < p.size(); ++i)
      shift_err = std::max(shift_err, std::abs(p[i] - q[i]));
  }
  return {err <= 1e-12 && shift_err <= 1e-12,
          fmt("max error %.3g (tol 1e-12), shift error %.3g (tol 1e-12)", err, shift_err)};
}

Outcome sampling_law() {
  constexpr int kTrials = 100000;
  Rng rng(2026);
  double worst = 0;  // in binomial standard deviations
  for (int v = 0; v < 20; ++v) {
    const std::size_t m = 3 + v % 4;
    const std::vector<double> s = uniform_vector(rng, m, -1.0, 3.0);
    const double tau = 1.0;
    const std::vector<double> p = selection_probabilities(s, tau);

    std::vector<int> wrs(m, 0), relaxed(m, 0);
    SamplerConfig cfg;
    cfg.k = 1;
    cfg.tau = tau;
    cfg.stochastic = true;
    for (int t = 0; t < kTrials; ++t) {
      ++wrs[wrs_indices(s, 1, tau, rng).front()];
      Graph g;
      std::vector<NodeId> nodes;
      for (double x : s) nodes.push_back(g.scalar(x));
      const SelectionResult r = relaxed_topk(g, nodes, cfg, rng());
      const auto& w = r.relaxed_weights;
      ++relaxed[static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin())];
    }
    for (std::size_t i = 0; i < m; ++i) {
      const double sd = std::sqrt(kTrials * p[i] * (1 - p[i]));
      worst = std::max(worst, std::abs(wrs[i] - kTrials * p[i]) / sd);
      worst = std::max(worst, std::abs(relaxed[i] - kTrials * p[i]) / sd);
    }
  }
  return {worst <= 3.0, fmt("worst deviation %.2f sigma (limit 3)", worst)};
}

Outcome wrs_equivalence() {
  Rng rng(303);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t m = 2 + static_cast<std::size_t>(t % 15);
    const std::size_t k = 1 + static_cast<std::size_t>(t) % m;
    const double tau = t % 2 ? 0.1 : 1.0;
    const std::vector<double> s = uniform_vector(rng, m, -1.0, 3.0);
    const std::vector<double> u = clamped_uniforms(m, rng);
    std::vector<double> w(m);
    for (std::size_t i = 0; i < m; ++i) w[i] = std::exp(s[i] / tau);
    if (efraimidis_indices(w, k, u) != wrs_indices_from_uniforms(s, k, tau, u)) ++mismatches;
  }
  return {mismatches == 0, fmt("%.0f mismatches in 1000 trials", mismatches)};
}

Outcome temperature_limit() {
  std::vector<std::vector<double>> cases = {{5, 1, 3}};
  Rng rng(404);
  for (int c = 0; c < 5; ++c) {
    std::vector<double> s(10);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = 0.1 * static_cast<double>(i);
    std::shuffle(s.begin(), s.end(), rng);
    cases.push_back(s);
  }
  bool ok = true;
  double final_dev = 0;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const auto& s = cases[c];
    const std::size_t k = c == 0 ? 2 : 1 + c;
    const std::vector<std::size_t> hard = hard_topk(s, k).indices;
    double prev = INFINITY;
    for (double tau : {1.0, 0.1, 0.01, 0.001}) {
      Graph g;
      std::vector<NodeId> nodes;
      for (double x : s) nodes.push_back(g.scalar(x));
      const SelectionResult r = relaxed_topk(g, nodes, SamplerConfig{k, tau, false}, 0);
      double dev = 0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        const bool on = std::find(hard.begin(), hard.end(), i) != hard.end();
        dev = std::max(dev, std::abs(r.relaxed_weights[i] - (on ? 1.0 : 0.0)));
      }
      ok = ok && r.indices == hard && dev < prev;
      prev = dev;
    }
    final_dev = std::max(final_dev, prev);
  }
  ok = ok && final_dev < 1e-3;
  return {ok, fmt("final max-norm deviation %.3g (limit 1e-3), ", final_dev) +
                  "monotone with matching indices: " + (ok ? "yes" : "no")};
}

Outcome ifd_properties() {
  Rng rng(505);
  bool range_ok = true, dup_ok = true;
  double scale_err = 0;
  for (int t = 0; t < 200; ++t) {
    const Eigen::Index m = 2 + t % 10, d = 1 + t % 7;
    Matrix e = gaussian_matrix(rng, m, d);
    const std::vector<double> base = ifd_values(FrameSet(e));
    for (double x : base) range_ok = range_ok && x >= 0.0 && x <= 2.0;

    Matrix scaled = e;
    const Eigen::Index row = t % m;
    scaled.row(row) *= std::uniform_real_distribution<double>(0.01, 100.0)(rng);
    const std::vector<double> after = ifd_values(FrameSet(scaled));
    for (std::size_t i = 0; i < base.size(); ++i)
      scale_err = std::max(scale_err, std::abs(after[i] - base[i]));

    if (base[static_cast<std::size_t>(row)] > 0) {
      Matrix dup(m + 1, d);
      dup.topRows(m) = e;
      dup.row(m) = e.row(row);
      dup_ok = dup_ok && ifd_values(FrameSet(dup))[static_cast<std::size_t>(row)] <
                             base[static_cast<std::size_t>(row)];
    }
  }
  Matrix hand(3, 2);
  hand << 1, 0, 0, 1, 1, 0;
  const std::vector<double> h = ifd_values(FrameSet(hand));
  const bool hand_ok = h == std::vector<double>{0.5, 1.0, 0.5};
  const bool ok = range_ok && dup_ok && hand_ok && scale_err <= 1e-9;
  return {ok, fmt("scale error %.3g (tol 1e-9), ", scale_err) + "range " +
                  (range_ok ? "ok" : "violated") + ", duplicate penalty " +
                  (dup_ok ? "ok" : "violated") + ", hand case " + (hand_ok ? "exact" : "wrong")};
}

Outcome gradient_fidelity() {
  GradientSuiteConfig cfg;
  cfg.check.tolerance = 1e-4;
  double worst = 0;
  bool ok = true;
  for (const NamedReport& r : run_gradient_suite(cfg)) {
    worst = std::max(worst, r.report.max_relative_error);
    ok = ok && r.report.passed;
  }
  return {ok, fmt("max relative error %.3g over qfs, qfm, pipeline (tol 1e-4)", worst)};
}

Outcome end_to_end_learning() {
  // Single-instance overfit.
  BenchConfig one = bench_config(77, 1);
  const std::vector<VideoQAInstance> single = generate_dataset(one);
  Model overfit = Model::initialize(ModelDims{}, 77);
  TrainConfig oc = train_config(77);
  double loss = INFINITY;
  std::size_t steps = 0;
  while (steps < 200 && loss >= 0.05) {
    loss = training_step(single, overfit, oc, steps).mean_loss;
    ++steps;
  }
  const bool overfit_ok = loss < 0.05;

  bool held_out_ok = true;
  std::ostringstream accs;
  const double chance = 1.0 / static_cast<double>(BenchConfig{}.options);
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto train_set = generate_dataset(bench_config(seed, kTrainVideos));
    const auto test_set = generate_dataset(bench_config(seed + 1000, kTestVideos));
    Model model = Model::initialize(ModelDims{}, seed);
    train(train_set, model, train_config(seed));
    const double acc = evaluate(model, test_set, 8).answer_accuracy;
    held_out_ok = held_out_ok && acc > chance + 0.1;
    accs << (seed == 1 ? "" : ", ") << acc;
  }
  return {overfit_ok && held_out_ok, fmt("overfit loss %.4f after %.0f steps (limit 0.05 in 200); ",
                                         loss, static_cast<double>(steps)) +
                                         "held-out accuracy " + accs.str() +
                                         fmt(" (need > %.2f)", chance + 0.1)};
}

Outcome ablation_direction() {
  AblationSettings settings;
  settings.train = train_config(0);
  settings.test_videos = kTestVideos;
  const std::vector<AblationRow> rows = run_ablation(bench_config(0, kTrainVideos), settings);
  const AblationRow& full = rows.front();
  bool ok = full.variant == "full";
  std::string losers;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (!(full.mean.keyframe_recall > rows[i].mean.keyframe_recall)) {
      ok = false;
      losers += " " + rows[i].variant;
    }
  }
  double no_ifd_redundancy = NAN;
  for (const AblationRow& r : rows) {
    if (r.variant == "w/o IFD") no_ifd_redundancy = r.mean.redundancy;
  }
  const bool redundancy_ok = full.mean.redundancy < no_ifd_redundancy;
  std::ostringstream table;
  for (const AblationRow& r : rows) {
    table << (r.variant == "full" ? "" : ", ") << r.variant << " "
          << fmt("%.4f", r.mean.keyframe_recall);
  }
  return {ok && redundancy_ok, "recall " + table.str() +
                                   fmt("; redundancy full %.4f vs w/o IFD %.4f",
                                       full.mean.redundancy, no_ifd_redundancy) +
                                   (losers.empty() ? "" : "; full does not exceed:" + losers)};
}

Outcome determinism_and_formats() {
  bool ok = true;
  std::string why;
  auto check = [&](bool cond, const char* what) {
    if (!cond) {
      ok = false;
      why += std::string(" ") + what;
    }
  };

  const auto data = generate_dataset(bench_config(9, 8));
  check(dataset_hash(data) == dataset_hash(generate_dataset(bench_config(9, 8))), "dataset");

  auto run = [&] {
    Model m = Model::initialize(ModelDims{16, 32, 8, 8}, 9);
    BenchConfig c = bench_config(9, 8);
    c.frame_dim = 16;
    TrainConfig t = train_config(9);
    t.epochs = 1;
    train(generate_dataset(c), m, t);
    return m;
  };
  const Model a = run(), b = run();
  bool same = true;
  for (const std::string& name : a.params.names()) {
    same = same && a.params.value(name).cwiseEqual(b.params.value(name)).all();
  }
  check(same, "training");

  auto draw = [] {
    Graph g;
    std::vector<NodeId> nodes;
    for (double x : {0.3, 1.2, -0.4, 0.9, 2.0}) nodes.push_back(g.scalar(x));
    return relaxed_topk(g, nodes, SamplerConfig{3, 0.1, true}, 9).relaxed_weights;
  };
  check(draw() == draw(), "sampler");

  Rng rng(9);
  const Matrix original = gaussian_matrix(rng, 32, 64);
  const Matrix narrowed = original.cast<float>().cast<double>();
  check(decode_fseb(encode_fseb(original)).cwiseEqual(narrowed).all(), "round-trip");

  const fs::path dir = fs::temp_directory_path() / "framesel_acceptance";
  fs::create_directories(dir);
  write_embeddings(Matrix::Constant(1, 1, 1.0), dir / "one.fseb");
  check(fs::file_size(dir / "one.fseb") == 20, "20-byte file");
  check(read_embeddings(dir / "one.fseb")(0, 0) == 1.0, "1x1 value");
  fs::remove_all(dir);

  return {ok, ok ? "dataset, training, sampler and FSEB checks bitwise equal" : "failed:" + why};
}

struct Criterion {
  int number;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "selection probabilities", 1, softmax_law},
      {2, "sampling law", 30, sampling_law},
      {3, "WRS equivalence", 5, wrs_equivalence},
      {4, "temperature limit", 1, temperature_limit},
      {5, "IFD properties", 1, ifd_properties},
      {6, "gradient fidelity", 60, gradient_fidelity},
      {7, "end-to-end learning", 180, end_to_end_learning},
      {8, "ablation direction", 600, ablation_direction},
      {9, "determinism and formats", 1, determinism_and_formats},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.limit_seconds;
    const bool passed = o.passed && in_time;
    if (!passed) ++failures;
    std::printf("[%s] criterion %d %s: %s; %.2fs (limit %.0fs)\n", passed ? "PASS" : "FAIL",
                c.number, c.name, o.detail.c_str(), secs, c.limit_seconds);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
