#include "framesel/cli.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "framesel/bench.hpp"
#include "framesel/diagnostics.hpp"
#include "framesel/errors.hpp"
#include "framesel/fseb.hpp"
#include "framesel/manifest.hpp"
#include "json.hpp"

namespace framesel {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CommonFlags {
  std::string manifest;
  std::string out;
  std::size_t k = 8;
  std::optional<std::size_t> k_prime;
  double tau = 0.1;
  std::uint64_t seed = 0;
  std::size_t epochs = 10;
  double lr = 0.1;
  std::size_t batch = 8;
  std::string ablate;
  bool deterministic = false;
  std::size_t hidden_dim = 64;
  std::size_t projection_dim = 32;
  std::string params;
  std::string scores;
  std::string strategy = "learned";
};

struct BenchFlags {
  BenchConfig config;
};

json to_json(const ScoreBreakdown& s) {
  auto vec = [](const std::vector<double>& v) -> json {
    if (v.empty()) return nullptr;
    return v;
  };
  return {{"qfs", vec(s.qfs)},
          {"qfm", vec(s.qfm)},
          {"ifd", vec(s.ifd)},
          {"aggregate", vec(s.aggregate)}};
}

json to_json(const SelectionResult& s) {
  json j = {{"indices", s.indices},
            {"relaxed_weights", s.relaxed_weights},
            {"mode", mode_name(s.mode)},
            {"tau", s.tau}};
  j["seed"] = s.seed ? json(*s.seed) : json(nullptr);
  return j;
}

json to_json(const BenchMetrics& m) {
  return {{"keyframe_recall", m.keyframe_recall},
          {"answer_accuracy", m.answer_accuracy},
          {"redundancy", m.redundancy},
          {"instances", m.instances}};
}

json to_json(const StepReport& r) {
  return {{"step", r.step},
          {"mean_loss", r.mean_loss},
          {"loss_nodes", r.loss_nodes},
          {"scorer_gradient_norm", r.scorer_gradient_norm},
          {"generator_gradient_norm", r.generator_gradient_norm},
          {"gradient_norms", r.gradient_norms}};
}

json to_json(const NamedReport& r) {
  json params = json::array();
  for (const ParameterCheck& p : r.report.parameters) {
    params.push_back({{"name", p.name},
                      {"coordinates", p.coordinates},
                      {"max_relative_error", p.max_relative_error},
                      {"max_absolute_error", p.max_absolute_error},
                      {"passed", p.passed}});
  }
  return {{"check", r.name},
          {"passed", r.report.passed},
          {"tolerance", r.report.tolerance},
          {"max_relative_error", r.report.max_relative_error},
          {"parameters", params}};
}

// Collects output lines and either prints them or writes them atomically.
class Sink {
 public:
  Sink(std::ostream& out, std::string path) : out_(out), path_(std::move(path)) {}
  void line(const json& j) { line(j.dump()); }
  void line(const std::string& s) {
    if (path_.empty()) {
      out_ << s << '\n';
    } else {
      buffer_ << s << '\n';
    }
  }
  void finish() {
    if (!path_.empty()) write_file_atomic(path_, buffer_.str());
    out_.flush();
  }

 private:
  std::ostream& out_;
  std::string path_;
  std::ostringstream buffer_;
};

ModelDims dims_for(const Manifest& manifest, const CommonFlags& f) {
  return ModelDims{manifest.frame_dim, manifest.question_dim, f.hidden_dim, f.projection_dim};
}

SelectionStrategy parse_strategy(const std::string& s) {
  if (s == "learned") return SelectionStrategy::kLearned;
  if (s == "uniform") return SelectionStrategy::kUniform;
  if (s == "random") return SelectionStrategy::kRandom;
  throw ContractError("unknown strategy '" + s + "' (expected learned, uniform or random)");
}

TrainConfig train_config(const CommonFlags& f) {
  TrainConfig tc;
  tc.sampler.k = f.k;
  tc.sampler.tau = f.tau;
  tc.sampler.stochastic = !f.deterministic;
  tc.learning_rate = f.lr;
  tc.epochs = f.epochs;
  tc.batch_size = f.batch;
  tc.seed = f.seed;
  tc.mechanisms = Mechanisms::without(f.ablate);
  tc.strategy = parse_strategy(f.strategy);
  return tc;
}

Model model_for(const CommonFlags& f, const Manifest& manifest) {
  if (!f.params.empty()) {
    Model model = load_snapshot(f.params);
    if (model.dims.frame_dim != manifest.frame_dim ||
        model.dims.question_dim != manifest.question_dim) {
      throw ShapeError("snapshot dimensions do not match the manifest");
    }
    if (!f.ablate.empty()) model.mechanisms = Mechanisms::without(f.ablate);
    return model;
  }
  return Model::initialize(dims_for(manifest, f), f.seed, Mechanisms::without(f.ablate));
}

std::vector<VideoQAInstance> load_dataset(const CommonFlags& f, Manifest& manifest) {
  const fs::path path = f.manifest;
  manifest = read_manifest(path);
  return load_instances(manifest, path.parent_path());
}

std::uint64_t instance_seed(std::uint64_t seed, std::size_t i) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (i + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

int cmd_gen(const BenchFlags& b, const CommonFlags& f, std::ostream& out) {
  if (f.out.empty()) throw ContractError("gen requires --out");
  BenchConfig cfg = b.config;
  cfg.seed = f.seed;
  const std::vector<VideoQAInstance> data = generate_dataset(cfg);
  const Manifest manifest = write_dataset(data, f.out);
  out << json{{"manifest", (fs::path(f.out) / "manifest.json").generic_string()},
              {"instances", manifest.entries.size()},
              {"dataset_hash", dataset_hash(data)}}
             .dump()
      << '\n';
  return 0;
}

int cmd_train(const CommonFlags& f, std::ostream& out) {
  if (f.out.empty()) throw ContractError("train requires --out");
  Manifest manifest;
  const std::vector<VideoQAInstance> data = load_dataset(f, manifest);
  const TrainConfig tc = train_config(f);
  Model model = Model::initialize(dims_for(manifest, f), f.seed, tc.mechanisms);
  train(data, model, tc, [&out](const StepReport& r) { out << to_json(r).dump() << '\n'; });
  save_snapshot(model, f.out);
  out << json{{"snapshot", fs::path(f.out).generic_string()}}.dump() << '\n';
  return 0;
}

int cmd_select(const CommonFlags& f, std::ostream& out) {
  Manifest manifest;
  const std::vector<VideoQAInstance> data = load_dataset(f, manifest);
  const std::size_t k = f.k_prime.value_or(f.k);

  std::optional<Matrix> given;
  std::optional<Model> model;
  if (!f.scores.empty()) {
    given = read_embeddings(f.scores);
    if (static_cast<std::size_t>(given->rows()) != data.size()) {
      throw ShapeError("--scores has " + std::to_string(given->rows()) + " rows for " +
                       std::to_string(data.size()) + " manifest instances");
    }
  } else {
    model = model_for(f, manifest);
  }

  Sink sink(out, f.out);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const VideoQAInstance& inst = data[i];
    const std::size_t m = inst.frames.frame_count();
    Graph graph;
    ScoreNodes nodes;
    if (given) {
      if (static_cast<std::size_t>(given->cols()) != m) {
        throw ShapeError("--scores row " + std::to_string(i) + " has " +
                         std::to_string(given->cols()) + " entries for " + std::to_string(m) +
                         " frames");
      }
      for (std::size_t j = 0; j < m; ++j) {
        nodes.aggregate.push_back(
            graph.scalar((*given)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
      }
    } else {
      const ScorerNodes scorer = bind_scorer(graph, model->params, model->dims);
      nodes = score_frames(inst.frames, inst.question, scorer, model->mechanisms, graph);
    }
    const ScoreBreakdown breakdown = read_breakdown(graph, nodes);

    SelectionResult selection;
    if (f.deterministic) {
      selection = hard_topk(breakdown.aggregate, k);
    } else {
      SamplerConfig sc;
      sc.k = k;
      sc.tau = f.tau;
      sc.stochastic = true;
      selection = relaxed_topk(graph, nodes.aggregate, sc, instance_seed(f.seed, i));
    }
    json line = {{"id", inst.frames.video_id()},
                 {"selection", to_json(selection)},
                 {"scores", to_json(breakdown)}};
    sink.line(line);
  }
  sink.finish();
  return 0;
}

int cmd_eval(const CommonFlags& f, std::ostream& out) {
  Manifest manifest;
  const std::vector<VideoQAInstance> data = load_dataset(f, manifest);
  const Model model = model_for(f, manifest);
  const std::size_t k = f.k_prime.value_or(f.k);
  const BenchMetrics metrics = evaluate(model, data, k, parse_strategy(f.strategy), f.seed);
  Sink sink(out, f.out);
  json doc = to_json(metrics);
  doc["k_prime"] = k;
  doc["strategy"] = f.strategy;
  sink.line(doc);
  sink.finish();
  return 0;
}

int cmd_ablate(const BenchFlags& b, const CommonFlags& f, const std::string& seeds,
               std::size_t test_videos, bool table, std::ostream& out) {
  AblationSettings settings;
  settings.train = train_config(f);
  settings.test_videos = test_videos;
  settings.k_prime = f.k_prime.value_or(0);
  settings.dims =
      ModelDims{b.config.frame_dim, b.config.question_dim, f.hidden_dim, f.projection_dim};
  settings.seeds.clear();
  std::stringstream ss(seeds);
  for (std::string tok; std::getline(ss, tok, ',');) {
    if (!tok.empty()) settings.seeds.push_back(std::stoull(tok));
  }
  const std::vector<AblationRow> rows = run_ablation(b.config, settings);

  Sink sink(out, f.out);
  for (const AblationRow& row : rows) {
    json per_seed = json::array();
    for (const BenchMetrics& m : row.per_seed) per_seed.push_back(to_json(m));
    sink.line(json{{"variant", row.variant},
                   {"mean", to_json(row.mean)},
                   {"per_seed", per_seed},
                   {"dataset_hashes", row.dataset_hashes}});
  }
  if (table) {
    std::istringstream lines(format_ablation_table(rows));
    for (std::string l; std::getline(lines, l);) sink.line(l);
  }
  sink.finish();
  return 0;
}

int cmd_gradcheck(const CommonFlags& f, double step, double tolerance, std::ostream& out) {
  GradientSuiteConfig cfg;
  cfg.seed = f.seed;
  cfg.tau = f.tau;
  cfg.k = std::min<std::size_t>(f.k, cfg.frames);
  cfg.check.step = step;
  cfg.check.tolerance = tolerance;
  const std::vector<NamedReport> reports = run_gradient_suite(cfg);
  Sink sink(out, f.out);
  bool ok = true;
  for (const NamedReport& r : reports) {
    sink.line(to_json(r));
    ok = ok && r.report.passed;
  }
  sink.line(json{{"passed", ok}});
  sink.finish();
  return ok ? 0 : 1;
}

void print_error(std::ostream& err, const char* kind, const std::string& message) {
  err << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Question-aware differentiable frame selection", "framesel"};
  app.require_subcommand(1);

  CommonFlags f;
  BenchFlags b;
  std::string seeds = "1,2,3";
  std::size_t test_videos = 200;
  bool table = false;
  double step = 1e-6;
  double tolerance = 1e-4;

  auto add_bench = [&b](CLI::App* cmd) {
    cmd->add_option("--videos", b.config.videos, "Number of videos");
    cmd->add_option("--frames", b.config.frames, "Frames per video (M)");
    cmd->add_option("--options", b.config.options, "Answer options (N)");
    cmd->add_option("--planted", b.config.planted, "Planted keyframes per video");
    cmd->add_option("--cluster", b.config.cluster_size, "Redundancy cluster size");
    cmd->add_option("--noise", b.config.noise_sigma, "Perturbation norm");
    cmd->add_option("--scene", b.config.scene_weight, "Norm of per-frame scene content");
    cmd->add_option("--basis-seed", b.config.basis_seed, "Seed of the shared concept basis");
    cmd->add_option("--frame-dim", b.config.frame_dim, "Frame embedding dimension");
    cmd->add_option("--question-dim", b.config.question_dim, "Question embedding dimension");
  };
  auto add_train = [&f](CLI::App* cmd) {
    cmd->add_option("--k", f.k, "Frames selected during training");
    cmd->add_option("--tau", f.tau, "Sampling temperature");
    cmd->add_option("--epochs", f.epochs, "Training epochs");
    cmd->add_option("--lr", f.lr, "Learning rate");
    cmd->add_option("--batch", f.batch, "Batch size");
    cmd->add_option("--ablate", f.ablate, "Mechanisms to disable: comma list of qfs,qfm,ifd");
    cmd->add_flag("--deterministic", f.deterministic, "Disable Gumbel perturbation");
    cmd->add_option("--hidden-dim", f.hidden_dim, "Hidden width d_h");
    cmd->add_option("--projection-dim", f.projection_dim, "QFS projection width d_p");
  };

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset and manifest");
  gen->add_option("--out", f.out, "Output directory")->required();
  gen->add_option("--seed", f.seed, "Dataset seed");
  add_bench(gen);

  auto* train_cmd = app.add_subcommand("train", "Train end to end and write a snapshot");
  train_cmd->add_option("--manifest", f.manifest, "Dataset manifest")->required();
  train_cmd->add_option("--out", f.out, "Snapshot directory")->required();
  train_cmd->add_option("--seed", f.seed, "Initialisation and sampling seed");
  add_train(train_cmd);
  train_cmd->add_option("--strategy", f.strategy, "learned, uniform or random");

  auto* select = app.add_subcommand("select", "Score and select frames per instance");
  select->add_option("--manifest", f.manifest, "Dataset manifest")->required();
  select->add_option("--out", f.out, "Write output here instead of stdout");
  select->add_option("--params", f.params, "Snapshot directory (default: fresh model)");
  select->add_option("--scores", f.scores, "FSEB file of precomputed scores, one row per instance");
  select->add_option("--k", f.k, "Frames to select");
  select->add_option("--k-prime", f.k_prime, "Overrides --k");
  select->add_option("--tau", f.tau, "Sampling temperature");
  select->add_option("--seed", f.seed, "Sampling seed");
  select->add_option("--ablate", f.ablate, "Mechanisms to disable");
  select->add_flag("--deterministic", f.deterministic, "Hard top-k instead of sampling");
  select->add_option("--hidden-dim", f.hidden_dim, "Hidden width for a fresh model");
  select->add_option("--projection-dim", f.projection_dim, "Projection width for a fresh model");

  auto* eval = app.add_subcommand("eval", "Evaluate recall, accuracy and redundancy");
  eval->add_option("--manifest", f.manifest, "Dataset manifest")->required();
  eval->add_option("--out", f.out, "Write output here instead of stdout");
  eval->add_option("--params", f.params, "Snapshot directory (default: fresh model)");
  eval->add_option("--k", f.k, "Frames selected during training");
  eval->add_option("--k-prime", f.k_prime, "Frames selected at inference (default --k)");
  eval->add_option("--seed", f.seed, "Seed for fresh models and random selection");
  eval->add_option("--ablate", f.ablate, "Mechanisms to disable");
  eval->add_option("--strategy", f.strategy, "learned, uniform or random");
  eval->add_option("--hidden-dim", f.hidden_dim, "Hidden width for a fresh model");
  eval->add_option("--projection-dim", f.projection_dim, "Projection width for a fresh model");

  auto* ablate = app.add_subcommand("ablate", "Run the paired-seed ablation table");
  ablate->add_option("--out", f.out, "Write output here instead of stdout");
  ablate->add_option("--seeds", seeds, "Comma-separated seeds");
  ablate->add_option("--test-videos", test_videos, "Held-out videos per seed");
  ablate->add_option("--k-prime", f.k_prime, "Frames selected at inference (default --k)");
  ablate->add_flag("--table", table, "Append a human-readable table");
  add_bench(ablate);
  add_train(ablate);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--out", f.out, "Write output here instead of stdout");
  gradcheck->add_option("--seed", f.seed, "Seed for the random instance and model");
  gradcheck->add_option("--tau", f.tau, "Relaxation temperature");
  gradcheck->add_option("--k", f.k, "Frames selected (capped at 6)");
  gradcheck->add_option("--step", step, "Central-difference step");
  gradcheck->add_option("--tolerance", tolerance, "Relative error tolerance");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    print_error(err, "usage", e.what());
    return 2;
  }

  try {
    if (*gen) return cmd_gen(b, f, out);
    if (*train_cmd) return cmd_train(f, out);
    if (*select) return cmd_select(f, out);
    if (*eval) return cmd_eval(f, out);
    if (*ablate) return cmd_ablate(b, f, seeds, test_videos, table, out);
    if (*gradcheck) return cmd_gradcheck(f, step, tolerance, out);
  } catch (const ShapeError& e) {
    print_error(err, "shape", e.what());
  } catch (const DomainError& e) {
    print_error(err, "domain", e.what());
  } catch (const ContractError& e) {
    print_error(err, "contract", e.what());
  } catch (const FormatError& e) {
    print_error(err, "format", e.what());
  } catch (const std::exception& e) {
    print_error(err, "internal", e.what());
  }
  return 1;
}

}  // namespace framesel
