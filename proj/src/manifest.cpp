#include "framesel/manifest.hpp"

#include <fstream>
#include <iterator>
#include <system_error>

#include "framesel/errors.hpp"
#include "framesel/fseb.hpp"
#include "json.hpp"

namespace framesel {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kManifestFormat = "framesel-manifest";
constexpr const char* kSnapshotFormat = "framesel-snapshot";

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open for reading");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  }
}

template <typename T>
T field(const json& j, const char* key, const char* what) {
  if (!j.contains(key)) throw FormatError(std::string(what) + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": bad field '" + key + "': " + e.what());
  }
}

Vector single_row(const Matrix& m, std::size_t dim, const fs::path& path) {
  if (m.rows() != 1 || static_cast<std::size_t>(m.cols()) != dim) {
    throw ShapeError(path.string() + ": expected 1x" + std::to_string(dim) + ", got " +
                     std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  return m.row(0).transpose();
}

void replace_directory(const fs::path& staged, const fs::path& target) {
  std::error_code ec;
  if (fs::exists(target)) fs::remove_all(target, ec);
  if (ec) throw FormatError(target.string() + ": cannot replace: " + ec.message());
  fs::rename(staged, target, ec);
  if (ec) throw FormatError(target.string() + ": rename failed: " + ec.message());
}

}  // namespace

Manifest parse_manifest(const std::string& text) {
  const json doc = parse_json(text, "manifest");
  if (field<std::string>(doc, "format", "manifest") != kManifestFormat) {
    throw FormatError("manifest: unexpected format tag");
  }
  if (field<int>(doc, "version", "manifest") != 1) {
    throw FormatError("manifest: unsupported version");
  }
  Manifest m;
  m.frame_dim = field<std::size_t>(doc, "frame_dim", "manifest");
  m.question_dim = field<std::size_t>(doc, "question_dim", "manifest");
  for (const json& item : field<json>(doc, "instances", "manifest")) {
    ManifestEntry e;
    e.id = field<std::string>(item, "id", "manifest instance");
    e.video = field<std::string>(item, "video", "manifest instance");
    e.question = field<std::string>(item, "question", "manifest instance");
    for (const auto& opt : field<std::vector<std::string>>(item, "options", "manifest instance")) {
      e.options.emplace_back(opt);
    }
    e.answer_index = field<std::size_t>(item, "answer_index", "manifest instance");
    if (item.contains("planted_keyframes") && !item.at("planted_keyframes").is_null()) {
      e.planted_keyframes =
          field<std::vector<std::size_t>>(item, "planted_keyframes", "manifest instance");
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

std::string serialize_manifest(const Manifest& manifest) {
  json doc;
  doc["format"] = kManifestFormat;
  doc["version"] = 1;
  doc["frame_dim"] = manifest.frame_dim;
  doc["question_dim"] = manifest.question_dim;
  doc["instances"] = json::array();
  for (const ManifestEntry& e : manifest.entries) {
    json item;
    item["id"] = e.id;
    item["video"] = e.video.generic_string();
    item["question"] = e.question.generic_string();
    item["options"] = json::array();
    for (const auto& o : e.options) item["options"].push_back(o.generic_string());
    item["answer_index"] = e.answer_index;
    if (e.planted_keyframes) item["planted_keyframes"] = *e.planted_keyframes;
    doc["instances"].push_back(std::move(item));
  }
  return doc.dump(2) + "\n";
}

Manifest read_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw FormatError(path.string() + ": manifest not found");
  return parse_manifest(read_text(path));
}

std::vector<VideoQAInstance> load_instances(const Manifest& manifest, const fs::path& base_dir) {
  std::vector<VideoQAInstance> out;
  out.reserve(manifest.entries.size());
  for (const ManifestEntry& e : manifest.entries) {
    const fs::path video_path = base_dir / e.video;
    Matrix frames = read_embeddings(video_path);
    if (static_cast<std::size_t>(frames.cols()) != manifest.frame_dim) {
      throw ShapeError(video_path.string() + ": frame dimension " + std::to_string(frames.cols()) +
                       " does not match manifest frame_dim " + std::to_string(manifest.frame_dim));
    }
    const fs::path question_path = base_dir / e.question;
    Vector question =
        single_row(read_embeddings(question_path), manifest.question_dim, question_path);
    std::vector<Vector> options;
    for (const fs::path& o : e.options) {
      options.push_back(
          single_row(read_embeddings(base_dir / o), manifest.question_dim, base_dir / o));
    }
    VideoQAInstance inst{FrameSet(std::move(frames), e.id),
                         QuestionEmbedding(std::move(question), e.id), std::move(options),
                         e.answer_index, e.planted_keyframes};
    inst.validate();
    out.push_back(std::move(inst));
  }
  return out;
}

Manifest write_dataset(std::span<const VideoQAInstance> dataset, const fs::path& out_dir) {
  fs::create_directories(out_dir / "videos");
  fs::create_directories(out_dir / "questions");
  fs::create_directories(out_dir / "options");

  Manifest manifest;
  if (!dataset.empty()) {
    manifest.frame_dim = dataset.front().frames.dim();
    manifest.question_dim = dataset.front().question.dim();
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const VideoQAInstance& inst = dataset[i];
    const std::string stem = "v" + std::to_string(i);
    ManifestEntry e;
    e.id = inst.frames.video_id().empty() ? stem : inst.frames.video_id();
    e.video = fs::path("videos") / (stem + ".fseb");
    e.question = fs::path("questions") / (stem + ".fseb");
    write_embeddings(inst.frames.embeddings(), out_dir / e.video);
    write_embeddings(Matrix(inst.question.embedding().transpose()), out_dir / e.question);
    for (std::size_t n = 0; n < inst.options.size(); ++n) {
      fs::path p = fs::path("options") / (stem + "_" + std::to_string(n) + ".fseb");
      write_embeddings(Matrix(inst.options[n].transpose()), out_dir / p);
      e.options.push_back(std::move(p));
    }
    e.answer_index = inst.answer_index;
    e.planted_keyframes = inst.planted_keyframes;
    manifest.entries.push_back(std::move(e));
  }
  write_file_atomic(out_dir / "manifest.json", serialize_manifest(manifest));
  return manifest;
}

void save_snapshot(const Model& model, const fs::path& dir) {
  fs::path staged = dir;
  staged += ".tmp";
  std::error_code ec;
  fs::remove_all(staged, ec);
  fs::create_directories(staged);

  json index;
  index["format"] = kSnapshotFormat;
  index["version"] = 1;
  index["dims"] = {{"frame_dim", model.dims.frame_dim},
                   {"question_dim", model.dims.question_dim},
                   {"hidden_dim", model.dims.hidden_dim},
                   {"projection_dim", model.dims.projection_dim}};
  index["disabled_mechanisms"] = model.mechanisms.disabled_list();
  index["tensors"] = json::array();
  for (const std::string& name : model.params.names()) {
    const Matrix& v = model.params.value(name);
    const std::string file = name + ".fseb";
    write_embeddings(v, staged / file);
    index["tensors"].push_back(
        {{"name", name}, {"file", file}, {"rows", v.rows()}, {"cols", v.cols()}});
  }
  write_file_atomic(staged / "index.json", index.dump(2) + "\n");
  replace_directory(staged, dir);
}

Model load_snapshot(const fs::path& dir) {
  const fs::path index_path = dir / "index.json";
  if (!fs::exists(index_path)) throw FormatError(dir.string() + ": no snapshot index.json");
  const json index = parse_json(read_text(index_path), "snapshot index");
  if (field<std::string>(index, "format", "snapshot") != kSnapshotFormat) {
    throw FormatError("snapshot: unexpected format tag");
  }
  const json dims = field<json>(index, "dims", "snapshot");
  Model model;
  model.dims.frame_dim = field<std::size_t>(dims, "frame_dim", "snapshot dims");
  model.dims.question_dim = field<std::size_t>(dims, "question_dim", "snapshot dims");
  model.dims.hidden_dim = field<std::size_t>(dims, "hidden_dim", "snapshot dims");
  model.dims.projection_dim = field<std::size_t>(dims, "projection_dim", "snapshot dims");
  model.mechanisms =
      Mechanisms::without(field<std::string>(index, "disabled_mechanisms", "snapshot"));
  for (const json& t : field<json>(index, "tensors", "snapshot")) {
    const auto name = field<std::string>(t, "name", "snapshot tensor");
    Matrix value = read_embeddings(dir / field<std::string>(t, "file", "snapshot tensor"));
    if (value.rows() != field<Eigen::Index>(t, "rows", "snapshot tensor") ||
        value.cols() != field<Eigen::Index>(t, "cols", "snapshot tensor")) {
      throw ShapeError("snapshot tensor '" + name + "' does not match its declared shape");
    }
    model.params.add(name, std::move(value));
  }
  return model;
}

}  // namespace framesel
