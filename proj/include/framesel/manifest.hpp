#pragma once

// Dataset manifests and parameter snapshots.
//
// Manifest (JSON):
//   {"format": "framesel-manifest", "version": 1, "frame_dim": 64, "question_dim": 32,
//    "instances": [{"id": "v0", "video": "videos/v0.fseb", "question": "questions/v0.fseb",
//                   "options": ["options/v0_0.fseb", ...], "answer_index": 2,
//                   "planted_keyframes": [3, 17, 20]}]}
// Paths are relative to the manifest's directory. Videos are M x d_v FSEB
// files; questions and options are 1 x d_t.
//
// Snapshot: a directory with index.json plus one FSEB file per tensor.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "framesel/pipeline.hpp"

namespace framesel {

struct ManifestEntry {
  std::string id;
  std::filesystem::path video;
  std::filesystem::path question;
  std::vector<std::filesystem::path> options;
  std::size_t answer_index = 0;
  std::optional<std::vector<std::size_t>> planted_keyframes;
};

struct Manifest {
  std::size_t frame_dim = 0;
  std::size_t question_dim = 0;
  std::vector<ManifestEntry> entries;
};

Manifest parse_manifest(const std::string& text);
std::string serialize_manifest(const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

// Loads every referenced file and checks it against the declared dimensions.
std::vector<VideoQAInstance> load_instances(const Manifest& manifest,
                                            const std::filesystem::path& base_dir);

// Writes FSEB files for every instance under out_dir plus out_dir/manifest.json.
Manifest write_dataset(std::span<const VideoQAInstance> dataset,
                       const std::filesystem::path& out_dir);

void save_snapshot(const Model& model, const std::filesystem::path& dir);
Model load_snapshot(const std::filesystem::path& dir);

}  // namespace framesel
