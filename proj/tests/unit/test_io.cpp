#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "framesel/bench.hpp"
#include "framesel/errors.hpp"
#include "framesel/fseb.hpp"
#include "framesel/manifest.hpp"

using namespace framesel;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("framesel_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<std::byte> bytes(std::initializer_list<unsigned> v) {
  std::vector<std::byte> out;
  for (unsigned b : v) out.push_back(static_cast<std::byte>(b));
  return out;
}

}  // namespace

TEST_CASE("a 1x1 matrix encodes to exactly 20 bytes") {
  const auto b = encode_fseb(Matrix::Constant(1, 1, 1.0));
  CHECK(b ==
        bytes({'F', 'S', 'E', 'B', 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 0x00, 0x00, 0x80, 0x3F}));
  CHECK(decode_fseb(b)(0, 0) == 1.0);
}

TEST_CASE("round trip is exact at 32-bit precision") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 1);
  Matrix m(32, 64);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  const Matrix back = decode_fseb(encode_fseb(m));
  CHECK(back.cwiseEqual(m.cast<float>().cast<double>()).all());

  TempDir dir("roundtrip");
  write_embeddings(m, dir.path / "m.fseb");
  CHECK(read_embeddings(dir.path / "m.fseb").cwiseEqual(back).all());
  CHECK(fs::file_size(dir.path / "m.fseb") == 16 + 4 * 32 * 64);
  CHECK_FALSE(fs::exists(dir.path / "m.fseb.tmp"));
}

TEST_CASE("decode rejects malformed input") {
  auto header = bytes({'F', 'S', 'E', 'B', 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0});
  auto short_payload = header;
  short_payload.resize(16 + 12);
  CHECK_THROWS_WITH_AS(decode_fseb(short_payload),
                       doctest::Contains("size mismatch, expected 32 bytes, got 28"), FormatError);

  auto wrong_magic = header;
  wrong_magic[0] = std::byte{'X'};
  wrong_magic.resize(32);
  CHECK_THROWS_WITH_AS(decode_fseb(wrong_magic), doctest::Contains("not an FSEB file"),
                       FormatError);

  auto version = header;
  version[4] = std::byte{2};
  version.resize(32);
  CHECK_THROWS_WITH_AS(decode_fseb(version), doctest::Contains("unsupported FSEB version"),
                       FormatError);

  auto nan = encode_fseb(Matrix::Ones(2, 2));
  const float q = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan.data() + 16 + 8, &q, 4);
  CHECK_THROWS_WITH_AS(decode_fseb(nan), doctest::Contains("non-finite value in row 1"),
                       FormatError);

  CHECK_THROWS_AS(decode_fseb(bytes({'F', 'S'})), FormatError);
}

TEST_CASE("manifest round trip") {
  Manifest m;
  m.frame_dim = 4;
  m.question_dim = 3;
  ManifestEntry e;
  e.id = "a";
  e.video = "videos/a.fseb";
  e.question = "questions/a.fseb";
  e.options = {"options/a_0.fseb", "options/a_1.fseb"};
  e.answer_index = 1;
  e.planted_keyframes = std::vector<std::size_t>{0, 2};
  m.entries.push_back(e);
  e.id = "b";
  e.planted_keyframes.reset();
  m.entries.push_back(e);

  const Manifest back = parse_manifest(serialize_manifest(m));
  REQUIRE(back.entries.size() == 2);
  CHECK(back.frame_dim == 4);
  CHECK(back.entries[0].options.size() == 2);
  CHECK(back.entries[0].planted_keyframes == std::vector<std::size_t>{0, 2});
  CHECK_FALSE(back.entries[1].planted_keyframes.has_value());
  CHECK(serialize_manifest(back) == serialize_manifest(m));

  CHECK_THROWS_AS(parse_manifest("{"), FormatError);
  CHECK_THROWS_AS(parse_manifest(R"({"format":"framesel-manifest","version":1})"), FormatError);
  CHECK_THROWS_WITH_AS(read_manifest("/nonexistent/manifest.json"),
                       doctest::Contains("manifest not found"), FormatError);
}

TEST_CASE("written datasets load back identically") {
  TempDir dir("dataset");
  BenchConfig c;
  c.videos = 5;
  const auto data = generate_dataset(c);
  write_dataset(data, dir.path);
  const Manifest m = read_manifest(dir.path / "manifest.json");
  const auto loaded = load_instances(m, dir.path);
  REQUIRE(loaded.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(loaded[i]
              .frames.embeddings()
              .cwiseEqual(data[i].frames.embeddings().cast<float>().cast<double>())
              .all());
    CHECK(loaded[i].answer_index == data[i].answer_index);
    CHECK(loaded[i].planted_keyframes == data[i].planted_keyframes);
  }

  Manifest wrong = m;
  wrong.frame_dim = 65;
  CHECK_THROWS_AS(load_instances(wrong, dir.path), ShapeError);
}

TEST_CASE("snapshots preserve parameters and mechanisms") {
  TempDir dir("snapshot");
  const Model model = Model::initialize(ModelDims{6, 5, 4, 3}, 2, Mechanisms::without("ifd"));
  save_snapshot(model, dir.path / "snap");
  save_snapshot(model, dir.path / "snap");  // overwriting is allowed
  const Model back = load_snapshot(dir.path / "snap");
  CHECK(back.mechanisms == model.mechanisms);
  CHECK(back.dims.hidden_dim == 4);
  CHECK(back.params.names() == model.params.names());
  for (const std::string& name : model.params.names()) {
    CHECK(back.params.value(name)
              .cwiseEqual(model.params.value(name).cast<float>().cast<double>())
              .all());
  }
  CHECK_FALSE(fs::exists(dir.path / "snap.tmp"));
  CHECK_THROWS_AS(load_snapshot(dir.path / "missing"), FormatError);
}
