#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "framesel/errors.hpp"
#include "framesel/sampler.hpp"
#include "framesel/scoring.hpp"
#include "oracle.hpp"

using namespace framesel;
namespace sp = framesel::scorer_param;

namespace {

Matrix gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n(0, 1);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Vector vec2(double a, double b) { return (Vector(2) << a, b).finished(); }

// d_v = d_t = d_h = d_p = 2 with identity affine maps and zero biases.
ParameterStore identity_scorer() {
  ParameterStore s;
  init_scorer_params(s, ModelDims{2, 2, 2, 2}, 0);
  for (auto name :
       {sp::kExtractorWeight, sp::kTextWeight, sp::kFrameProjection, sp::kQuestionProjection}) {
    s.mutable_value(name) = Matrix::Identity(2, 2);
  }
  return s;
}

std::vector<double> values(const Graph& g, const std::vector<NodeId>& nodes) {
  std::vector<double> out;
  for (NodeId n : nodes) out.push_back(g.scalar_value(n));
  return out;
}

std::vector<double> qfs_values(const ParameterStore& s, const ModelDims& d, const FrameSet& f,
                               const QuestionEmbedding& q) {
  Graph g;
  return values(g, qfs_scores(f, q, bind_scorer(g, s, d), g));
}

std::vector<double> qfm_values(const ParameterStore& s, const ModelDims& d, const FrameSet& f,
                               const QuestionEmbedding& q) {
  Graph g;
  return values(g, qfm_scores(f, q, bind_scorer(g, s, d), g));
}

std::vector<double> ifd_values(const FrameSet& f) {
  Graph g;
  return values(g, ifd_scores(f, g));
}

}  // namespace

TEST_CASE("QFS of identical projections is one, orthogonal is zero") {
  const ParameterStore s = identity_scorer();
  const ModelDims d{2, 2, 2, 2};
  Matrix f(2, 2);
  f << 0.7, 0.0, 0.0, 0.4;
  const auto scores = qfs_values(s, d, FrameSet(f), QuestionEmbedding(vec2(0.3, 0.0)));
  CHECK(scores[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(scores[1]) < 1e-15);
}

TEST_CASE("QFS hand case matches scalar oracle") {
  const ParameterStore s = identity_scorer();
  const ModelDims d{2, 2, 2, 2};
  Matrix f(1, 2);
  f << 0.5, 0.5;
  const double got = qfs_values(s, d, FrameSet(f), QuestionEmbedding(vec2(0.5, -0.5)))[0];
  const oracle::Vec u = oracle::tanh({0.5L, 0.5L});
  const oracle::Vec v = oracle::tanh({0.5L, -0.5L});
  CHECK(std::abs(got - static_cast<double>(oracle::cosine(u, v))) < 1e-15);
}

TEST_CASE("QFM with a zeroed output layer scores one half") {
  ParameterStore s;
  const ModelDims d{4, 3, 5, 2};
  init_scorer_params(s, d, 1);
  s.mutable_value(sp::kFusionOutputWeight).setZero();
  s.mutable_value(sp::kFusionOutputBias).setZero();
  std::mt19937_64 rng(1);
  for (double x :
       qfm_values(s, d, FrameSet(gaussian(rng, 6, 4)), QuestionEmbedding(gaussian(rng, 3, 1)))) {
    CHECK(x == 0.5);
  }
}

TEST_CASE("QFM rises with the output bias") {
  ParameterStore s;
  const ModelDims d{4, 3, 5, 2};
  init_scorer_params(s, d, 2);
  std::mt19937_64 rng(2);
  const FrameSet f(gaussian(rng, 5, 4));
  const QuestionEmbedding q(gaussian(rng, 3, 1));
  const auto before = qfm_values(s, d, f, q);
  s.mutable_value(sp::kFusionOutputBias)(0, 0) += 0.25;
  const auto after = qfm_values(s, d, f, q);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i] > before[i]);
}

TEST_CASE("QFM and QFS with seed-7 parameters match a straight-line oracle") {
  ParameterStore s;
  const ModelDims d{5, 4, 6, 3};
  init_scorer_params(s, d, 7);
  std::mt19937_64 rng(7);
  const Matrix frame = gaussian(rng, 1, 5);
  const Vector question = gaussian(rng, 4, 1);
  const FrameSet f(frame);
  const QuestionEmbedding q(question);

  using namespace oracle;
  auto P = [&](std::string_view n) { return from(s.value(n)); };
  auto C = [&](std::string_view n) { return column(s.value(n)); };
  const Vec u = tanh(add(matvec(P(sp::kExtractorWeight), column(Matrix(frame.transpose()))),
                         C(sp::kExtractorBias)));
  const Vec v = tanh(add(matvec(P(sp::kTextWeight), column(question)), C(sp::kTextBias)));
  Vec fused = u;
  fused.insert(fused.end(), v.begin(), v.end());
  for (std::size_t i = 0; i < u.size(); ++i) fused.push_back(u[i] * v[i]);
  const Vec hidden = tanh(add(matvec(P(sp::kFusionHiddenWeight), fused), C(sp::kFusionHiddenBias)));
  const Real logit = matvec(P(sp::kFusionOutputWeight), hidden)[0] + C(sp::kFusionOutputBias)[0];
  const Real qfm = 1.0L / (1.0L + std::exp(-logit));
  const Real qfs =
      cosine(matvec(P(sp::kFrameProjection), u), matvec(P(sp::kQuestionProjection), v));

  CHECK(std::abs(qfm_values(s, d, f, q)[0] - static_cast<double>(qfm)) < 1e-14);
  CHECK(std::abs(qfs_values(s, d, f, q)[0] - static_cast<double>(qfs)) < 1e-14);
}

TEST_CASE("IFD examples") {
  Matrix same(2, 3);
  same << 1, 2, 3, 1, 2, 3;
  CHECK(ifd_values(FrameSet(same)) == std::vector<double>{0.0, 0.0});

  Matrix hand(3, 2);
  hand << 1, 0, 0, 1, 1, 0;
  CHECK(ifd_values(FrameSet(hand)) == std::vector<double>{0.5, 1.0, 0.5});

  CHECK(ifd_values(FrameSet(Matrix::Ones(1, 4))) == std::vector<double>{0.0});
}

TEST_CASE("IFD is invariant to scaling a row") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    const Matrix e = gaussian(rng, 6, 4);
    Matrix scaled = e;
    scaled.row(t % 6) *= 3.7;
    const auto a = ifd_values(FrameSet(e));
    const auto b = ifd_values(FrameSet(scaled));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-9);
  }
}

TEST_CASE("IFD penalises an appended duplicate") {
  std::mt19937_64 rng(12);
  const Matrix e = gaussian(rng, 5, 3);
  const auto base = ifd_values(FrameSet(e));
  for (Eigen::Index i = 0; i < 5; ++i) {
    REQUIRE(base[static_cast<std::size_t>(i)] > 0);
    Matrix dup(6, 3);
    dup.topRows(5) = e;
    dup.row(5) = e.row(i);
    CHECK(ifd_values(FrameSet(dup))[static_cast<std::size_t>(i)] <
          base[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("pairwise similarity examples") {
  Matrix f(3, 2);
  f << 1, 1, 1, 0, 0, 1;
  const Matrix s = pairwise_similarity(FrameSet(f));
  CHECK(s(0, 0) == 1.0);
  CHECK(s(0, 1) == doctest::Approx(0.7071067811865475).epsilon(1e-15));
  CHECK(s(1, 2) == 0.0);
  CHECK(s.isApprox(s.transpose()));
}

TEST_CASE("aggregate sums the enabled components") {
  Graph g;
  const NodeId a[] = {g.scalar(0.2)}, b[] = {g.scalar(0.5)}, c[] = {g.scalar(1.0)};
  CHECK(g.scalar_value(aggregate_scores(g, a, b, c).aggregate[0]) == doctest::Approx(1.7));
  const ScoreNodes no_qfs = aggregate_scores(g, {}, b, c);
  CHECK(no_qfs.qfs.empty());
  CHECK(g.scalar_value(no_qfs.aggregate[0]) == 1.5);
  CHECK_THROWS_WITH_AS(aggregate_scores(g, {}, {}, {}), "empty scorer", ContractError);
  const NodeId two[] = {g.scalar(0), g.scalar(1)};
  CHECK_THROWS_AS(aggregate_scores(g, two, b, {}), ShapeError);
}

TEST_CASE("score ranges and permutation equivariance") {
  const ModelDims d{8, 6, 7, 5};
  ParameterStore s;
  init_scorer_params(s, d, 21);
  std::mt19937_64 rng(21);
  for (int t = 0; t < 10; ++t) {
    const Matrix e = gaussian(rng, 7, 8) * (t + 1);
    const QuestionEmbedding q(gaussian(rng, 6, 1));
    Graph g;
    const ScoreBreakdown b =
        read_breakdown(g, score_frames(FrameSet(e), q, bind_scorer(g, s, d), Mechanisms{}, g));
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(b.qfs[i] >= -1.0);
      CHECK(b.qfs[i] <= 1.0);
      CHECK(b.qfm[i] > 0.0);
      CHECK(b.qfm[i] < 1.0);
      CHECK(b.ifd[i] >= 0.0);
      CHECK(b.ifd[i] <= 2.0);
      CHECK(b.aggregate[i] > -1.0);
      CHECK(b.aggregate[i] < 3.0);
    }

    std::vector<Eigen::Index> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix permuted(7, 8);
    for (Eigen::Index i = 0; i < 7; ++i) permuted.row(i) = e.row(perm[static_cast<std::size_t>(i)]);
    Graph h;
    const ScoreBreakdown p = read_breakdown(
        h, score_frames(FrameSet(permuted), q, bind_scorer(h, s, d), Mechanisms{}, h));
    for (std::size_t i = 0; i < 7; ++i) {
      const auto src = static_cast<std::size_t>(perm[i]);
      CHECK(p.aggregate[i] == doctest::Approx(b.aggregate[src]).epsilon(1e-12));
    }
  }
}

TEST_CASE("IFD ignores the question") {
  const ModelDims d{4, 3, 4, 2};
  ParameterStore s;
  init_scorer_params(s, d, 3);
  std::mt19937_64 rng(3);
  const FrameSet f(gaussian(rng, 5, 4));
  auto ifd_for = [&](const Vector& q) {
    Graph g;
    return read_breakdown(
               g, score_frames(f, QuestionEmbedding(q), bind_scorer(g, s, d), Mechanisms{}, g))
        .ifd;
  };
  CHECK(ifd_for(gaussian(rng, 3, 1)) == ifd_for(gaussian(rng, 3, 1)));
}

TEST_CASE("ablation masks drop components") {
  const ModelDims d{4, 3, 4, 2};
  ParameterStore s;
  init_scorer_params(s, d, 4);
  std::mt19937_64 rng(4);
  const FrameSet f(gaussian(rng, 5, 4));
  const QuestionEmbedding q(gaussian(rng, 3, 1));
  Graph g;
  const ScoreBreakdown b =
      read_breakdown(g, score_frames(f, q, bind_scorer(g, s, d), Mechanisms::without("qfs"), g));
  CHECK(b.qfs.empty());
  for (std::size_t i = 0; i < 5; ++i) CHECK(b.aggregate[i] == doctest::Approx(b.qfm[i] + b.ifd[i]));
  CHECK_THROWS_AS(score_frames(f, q, bind_scorer(g, s, d), Mechanisms::without("qfs,qfm,ifd"), g),
                  ContractError);
  CHECK_THROWS_AS(Mechanisms::without("qfx"), ContractError);
  CHECK(Mechanisms::without("ifd,qfm").disabled_list() == "qfm,ifd");
}

TEST_CASE("load-time guards") {
  CHECK_THROWS_AS(FrameSet(Matrix::Zero(2, 3)), ContractError);
  Matrix bad = Matrix::Ones(2, 2);
  bad(1, 1) = std::nan("");
  CHECK_THROWS_AS(FrameSet{bad}, ContractError);

  ParameterStore s;
  init_scorer_params(s, ModelDims{4, 3, 4, 2}, 0);
  Graph g;
  CHECK_THROWS_AS(bind_scorer(g, s, ModelDims{5, 3, 4, 2}), ShapeError);
  const ScorerNodes n = bind_scorer(g, s, ModelDims{4, 3, 4, 2});
  CHECK_THROWS_AS(
      qfs_scores(FrameSet(Matrix::Ones(2, 5)), QuestionEmbedding(Vector::Ones(3)), n, g),
      ShapeError);
}
