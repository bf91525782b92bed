#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "timecap/metrics.hpp"
#include "timecap/similarity.hpp"

#include "testutil.hpp"

#include <cmath>

using namespace timecap;
using namespace timecap::eval;

namespace {

// O(n^2) pair-counting oracle, ties worth 1/2.
double auroc_pair_oracle(const std::vector<double>& scores, const std::vector<int>& positive) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (positive[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<double>(pairs);
}

// Exponential recursive DTW definition, usable for lengths <= ~8.
double dtw_recursive(const Vector& a, const Vector& b, Eigen::Index i, Eigen::Index j) {
  const double cost = std::abs(a(i) - b(j));
  if (i == 0 && j == 0) return cost;
  double best = std::numeric_limits<double>::infinity();
  if (i > 0) best = std::min(best, dtw_recursive(a, b, i - 1, j));
  if (j > 0) best = std::min(best, dtw_recursive(a, b, i, j - 1));
  if (i > 0 && j > 0) best = std::min(best, dtw_recursive(a, b, i - 1, j - 1));
  return cost + best;
}

const LabelSchema kBinary({"pos", "neg"});

}  // namespace

TEST_CASE("macro F1 trivial and hand-confusion cases") {
  SUBCASE("all correct") {
    std::vector<ClassLabel> y = {{0}, {1}, {0}, {1}};
    const MetricReport r = f1_scores(y, y, kBinary);
    CHECK(r.macro_f1 == doctest::Approx(1.0));
    CHECK(r.confusion(0, 0) == 2);
    CHECK(r.confusion.sum() == 4);
  }
  SUBCASE("all predicted positive, half actually positive") {
    std::vector<ClassLabel> predicted = {{0}, {0}, {0}, {0}};
    std::vector<ClassLabel> actual = {{0}, {0}, {1}, {1}};
    const MetricReport r = f1_scores(predicted, actual, kBinary);
    CHECK(r.f1(0) == doctest::Approx(2.0 / 3.0));
    CHECK(r.f1(1) == doctest::Approx(0.0));
    CHECK(r.macro_f1 == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("single class present and predicted") {
    std::vector<ClassLabel> y = {{0}, {0}, {0}};
    const MetricReport r = f1_scores(y, y, kBinary);
    CHECK(r.f1(0) == doctest::Approx(1.0));
    CHECK(r.f1(1) == doctest::Approx(0.0));  // absent class contributes 0 by convention
  }
  SUBCASE("length mismatch") {
    std::vector<ClassLabel> predicted = {{0}};
    std::vector<ClassLabel> actual = {{0}, {1}};
    CHECK_THROWS_AS(f1_scores(predicted, actual, kBinary), Error);
  }
}

TEST_CASE("macro F1 invariant under class relabeling") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 30;
    std::vector<ClassLabel> predicted, actual;
    for (int i = 0; i < n; ++i) {
      predicted.push_back({static_cast<int>(rng.next_below(3))});
      actual.push_back({static_cast<int>(rng.next_below(3))});
    }
    const LabelSchema s3({"a", "b", "c"});
    const double before = f1_scores(predicted, actual, s3).macro_f1;

    // permutation (0 1 2) -> (2 0 1) applied consistently
    auto perm = [](ClassLabel l) { return ClassLabel{(l.index + 1) % 3}; };
    std::vector<ClassLabel> predicted_p, actual_p;
    for (int i = 0; i < n; ++i) {
      predicted_p.push_back(perm(predicted[static_cast<std::size_t>(i)]));
      actual_p.push_back(perm(actual[static_cast<std::size_t>(i)]));
    }
    const double after = f1_scores(predicted_p, actual_p, s3).macro_f1;
    CHECK(before == doctest::Approx(after).epsilon(1e-12));
  }
}

TEST_CASE("auroc trivial cases") {
  CHECK(auroc_binary({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == doctest::Approx(1.0));
  CHECK(auroc_binary({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == 0.5);  // all ties, exact
  CHECK_THROWS_AS(auroc_binary({0.1, 0.2}, {1, 1}), Error);
}

TEST_CASE("auroc spec example against pair oracle") {
  const std::vector<double> scores = {0.1, 0.4, 0.35, 0.8};
  const std::vector<int> labels = {0, 0, 1, 1};
  const double expected = auroc_pair_oracle(scores, labels);
  CHECK(expected == doctest::Approx(0.75));
  CHECK(auroc_binary(scores, labels) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("auroc equals pair-counting oracle on random score sets") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 5 + static_cast<int>(rng.next_below(40));
    std::vector<double> scores;
    std::vector<int> positive;
    int n_pos = 0;
    for (int i = 0; i < n; ++i) {
      // coarse grid so ties happen often
      scores.push_back(static_cast<double>(rng.next_below(8)) / 8.0);
      positive.push_back(rng.next_below(2) == 0 ? 1 : 0);
      n_pos += positive.back();
    }
    if (n_pos == 0) positive[0] = 1;
    if (n_pos == n) positive[0] = 0;
    const double expected = auroc_pair_oracle(scores, positive);
    CHECK(std::abs(auroc_binary(scores, positive) - expected) < 1e-12);
  }
}

TEST_CASE("auroc invariant under strictly monotone transforms") {
  Rng rng(31);
  std::vector<double> scores;
  std::vector<int> positive;
  for (int i = 0; i < 40; ++i) {
    scores.push_back(rng.next_double());
    positive.push_back(rng.next_below(2) == 0 ? 1 : 0);
  }
  positive[0] = 1;
  positive[1] = 0;
  const double base = auroc_binary(scores, positive);

  std::vector<double> transformed;
  for (double s : scores) transformed.push_back(std::exp(3.0 * s) + 7.0);
  CHECK(auroc_binary(transformed, positive) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("one-vs-rest macro auroc skips degenerate classes") {
  std::vector<Vector> scores;
  std::vector<ClassLabel> actual;
  Rng rng(13);
  for (int i = 0; i < 20; ++i) {
    Vector p(3);
    p << rng.next_double(), rng.next_double(), 0.0;
    p /= p.sum();
    scores.push_back(p);
    actual.push_back({static_cast<int>(rng.next_below(2))});  // class 2 never occurs
  }
  int skipped = 0;
  const double value = auroc(scores, actual, 3, &skipped);
  CHECK(skipped == 1);
  CHECK(value >= 0.0);
  CHECK(value <= 1.0);

  // all degenerate -> error
  std::vector<ClassLabel> constant(20, ClassLabel{0});
  std::vector<Vector> binary_scores;
  for (int i = 0; i < 20; ++i) {
    Vector p(2);
    p << 0.5, 0.5;
    binary_scores.push_back(p);
  }
  CHECK_THROWS_AS(auroc(binary_scores, constant, 2), Error);
}

TEST_CASE("dtw trivial cases") {
  Vector a(3), b(3);
  a << 1.0, 2.0, 3.0;
  b << 1.0, 2.0, 3.0;
  CHECK(dtw_distance(a, b) == 0.0);

  Vector single_a(1), single_b(1);
  single_a << 0.0;
  single_b << 3.0;
  CHECK(dtw_distance(single_a, single_b) == 3.0);

  CHECK_THROWS_AS(dtw_distance(Vector(), b), Error);
}

TEST_CASE("dtw equals naive recursive definition (exact)") {
  Rng rng(41);
  for (int trial = 0; trial < 60; ++trial) {
    const int m = 1 + static_cast<int>(rng.next_below(8));
    const int n = 1 + static_cast<int>(rng.next_below(8));
    Vector a(m), b(n);
    for (int i = 0; i < m; ++i) a(i) = rng.next_normal();
    for (int j = 0; j < n; ++j) b(j) = rng.next_normal();
    CHECK(dtw_distance(a, b) == dtw_recursive(a, b, m - 1, n - 1));
  }
}

TEST_CASE("dtw symmetry and self-distance") {
  Rng rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 2 + static_cast<int>(rng.next_below(7));
    Vector a(m), b(m);
    for (int i = 0; i < m; ++i) {
      a(i) = rng.next_normal();
      b(i) = rng.next_normal();
    }
    CHECK(dtw_distance(a, a) == 0.0);
    CHECK(dtw_distance(a, b) == dtw_distance(b, a));
    CHECK(dtw_distance(a, b) >= 0.0);
  }
}

TEST_CASE("tfidf cosine trivial cases") {
  const Matrix identical = tfidf_cosine({"the rain falls", "the rain falls"});
  CHECK(identical(0, 1) == doctest::Approx(1.0));

  const Matrix disjoint = tfidf_cosine({"alpha beta", "gamma delta"});
  CHECK(disjoint(0, 1) == doctest::Approx(0.0));
  CHECK(disjoint(0, 0) == doctest::Approx(1.0));

  CHECK_THROWS_AS(tfidf_cosine({"", "  "}), Error);
}

TEST_CASE("tfidf matches hand computation on a 3-document corpus") {
  // docs: "a b", "a c", "a a"
  // df: a=3, c=1, b=1; idf = ln(3/df)+1
  const double idf_a = std::log(3.0 / 3.0) + 1.0;
  const double idf_b = std::log(3.0 / 1.0) + 1.0;
  const double idf_c = std::log(3.0 / 1.0) + 1.0;

  // doc0 = (a:1*idf_a, b:1*idf_b), doc1 = (a:1*idf_a, c:1*idf_c), doc2 = (a:2*idf_a)
  const double n0 = std::sqrt(idf_a * idf_a + idf_b * idf_b);
  const double n1 = std::sqrt(idf_a * idf_a + idf_c * idf_c);
  const double expected01 = (idf_a * idf_a) / (n0 * n1);
  const double expected02 = (idf_a * 2.0 * idf_a) / (n0 * 2.0 * idf_a);

  const Matrix m = tfidf_cosine({"a b", "a c", "a a"});
  CHECK(m(0, 1) == doctest::Approx(expected01).epsilon(1e-12));
  CHECK(m(0, 2) == doctest::Approx(expected02).epsilon(1e-12));
  CHECK(m(1, 0) == doctest::Approx(m(0, 1)).epsilon(1e-15));
  CHECK(m(2, 2) == doctest::Approx(1.0));
}

TEST_CASE("tfidf entries bounded and symmetric") {
  const Matrix m = tfidf_cosine({"rain is heavy today", "sunny and dry", "rain again today",
                                 "dry wind", "heavy heavy rain"});
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      CHECK(m(i, j) >= -1e-12);
      CHECK(m(i, j) <= 1.0 + 1e-12);
      CHECK(m(i, j) == doctest::Approx(m(j, i)).epsilon(1e-15));
    }
  }
}

TEST_CASE("similarity matrices over samples") {
  auto samples = testutil::separable_samples(6, 8, 2, 7);
  const SimilarityMatrices sims = similarity_matrices(samples);
  CHECK(sims.time_sim.rows() == 6);
  for (Eigen::Index i = 0; i < 6; ++i) {
    CHECK(sims.time_sim(i, i) == 0.0);      // negative distance of self
    CHECK(sims.text_sim(i, i) == doctest::Approx(1.0));
    for (Eigen::Index j = 0; j < 6; ++j) {
      CHECK(sims.time_sim(i, j) <= 0.0);
      CHECK(sims.time_sim(i, j) == doctest::Approx(sims.time_sim(j, i)));
    }
  }

  const auto dir = testutil::fresh_dir("sim");
  write_matrix(sims.time_sim, dir / "time.dat");
  CHECK(std::filesystem::exists(dir / "time.dat"));
}
