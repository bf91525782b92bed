#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "timecap/core.hpp"

#include <cmath>

using namespace timecap;

namespace {

// Independent high-precision oracle: evaluate exp/sum in long double.
Vector softmax_oracle(const Vector& logits) {
  long double sum = 0.0L;
  std::vector<long double> e(static_cast<std::size_t>(logits.size()));
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    e[static_cast<std::size_t>(i)] = expl(static_cast<long double>(logits(i)));
    sum += e[static_cast<std::size_t>(i)];
  }
  Vector out(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    out(i) = static_cast<double>(e[static_cast<std::size_t>(i)] / sum);
  }
  return out;
}

int argmax_oracle(const Vector& v) {
  int best = 0;
  for (int i = 0; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

}  // namespace

TEST_CASE("softmax symmetry and stability") {
  const Vector uniform = softmax(Vector::Zero(2)).probs();
  CHECK(uniform(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(uniform(1) == doctest::Approx(0.5).epsilon(1e-12));

  Vector big(2);
  big << 1000.0, 0.0;
  const Vector stable = softmax(big).probs();
  CHECK(std::isfinite(stable(0)));
  CHECK(stable(0) == doctest::Approx(1.0));
  CHECK(stable(1) == doctest::Approx(0.0));
}

TEST_CASE("softmax matches high-precision oracle") {
  Vector v(3);
  v << 1.0, 2.0, 3.0;
  const Vector got = softmax(v).probs();
  const Vector expected = softmax_oracle(v);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(got(i) == doctest::Approx(expected(i)).epsilon(1e-14));
  }
}

TEST_CASE("softmax shift invariance and argmax preservation") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + static_cast<int>(rng.next_below(6));
    Vector v(k);
    for (int i = 0; i < k; ++i) v(i) = rng.next_normal() * 3.0;
    const double shift = rng.next_normal() * 10.0;

    const Vector a = softmax(v).probs();
    const Vector b = softmax(Vector(v.array() + shift)).probs();
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(argmax_with_tiebreak(a).index == argmax_with_tiebreak(v).index);
  }
}

TEST_CASE("softmax rejects non-finite input") {
  Vector v(2);
  v << 1.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(softmax(v), Error);
  CHECK_THROWS_AS(softmax(Vector()), Error);
}

TEST_CASE("one_hot basics") {
  CHECK(one_hot(ClassLabel{0}, 2) == Vector(Eigen::Vector2d(1.0, 0.0)));
  Vector expected(3);
  expected << 0.0, 0.0, 1.0;
  CHECK(one_hot(ClassLabel{2}, 3) == expected);
  CHECK_THROWS_AS(one_hot(ClassLabel{3}, 3), Error);
}

TEST_CASE("argmax lowest-index tie-break") {
  Vector v(2);
  v << 0.2, 0.8;
  CHECK(argmax_with_tiebreak(v).index == 1);
  v << 0.5, 0.5;
  CHECK(argmax_with_tiebreak(v).index == 0);
  CHECK_THROWS_AS(argmax_with_tiebreak(Vector()), Error);
}

TEST_CASE("argmax equals linear-scan oracle on random vectors") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    Vector v(6);
    for (int i = 0; i < 6; ++i) v(i) = rng.next_normal();
    // occasionally inject exact ties
    if (trial % 5 == 0) v(5) = v(static_cast<Eigen::Index>(rng.next_below(5)));
    CHECK(argmax_with_tiebreak(v).index == argmax_oracle(v));
  }
}

TEST_CASE("one_hot then argmax is the identity on labels") {
  for (int k = 2; k <= 7; ++k) {
    for (int i = 0; i < k; ++i) {
      CHECK(argmax_with_tiebreak(one_hot(ClassLabel{i}, k)).index == i);
    }
  }
}

TEST_CASE("label schema invariants") {
  CHECK_THROWS_AS(LabelSchema({"only"}), Error);
  CHECK_THROWS_AS(LabelSchema({"a", "a"}), Error);
  CHECK_THROWS_AS(LabelSchema({"A", "a"}), Error);  // unique modulo case
  CHECK_THROWS_AS(LabelSchema({"a", " "}), Error);

  const LabelSchema schema({"rain", "not rain"});
  CHECK(schema.num_classes() == 2);
  CHECK(schema.index_of("RAIN") == 0);
  CHECK(schema.index_of(" not rain ") == 1);
  CHECK(!schema.index_of("drizzle").has_value());
}

TEST_CASE("prediction distribution validation") {
  Vector good(2);
  good << 0.25, 0.75;
  CHECK_NOTHROW(PredictionDistribution{good});

  Vector bad_sum(2);
  bad_sum << 0.3, 0.3;
  CHECK_THROWS_AS(PredictionDistribution{bad_sum}, Error);

  Vector negative(2);
  negative << -0.5, 1.5;
  CHECK_THROWS_AS(PredictionDistribution{negative}, Error);
}

TEST_CASE("timestamp round trip") {
  const std::int64_t t = parse_timestamp("2012-10-01 13:00:00");
  CHECK(format_timestamp(t) == "2012-10-01 13:00:00");
  CHECK(parse_timestamp("2012-10-01T13:00:00") == t);
  CHECK(parse_timestamp("2012-10-01 13:00:00") - parse_timestamp("2012-10-01 12:00:00") == 3600);
  CHECK_THROWS_AS(parse_timestamp("yesterday"), Error);
}

TEST_CASE("window validation") {
  TimeSeriesWindow w;
  w.values = Matrix::Zero(3, 2);
  w.channel_names = {"a", "b"};
  CHECK_NOTHROW(w.validate());

  w.values(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(w.validate(), Error);

  w.values(1, 1) = 0.0;
  w.channel_names = {"a"};
  CHECK_THROWS_AS(w.validate(), Error);
}
