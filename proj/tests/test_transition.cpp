#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "noisykit/rng.hpp"
#include "noisykit/transition.hpp"

using namespace noisykit;

namespace {

const Mat kFashion05Estimate = Mat::from_rows(
    {{0.545, 0.224, 0.229}, {0.231, 0.488, 0.280}, {0.285, 0.213, 0.501}});
const Mat kFashion06Estimate = Mat::from_rows(
    {{0.475, 0.250, 0.274}, {0.273, 0.433, 0.292}, {0.289, 0.281, 0.429}});

TransitionMatrix random_diag_dominant(Rng& rng, std::size_t c) {
  Mat m(c, c);
  for (std::size_t i = 0; i < c; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      m(i, j) = 0.05 + rng.next_double();
      sum += m(i, j);
    }
    for (std::size_t j = 0; j < c; ++j) m(i, j) = 0.5 * m(i, j) / sum + (i == j ? 0.5 : 0.0);
  }
  return TransitionMatrix::make(m);
}

std::vector<double> random_simplex(Rng& rng, std::size_t c) {
  std::vector<double> p(c);
  double sum = 0.0;
  for (auto& v : p) {
    v = 0.01 + rng.next_double();
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

}  // namespace

TEST_CASE("construction accepts the benchmark matrices and the identity") {
  CHECK_NOTHROW(TransitionMatrix::make(
      Mat::from_rows({{0.5, 0.2, 0.3}, {0.3, 0.5, 0.2}, {0.2, 0.3, 0.5}})));
  CHECK_NOTHROW(TransitionMatrix::identity(3));
}

TEST_CASE("construction rejects invalid matrices, naming the invariant") {
  const double third = 1.0 / 3.0;
  CHECK_THROWS_WITH(TransitionMatrix::make(Mat::from_rows(
                        {{third, third, third}, {third, third, third}, {third, third, third}})),
                    Catch::Matchers::ContainsSubstring("singular"));
  CHECK_THROWS_WITH(
      TransitionMatrix::make(Mat::from_rows({{0.6, 0.2, 0.3}, {0.3, 0.5, 0.2}, {0.2, 0.3, 0.5}})),
      Catch::Matchers::ContainsSubstring("sum"));
  CHECK_THROWS_WITH(
      TransitionMatrix::make(Mat::from_rows({{-0.2, 1.2}, {0.0, 1.0}})),
      Catch::Matchers::ContainsSubstring("negative"));
  CHECK_THROWS_WITH(
      TransitionMatrix::make(Mat::from_rows({{1.2, -0.2}, {0.0, 1.0}})),
      Catch::Matchers::ContainsSubstring("exceeds 1"));
  CHECK_THROWS(TransitionMatrix::make(Mat::from_rows({{1.0, 0.0}, {0.5, 0.5}, {0.5, 0.5}})));
}

TEST_CASE("known matrices carry the exact published constants") {
  const auto t05 = TransitionMatrix::known(KnownMatrix::fashion05);
  CHECK(t05.at(0, 0) == 0.5);
  CHECK(t05.at(0, 2) == 0.3);
  CHECK(t05.at(1, 1) == 0.5);
  CHECK(t05.at(2, 1) == 0.3);
  const auto t06 = TransitionMatrix::known(KnownMatrix::fashion06);
  CHECK(t06.at(1, 1) == 0.4);
  CHECK(t06.at(0, 1) == 0.3);
  for (std::size_t i = 0; i < 3; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 3; ++j) sum += t06.at(i, j);
    CHECK(sum == Catch::Approx(1.0).margin(1e-15));
  }
}

TEST_CASE("apply_to_posterior is the transpose action") {
  const auto t05 = TransitionMatrix::known(KnownMatrix::fashion05);
  const std::vector<double> p{0.7, 0.2, 0.1};

  SECTION("identity passes the posterior through") {
    const auto q = TransitionMatrix::identity(3).apply_to_posterior(p);
    CHECK(q[0] == Catch::Approx(0.7).margin(1e-15));
    CHECK(q[1] == Catch::Approx(0.2).margin(1e-15));
    CHECK(q[2] == Catch::Approx(0.1).margin(1e-15));
  }
  SECTION("hand-computed entry: 0.5*0.7 + 0.3*0.2 + 0.2*0.1") {
    const auto q = t05.apply_to_posterior(p);
    CHECK(q[0] == Catch::Approx(0.43).margin(1e-12));
  }
  SECTION("a one-hot posterior picks out a row of T") {
    for (std::size_t j = 0; j < 3; ++j) {
      std::vector<double> onehot(3, 0.0);
      onehot[j] = 1.0;
      const auto q = t05.apply_to_posterior(onehot);
      for (std::size_t i = 0; i < 3; ++i) CHECK(q[i] == Catch::Approx(t05.at(j, i)).margin(1e-15));
    }
  }
  SECTION("mass is preserved for random T and p") {
    Rng rng(17);
    for (int rep = 0; rep < 25; ++rep) {
      const std::size_t c = 2 + rng.next_below(4);
      const auto t = random_diag_dominant(rng, c);
      const auto p_rand = random_simplex(rng, c);
      const auto q = t.apply_to_posterior(p_rand);
      double mass = 0.0;
      for (double v : q) {
        CHECK(v >= 0.0);
        mass += v;
      }
      CHECK(std::fabs(mass - 1.0) < 1e-9);
    }
  }
  SECTION("invalid posteriors are rejected") {
    CHECK_THROWS(t05.apply_to_posterior(std::vector<double>{0.7, 0.2}));
    CHECK_THROWS(t05.apply_to_posterior(std::vector<double>{0.7, 0.2, 0.2}));
    CHECK_THROWS(t05.apply_to_posterior(std::vector<double>{1.2, -0.1, -0.1}));
  }
}

TEST_CASE("revise adds the slack without renormalizing") {
  const auto t05 = TransitionMatrix::known(KnownMatrix::fashion05);

  SECTION("zero delta is the matrix itself, bitwise") {
    const auto out = revise(t05, RevisionDelta::zeros(3));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(out(i, j) == t05.at(i, j));
  }

  SECTION("published FashionMNIST0.5 revision sums") {
    const RevisionDelta dt{Mat::from_rows(
        {{0.0279, 0.0216, 0.0400}, {0.0243, 0.0219, 0.0228}, {0.0307, 0.0331, 0.0282}})};
    const Mat expected = Mat::from_rows(
        {{0.5279, 0.2216, 0.3400}, {0.3243, 0.5219, 0.2228}, {0.2307, 0.3331, 0.5282}});
    const auto out = revise(t05, dt);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        CHECK(out(i, j) == Catch::Approx(expected(i, j)).margin(1e-12));
  }

  SECTION("published FashionMNIST0.6 revision sums") {
    const auto t06 = TransitionMatrix::known(KnownMatrix::fashion06);
    const RevisionDelta dt{Mat::from_rows(
        {{0.0482, 0.0340, 0.0452}, {0.0389, 0.0447, 0.0420}, {0.0463, 0.0338, 0.0434}})};
    const Mat expected = Mat::from_rows(
        {{0.4482, 0.3340, 0.3452}, {0.3389, 0.4447, 0.3420}, {0.3463, 0.3338, 0.4434}});
    const auto out = revise(t06, dt);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        CHECK(out(i, j) == Catch::Approx(expected(i, j)).margin(1e-12));
  }

  SECTION("the published revised CIFAR matrix rows sum above 1") {
    // Row sums of the published revised matrix: no renormalization happened.
    const Mat revised = Mat::from_rows(
        {{0.4726, 0.3386, 0.2872}, {0.3246, 0.5122, 0.2960}, {0.3111, 0.3409, 0.4683}});
    const double expected_sums[3] = {1.0984, 1.1328, 1.1203};
    for (std::size_t i = 0; i < 3; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 3; ++j) sum += revised(i, j);
      CHECK(sum == Catch::Approx(expected_sums[i]).margin(1e-9));
    }
  }

  SECTION("shape and finiteness errors") {
    CHECK_THROWS(revise(t05, RevisionDelta::zeros(4)));
    RevisionDelta bad = RevisionDelta::zeros(3);
    bad.entries(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS(revise(t05, bad));
  }
}

TEST_CASE("sum_average_error reproduces the published estimator scores") {
  const auto t05 = TransitionMatrix::known(KnownMatrix::fashion05);
  const auto t06 = TransitionMatrix::known(KnownMatrix::fashion06);
  CHECK(sum_average_error(t05, kFashion05Estimate) == Catch::Approx(0.158).margin(0.001));
  CHECK(sum_average_error(t06, kFashion06Estimate) == Catch::Approx(0.093).margin(0.002));
  CHECK(sum_average_error(t05, t05.entries()) == 0.0);
  CHECK_THROWS(sum_average_error(t05, Mat(4, 4)));
}

TEST_CASE("sum_average_error scales linearly in a nonnegative perturbation") {
  Rng rng(23);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t c = 2 + rng.next_below(4);
    const auto t = random_diag_dominant(rng, c);
    Mat e(c, c);
    double sum_e = 0.0;
    for (auto& v : e.data) {
      v = rng.next_double();
      sum_e += v;
    }
    const double eps = 0.125;  // keeps the scaled sum exactly representable
    Mat perturbed = t.entries();
    for (std::size_t i = 0; i < perturbed.data.size(); ++i)
      perturbed.data[i] += eps * e.data[i];
    const double expected = eps * sum_e / static_cast<double>(c);
    CHECK(sum_average_error(t, perturbed) == Catch::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("JSON round-trip preserves matrices exactly") {
  Rng rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    const auto t = random_diag_dominant(rng, 2 + rng.next_below(4));
    const auto j = to_json(t);
    const auto back = transition_from_json(j);
    REQUIRE(back.size() == t.size());
    for (std::size_t i = 0; i < t.size(); ++i)
      for (std::size_t k = 0; k < t.size(); ++k) CHECK(back.at(i, k) == t.at(i, k));
  }
  CHECK_THROWS(mat_from_json(nlohmann::json{{"rows", {{1.0}}}}));
  CHECK_THROWS(mat_from_json(nlohmann::json{{"size", 2}, {"rows", {{1.0, 0.0}}}}));
}
