#include <cmath>

#include "doctest.h"
#include "metrics.hpp"
#include "oracles.hpp"
#include "rng.hpp"
#include "test_helpers.hpp"

using namespace fvslide;

namespace {

Matrix binary_probs(const std::vector<double>& p1) {
  Matrix m(static_cast<Eigen::Index>(p1.size()), 2);
  for (std::size_t i = 0; i < p1.size(); ++i) {
    m(i, 0) = 1.0 - p1[i];
    m(i, 1) = p1[i];
  }
  return m;
}

}  // namespace

TEST_CASE("perfect ranking has AUC 1 and constant scores 0.5") {
  const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  const std::vector<int> y{0, 0, 1, 1};
  CHECK(binary_auc(s, y) == 1.0);
  const std::vector<double> flat(4, 0.5);
  CHECK(binary_auc(flat, y) == 0.5);
  const std::vector<double> reversed{0.9, 0.8, 0.2, 0.1};
  CHECK(binary_auc(reversed, y) == 0.0);
}

TEST_CASE("AUC is NaN without both classes") {
  const std::vector<double> s{0.1, 0.2};
  const std::vector<int> y{1, 1};
  CHECK(std::isnan(binary_auc(s, y)));
  const auto report = compute_metrics(binary_probs(s), std::vector<int>{1, 1}, 2, "test");
  CHECK(std::isnan(report.auc));
  CHECK_FALSE(report.warnings.empty());
}

TEST_CASE("AUC matches pair counting with heavy ties") {
  Rng rng(42);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.below(20);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(4)) / 4.0;
      y[i] = static_cast<int>(rng.below(2));
    }
    y[0] = 0;
    y[1] = 1;
    CHECK(std::abs(binary_auc(s, y) - oracle::pair_count_auc(s, y)) <= 1e-12);
  }
}

TEST_CASE("binary metrics on a small example") {
  // predictions: 1 1 0 0 1 ; truth: 1 0 0 1 1
  const auto report = compute_metrics(binary_probs({0.9, 0.6, 0.3, 0.4, 0.7}), std::vector<int>{1, 0, 0, 1, 1}, 2, "val");
  CHECK(report.n == 5);
  CHECK(report.accuracy == doctest::Approx(0.6));
  // class 0: P = 1/2, R = 1/2; class 1: P = 2/3, R = 2/3.
  CHECK(report.precision == doctest::Approx((0.5 + 2.0 / 3.0) / 2));
  CHECK(report.recall == doctest::Approx((0.5 + 2.0 / 3.0) / 2));
  CHECK(report.f1 == doctest::Approx(2 * report.precision * report.recall / (report.precision + report.recall)));
  CHECK(report.confusion[1][1] == 2);
  CHECK(report.confusion[0][1] == 1);
  CHECK(report.auc == doctest::Approx(oracle::pair_count_auc({0.9, 0.6, 0.3, 0.4, 0.7}, {1, 0, 0, 1, 1})));
}

TEST_CASE("multiclass AUC is the macro one-vs-rest mean") {
  Matrix p(4, 3);
  p << 0.8, 0.1, 0.1,
       0.1, 0.8, 0.1,
       0.1, 0.1, 0.8,
       0.4, 0.5, 0.1;
  const std::vector<int> y{0, 1, 2, 0};
  const auto report = compute_metrics(p, y, 3, "test");
  const double auc0 = oracle::pair_count_auc({0.8, 0.1, 0.1, 0.4}, {1, 0, 0, 1});
  const double auc1 = oracle::pair_count_auc({0.1, 0.8, 0.1, 0.5}, {0, 1, 0, 0});
  const double auc2 = oracle::pair_count_auc({0.1, 0.1, 0.8, 0.1}, {0, 0, 1, 0});
  CHECK(report.auc == doctest::Approx((auc0 + auc1 + auc2) / 3));
  CHECK(report.accuracy == doctest::Approx(0.75));
}

TEST_CASE("metrics CSV round-trip") {
  testing_util::TempDir dir("csv");
  auto a = compute_metrics(binary_probs({0.9, 0.1}), std::vector<int>{1, 0}, 2, "train");
  auto b = compute_metrics(binary_probs({0.9, 0.8}), std::vector<int>{1, 0}, 2, "test");
  const std::string text = format_metrics_csv({a, b});
  CHECK(text.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
  CHECK(text.find("train,1.000000,1.000000,1.000000,1.000000,1.000000\n") != std::string::npos);
  write_metrics_csv({a, b}, dir / "m.csv");
  const auto back = read_metrics_csv(dir / "m.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].split == "test");
  CHECK(back[1].accuracy == doctest::Approx(0.5));
}

TEST_CASE("undefined AUC is written as nan and read back") {
  testing_util::TempDir dir("nan");
  const auto r = compute_metrics(binary_probs({0.9, 0.8}), std::vector<int>{1, 1}, 2, "test");
  CHECK(format_metrics_csv({r}).find("test,1.000000,nan,") != std::string::npos);
  write_metrics_csv({r}, dir / "m.csv");
  CHECK(std::isnan(read_metrics_csv(dir / "m.csv")[0].auc));
}
