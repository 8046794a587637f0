#include <algorithm>
#include <numeric>

#include "binary_io.hpp"
#include "clustering.hpp"
#include "doctest.h"
#include "error.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace fvslide;
using testing_util::TempDir;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> values) {
  Matrix m(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : values) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

std::vector<oracle::Point> to_points(const Matrix& m) {
  std::vector<oracle::Point> pts(m.rows(), oracle::Point(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) pts[i][j] = m(i, j);
  return pts;
}

// Three tight blobs at the vertices of an equilateral triangle.
Matrix three_blobs(std::uint64_t seed, int per_blob, double spread) {
  Rng rng(seed);
  Matrix m(3 * per_blob, 3);
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < per_blob; ++i)
      for (int d = 0; d < 3; ++d) m(b * per_blob + i, d) = (d == b ? 20.0 : 0.0) + spread * rng.normal();
  return m;
}

}  // namespace

TEST_CASE("k = 1 gives the centroid") {
  KmeansConfig cfg;
  cfg.k = 1;
  const auto model = kmeans_fit(rows({{0, 0}, {2, 2}}), cfg);
  CHECK(model.k == 1);
  CHECK(model.centers(0, 0) == doctest::Approx(1.0));
  CHECK(model.centers(0, 1) == doctest::Approx(1.0));
  CHECK(model.wcss == doctest::Approx(4.0));
  CHECK(model.cluster_sizes == std::vector<std::size_t>{2});
}

TEST_CASE("two well separated pairs") {
  const auto pts = rows({{0, 0}, {0, 1}, {10, 0}, {10, 1}});
  KmeansConfig cfg;
  cfg.k = 2;
  cfg.seed = 3;
  const auto model = kmeans_fit(pts, cfg);
  CHECK(model.wcss == doctest::Approx(oracle::best_partition_wcss(to_points(pts), 2)).epsilon(1e-12));
  CHECK(model.wcss == doctest::Approx(1.0));
  CHECK(model.assignments[0] == model.assignments[1]);
  CHECK(model.assignments[2] == model.assignments[3]);
  CHECK(model.assignments[0] != model.assignments[2]);
}

TEST_CASE("fewer points than clusters reduces k") {
  KmeansConfig cfg;
  cfg.k = 10;
  const auto model = kmeans_fit(rows({{0, 0}, {1, 0}, {5, 5}}), cfg);
  CHECK(model.k == 3);
  CHECK(model.requested_k == 10);
  CHECK(model.k_reduced());
  CHECK(model.wcss == doctest::Approx(0.0));
}

TEST_CASE("duplicate points do not break seeding") {
  KmeansConfig cfg;
  cfg.k = 3;
  const auto model = kmeans_fit(rows({{1, 1}, {1, 1}, {1, 1}, {1, 1}}), cfg);
  CHECK(model.k == 3);
  CHECK(model.wcss == 0.0);
  CHECK(std::accumulate(model.cluster_sizes.begin(), model.cluster_sizes.end(), std::size_t{0}) == 4);
}

TEST_CASE("same seed, same clustering; monotone history; assignments are nearest center") {
  Rng rng(21);
  const auto pts = testing_util::random_matrix(rng, 200, 4, -5, 5);
  KmeansConfig cfg;
  cfg.k = 7;
  cfg.seed = 17;
  const auto a = kmeans_fit(pts, cfg);
  const auto b = kmeans_fit(pts, cfg);
  CHECK(a.assignments == b.assignments);
  CHECK(a.centers == b.centers);
  CHECK(a.wcss == b.wcss);

  REQUIRE(a.wcss_history.size() >= 1);
  for (std::size_t i = 1; i < a.wcss_history.size(); ++i)
    CHECK(a.wcss_history[i] <= a.wcss_history[i - 1] * (1 + 1e-12));
  CHECK(a.wcss == doctest::Approx(a.wcss_history.back()));

  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const double own = squared_distance(pts.row(i).data(), a.centers.row(a.assignments[i]).data(), 4);
    for (Eigen::Index c = 0; c < a.k; ++c)
      CHECK(own <= squared_distance(pts.row(i).data(), a.centers.row(c).data(), 4) + 1e-12);
  }
  double recomputed = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    recomputed += squared_distance(pts.row(i).data(), a.centers.row(a.assignments[i]).data(), 4);
  CHECK(recomputed == doctest::Approx(a.wcss).epsilon(1e-12));
}

TEST_CASE("kmeans rejects invalid input") {
  KmeansConfig cfg;
  cfg.k = 0;
  CHECK_THROWS_AS(kmeans_fit(rows({{0, 0}}), cfg), Error);
  cfg.k = 2;
  CHECK_THROWS_AS(kmeans_fit(Matrix(0, 2), cfg), Error);
  cfg.max_iters = 0;
  CHECK_THROWS_AS(kmeans_fit(rows({{0, 0}}), cfg), Error);
}

TEST_CASE("elbow recovers three blobs") {
  KmeansConfig cfg;
  cfg.seed = 5;
  const auto report = elbow_select(three_blobs(8, 30, 1.0), {1, 2, 3, 4, 5, 6}, cfg);
  CHECK(report.chosen_k == 3);
  CHECK(report.monotone);
  CHECK(report.wcss_curve.size() == 6);
}

TEST_CASE("elbow_choose rule") {
  CHECK(elbow_choose({1, 2, 3, 4}, {100, 50, 10, 8}) == 3);
  // Linear curve: every interior second difference is zero; smallest k wins.
  CHECK(elbow_choose({1, 2, 3, 4, 5}, {50, 40, 30, 20, 10}) == 2);
  CHECK_THROWS_AS(elbow_select(rows({{0, 0}, {1, 1}}), {1, 2}, KmeansConfig{}), Error);
  CHECK_THROWS_AS(elbow_select(rows({{0, 0}, {1, 1}, {2, 2}}), {1, 3, 2}, KmeansConfig{}), Error);
}

TEST_CASE("cluster model file round-trip") {
  TempDir dir("kmc");
  Rng rng(2);
  KmeansConfig cfg;
  cfg.k = 4;
  const auto model = kmeans_fit(testing_util::random_matrix(rng, 30, 3), cfg);
  write_cluster_model(model, dir / "m.kmc");
  const auto back = read_cluster_model(dir / "m.kmc");
  CHECK(back.k == model.k);
  CHECK(back.requested_k == model.requested_k);
  CHECK(back.centers == model.centers);
  CHECK(back.assignments == model.assignments);
  CHECK(back.cluster_sizes == model.cluster_sizes);
  CHECK(back.wcss == model.wcss);
  binio::write_file(dir / "t.kmc", binio::read_file(dir / "m.kmc").substr(0, 30));
  CHECK_THROWS_AS(read_cluster_model(dir / "t.kmc"), Error);
}

TEST_CASE("restarts keep the lowest WCSS run") {
  Rng rng(33);
  const auto pts = testing_util::random_matrix(rng, 60, 2);
  KmeansConfig one;
  one.k = 5;
  one.seed = 8;
  one.n_init = 1;
  KmeansConfig many = one;
  many.n_init = 6;
  const double single = kmeans_fit(pts, one).wcss;
  const double best = kmeans_fit(pts, many).wcss;
  CHECK(best <= single);
  many.n_init = 0;
  CHECK_THROWS_AS(kmeans_fit(pts, many), Error);
}
