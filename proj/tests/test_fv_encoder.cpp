#include <cmath>

#include "doctest.h"
#include "error.hpp"
#include "fv_encoder.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace fvslide;

namespace {

FvConfig unnormalized(int m) {
  FvConfig cfg;
  cfg.m = m;
  cfg.normalize = Normalization::none;
  return cfg;
}

GmmCodebook codebook_of(const Matrix& centers, double pi = 0.2, double sigma = 0.1) {
  GmmCodebook cb;
  cb.centers = centers;
  cb.mix_weight = pi;
  cb.sigma = sigma;
  return cb;
}

std::vector<oracle::Point> to_points(const Matrix& m) {
  std::vector<oracle::Point> pts(m.rows(), oracle::Point(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) pts[i][j] = m(i, j);
  return pts;
}

SlidePack random_pack(std::uint64_t seed, Eigen::Index n, Eigen::Index dim) {
  Rng rng(seed);
  SlidePack p;
  p.slide_id = "r";
  p.embeddings.resize(n, dim);
  for (Eigen::Index i = 0; i < p.embeddings.size(); ++i) p.embeddings.data()[i] = static_cast<float>(rng.normal());
  return p;
}

}  // namespace

TEST_CASE("posteriors of a point midway between two centers are one half") {
  Matrix centers(2, 1);
  centers << 0.0, 1.0;
  Matrix x(1, 1);
  x << 0.5;
  const auto s = compute_posteriors(x, codebook_of(centers));
  CHECK(s(0, 0) == doctest::Approx(0.5));
  CHECK(s(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("posterior of a point on one center") {
  Matrix centers(2, 1);
  centers << 0.0, 1.0;
  Matrix x(1, 1);
  x << 0.0;
  const auto s = compute_posteriors(x, codebook_of(centers));
  CHECK(s(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-50.0))).epsilon(1e-15));
  CHECK(s(0, 1) == doctest::Approx(std::exp(-50.0)).epsilon(1e-9));
}

TEST_CASE("posterior rows sum to one even far from every center") {
  Rng rng(1);
  const auto centers = testing_util::random_matrix(rng, 5, 3);
  const auto x = testing_util::random_matrix(rng, 50, 3, -100, 100);
  const auto s = compute_posteriors(x, codebook_of(centers));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    CHECK(s.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.row(i).minCoeff() >= 0.0);
  }
}

TEST_CASE("descriptors on a single center give zero first order and -1/sqrt(0.4) second order") {
  Matrix centers(1, 3);
  centers << 0.3, -0.2, 1.0;
  Matrix x(4, 3);
  for (int i = 0; i < 4; ++i) x.row(i) = centers.row(0);
  const auto fv = fisher_encode(x, codebook_of(centers), unnormalized(1));
  REQUIRE(fv.values.size() == 6);
  for (int d = 0; d < 3; ++d) {
    CHECK(fv.values[d] == doctest::Approx(0.0));
    CHECK(fv.values[3 + d] == doctest::Approx(-1.0 / std::sqrt(0.4)).epsilon(1e-12));
  }
  auto literal = unnormalized(1);
  literal.second_order = SecondOrder::paper_literal;
  const auto fv2 = fisher_encode(x, codebook_of(centers), literal);
  for (int d = 0; d < 3; ++d) CHECK(fv2.values[3 + d] == 0.0);
}

TEST_CASE("symmetric descriptors cancel in the first-order block") {
  Matrix centers(1, 2);
  centers << 0.0, 0.0;
  Matrix x(2, 2);
  x << 0.05, -0.02, -0.05, 0.02;
  const auto fv = fisher_encode(x, codebook_of(centers), unnormalized(1));
  CHECK(fv.values[0] == doctest::Approx(0.0));
  CHECK(fv.values[1] == doctest::Approx(0.0));
  CHECK(fv.values[2] == doctest::Approx((0.0025 - 0.01) / (0.01 * std::sqrt(0.4))));
}

TEST_CASE("fisher_encode matches the direct formula") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = static_cast<Eigen::Index>(1 + rng.below(5));
    const auto m = static_cast<Eigen::Index>(1 + rng.below(3));
    const auto dim = static_cast<Eigen::Index>(1 + rng.below(3));
    const auto centers = testing_util::random_matrix(rng, m, dim, -0.3, 0.3);
    const auto x = testing_util::random_matrix(rng, n, dim, -0.3, 0.3);
    for (bool centered : {true, false}) {
      auto cfg = unnormalized(static_cast<int>(m));
      cfg.second_order = centered ? SecondOrder::centered : SecondOrder::paper_literal;
      const auto fv = fisher_encode(x, codebook_of(centers), cfg);
      const auto ref = oracle::fisher_vector(to_points(x), to_points(centers), 0.2, 0.1, centered);
      REQUIRE(fv.values.size() == static_cast<Eigen::Index>(ref.size()));
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(fv.values[i] - ref[i]) <= 1e-12);
    }
  }
}

TEST_CASE("raw scaling drops the constants") {
  Matrix centers(1, 1);
  centers << 0.0;
  Matrix x(1, 1);
  x << 0.2;
  auto cfg = unnormalized(1);
  cfg.scaling = Scaling::raw;
  const auto fv = fisher_encode(x, codebook_of(centers), cfg);
  CHECK(fv.values[0] == doctest::Approx(0.2));
  CHECK(fv.values[1] == doctest::Approx(0.04 - 0.01));
}

TEST_CASE("power_l2 normalization") {
  Vector v(4);
  v << 4.0, -9.0, 0.0, 1.0;
  power_l2_normalize(v);
  CHECK(v.norm() == doctest::Approx(1.0));
  CHECK(v[0] == doctest::Approx(2.0 / std::sqrt(14.0)));
  CHECK(v[1] == doctest::Approx(-3.0 / std::sqrt(14.0)));
  Vector z = Vector::Zero(3);
  power_l2_normalize(z);
  CHECK(z.norm() == 0.0);
}

TEST_CASE("codebook recovers two blob means") {
  Rng rng(3);
  Matrix x(40, 2);
  for (int i = 0; i < 40; ++i) {
    const double base = i < 20 ? 0.0 : 1.0;
    x(i, 0) = base + 0.01 * rng.normal();
    x(i, 1) = -base + 0.01 * rng.normal();
  }
  const auto cb = fit_codebook(x, unnormalized(2));
  REQUIRE(cb.m() == 2);
  CHECK_FALSE(cb.padded);
  const int lo = cb.centers(0, 0) < cb.centers(1, 0) ? 0 : 1;
  CHECK(cb.centers(lo, 0) == doctest::Approx(x.topRows(20).col(0).mean()));
  CHECK(cb.centers(1 - lo, 1) == doctest::Approx(x.bottomRows(20).col(1).mean()));
}

TEST_CASE("codebook from a single descriptor is padded") {
  Matrix x(1, 3);
  x << 1.0, 2.0, 3.0;
  const auto cb = fit_codebook(x, unnormalized(5));
  CHECK(cb.m() == 5);
  CHECK(cb.padded);
  for (int j = 0; j < 5; ++j) CHECK(cb.centers.row(j) == x.row(0));
  const auto fv = fisher_encode(x, cb, FvConfig{});
  CHECK(fv.values.allFinite());
  CHECK(fv.values.size() == 30);
}

TEST_CASE("em center refinement keeps mixing weight and scale fixed") {
  Rng rng(9);
  const auto x = testing_util::random_matrix(rng, 30, 2, -0.5, 0.5);
  auto cfg = unnormalized(3);
  cfg.center_fit = CenterFit::em;
  const auto cb = fit_codebook(x, cfg);
  CHECK(cb.mix_weight == 0.2);
  CHECK(cb.sigma == 0.1);
  CHECK(cb.centers.allFinite());
  CHECK(cfg.flags() == 8u);
}

TEST_CASE("encode_slide shape and order") {
  const auto pack = random_pack(5, 120, 6);
  KmeansConfig kc;
  kc.seed = 4;
  const auto clusters = kmeans_fit(pack.embeddings_f64(), kc);
  const auto rep = encode_slide(pack, clusters, FvConfig{});
  CHECK(rep.fvs.rows() == 10);
  CHECK(rep.fvs.cols() == 2 * 5 * 6);
  CHECK(rep.m == 5);
  CHECK(rep.flags == 1u);
  for (Eigen::Index r = 0; r < rep.fvs.rows(); ++r) CHECK(rep.fvs.row(r).norm() == doctest::Approx(1.0));
  REQUIRE(rep.cluster_order_key.size() == 10);
  for (std::size_t i = 1; i < rep.cluster_order_key.size(); ++i)
    CHECK(clusters.cluster_sizes[rep.cluster_order_key[i - 1]] >= clusters.cluster_sizes[rep.cluster_order_key[i]]);
}

TEST_CASE("cluster_order breaks size ties by index") {
  ClusterModel cm;
  cm.k = 4;
  cm.cluster_sizes = {3, 5, 3, 5};
  CHECK(cluster_order(cm) == std::vector<std::uint32_t>{1, 3, 0, 2});
}

TEST_CASE("k = 1 collapses the bag to a single vector") {
  const auto pack = random_pack(6, 30, 4);
  KmeansConfig kc;
  kc.k = 1;
  const auto rep = encode_slide(pack, kmeans_fit(pack.embeddings_f64(), kc), FvConfig{});
  CHECK(rep.fvs.rows() == 1);
}

TEST_CASE("encoding is bit exact under descriptor permutation") {
  const auto pack = random_pack(8, 90, 5);
  KmeansConfig kc;
  kc.seed = 12;
  const auto clusters = kmeans_fit(pack.embeddings_f64(), kc);
  const auto rep = encode_slide(pack, clusters, FvConfig{});

  Rng rng(31);
  std::vector<Eigen::Index> perm(90);
  for (Eigen::Index i = 0; i < 90; ++i) perm[i] = i;
  rng.shuffle(perm);
  SlidePack shuffled = pack;
  ClusterModel moved = clusters;
  for (Eigen::Index i = 0; i < 90; ++i) {
    shuffled.embeddings.row(i) = pack.embeddings.row(perm[i]);
    moved.assignments[i] = clusters.assignments[perm[i]];
  }
  const auto rep2 = encode_slide(shuffled, moved, FvConfig{});
  CHECK(rep2.fvs == rep.fvs);
}

TEST_CASE("invalid encoder settings") {
  FvConfig cfg;
  cfg.sigma = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = FvConfig{};
  cfg.pi = 1.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = FvConfig{};
  cfg.m = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
