#include "fv_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "error.hpp"
#include "log.hpp"
#include "rng.hpp"

namespace fvslide {

void FvConfig::validate() const {
  if (m < 1) fail("fv: m must be >= 1");
  if (!(pi > 0.0 && pi <= 1.0)) fail("fv: pi must be in (0, 1]");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) fail("fv: sigma must be > 0");
  if (gmm_center_iters < 1) fail("fv: gmm_center_iters must be >= 1");
}

std::uint32_t FvConfig::flags() const {
  std::uint32_t f = 0;
  if (normalize == Normalization::power_l2) f |= 1u;
  if (second_order == SecondOrder::paper_literal) f |= 2u;
  if (scaling == Scaling::raw) f |= 4u;
  if (center_fit == CenterFit::em) f |= 8u;
  return f;
}

std::vector<Eigen::Index> canonical_row_order(const Matrix& x) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Eigen::Index dim = x.cols();
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const double* ra = x.row(a).data();
    const double* rb = x.row(b).data();
    return std::lexicographical_compare(ra, ra + dim, rb, rb + dim);
  });
  return order;
}

namespace {

Matrix rows_in_order(const Matrix& x, const std::vector<Eigen::Index>& order) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < order.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(order[i]);
  return out;
}

}  // namespace

Matrix compute_posteriors(const Matrix& x, const GmmCodebook& codebook) {
  if (!(codebook.sigma > 0.0)) fail("posteriors: sigma must be > 0");
  if (!codebook.centers.allFinite()) fail("posteriors: non-finite codebook");
  if (x.cols() != codebook.centers.cols()) fail("posteriors: dimension mismatch");
  const Eigen::Index m = codebook.centers.rows();
  const double log_pi = std::log(codebook.mix_weight);
  const double inv_two_var = 1.0 / (2.0 * codebook.sigma * codebook.sigma);
  Matrix post(x.rows(), m);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double max_log = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j) {
      const double d2 = squared_distance(x.row(i).data(), codebook.centers.row(j).data(), x.cols());
      post(i, j) = log_pi - d2 * inv_two_var;
      max_log = std::max(max_log, post(i, j));
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      post(i, j) = std::exp(post(i, j) - max_log);
      sum += post(i, j);
    }
    for (Eigen::Index j = 0; j < m; ++j) post(i, j) /= sum;
  }
  return post;
}

GmmCodebook fit_codebook(const Matrix& cluster_embeddings, const FvConfig& config) {
  config.validate();
  if (cluster_embeddings.rows() < 1) fail("codebook: cluster has no embeddings");
  if (!cluster_embeddings.allFinite()) fail("codebook: non-finite input");

  const Matrix x = rows_in_order(cluster_embeddings, canonical_row_order(cluster_embeddings));
  KmeansConfig km;
  km.k = config.m;
  km.max_iters = config.gmm_center_iters;
  km.rel_tol = 0.0;
  km.seed = config.seed;
  const ClusterModel fitted = kmeans_fit(x, km);

  GmmCodebook cb;
  cb.mix_weight = config.pi;
  cb.sigma = config.sigma;
  cb.centers.resize(config.m, x.cols());
  for (int j = 0; j < config.m; ++j) cb.centers.row(j) = fitted.centers.row(j % fitted.k);
  cb.padded = fitted.k < config.m;

  if (config.center_fit == CenterFit::em) {
    // Soft-EM mean updates with pi and sigma held fixed.
    for (int it = 0; it < config.gmm_center_iters; ++it) {
      const Matrix post = compute_posteriors(x, cb);
      for (int j = 0; j < config.m; ++j) {
        const double mass = post.col(j).sum();
        if (mass <= 1e-300) continue;
        Vector mean = Vector::Zero(x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i) mean += post(i, j) * x.row(i).transpose();
        cb.centers.row(j) = (mean / mass).transpose();
      }
    }
  }
  return cb;
}

void power_l2_normalize(Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = std::sqrt(std::abs(v[i]));
    v[i] = v[i] < 0.0 ? -a : a;
  }
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
}

FisherVector fisher_encode(const Matrix& cluster_embeddings, const GmmCodebook& codebook,
                           const FvConfig& config) {
  const Eigen::Index m = codebook.centers.rows();
  const Eigen::Index dim = codebook.centers.cols();
  FisherVector fv;
  fv.values = Vector::Zero(2 * m * dim);
  if (cluster_embeddings.rows() == 0) {
    fv.empty_cluster = true;
    return fv;
  }
  if (cluster_embeddings.cols() != dim) fail("fisher_encode: dimension mismatch");

  const double sigma = codebook.sigma;
  const double pi = codebook.mix_weight;
  const bool raw = config.scaling == Scaling::raw;
  const double c = raw ? 1.0 : sigma * std::sqrt(pi);
  const double c_hat = raw ? 1.0 : sigma * sigma * std::sqrt(2.0 * pi);
  const double centering = config.second_order == SecondOrder::centered ? sigma * sigma : 0.0;

  const Matrix x = rows_in_order(cluster_embeddings, canonical_row_order(cluster_embeddings));
  const Matrix post = compute_posteriors(x, codebook);
  const Eigen::Index first = 0;
  const Eigen::Index second = m * dim;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double s = post(i, j);
      for (Eigen::Index d = 0; d < dim; ++d) {
        const double diff = x(i, d) - codebook.centers(j, d);
        fv.values[first + j * dim + d] += (s / c) * diff;
        fv.values[second + j * dim + d] += (s / c_hat) * (diff * diff - centering);
      }
    }
  }
  fv.values /= static_cast<double>(x.rows());
  if (config.normalize == Normalization::power_l2) power_l2_normalize(fv.values);
  return fv;
}

std::vector<std::uint32_t> cluster_order(const ClusterModel& clusters) {
  std::vector<std::uint32_t> order(static_cast<std::size_t>(clusters.k));
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return clusters.cluster_sizes[a] > clusters.cluster_sizes[b];
  });
  return order;
}

SlideRepresentation encode_slide(const SlidePack& pack, const ClusterModel& clusters,
                                 const FvConfig& config) {
  config.validate();
  if (clusters.assignments.size() != pack.n_patches())
    fail("encode '" + pack.slide_id + "': cluster model does not match the slide's patches");
  if (static_cast<std::size_t>(clusters.centers.cols()) != pack.dim())
    fail("encode '" + pack.slide_id + "': cluster model dimension mismatch");

  const Matrix x = pack.embeddings_f64();
  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(clusters.k));
  for (std::size_t i = 0; i < clusters.assignments.size(); ++i)
    members[clusters.assignments[i]].push_back(static_cast<Eigen::Index>(i));

  SlideRepresentation rep;
  rep.slide_id = pack.slide_id;
  rep.m = static_cast<std::uint32_t>(config.m);
  rep.dim = static_cast<std::uint32_t>(pack.dim());
  rep.flags = config.flags();
  rep.cluster_order_key = cluster_order(clusters);
  rep.fvs.resize(clusters.k, static_cast<Eigen::Index>(2 * config.m * pack.dim()));

  for (std::size_t slot = 0; slot < rep.cluster_order_key.size(); ++slot) {
    const auto c = rep.cluster_order_key[slot];
    const auto& idx = members[c];
    Matrix cx(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) cx.row(static_cast<Eigen::Index>(r)) = x.row(idx[r]);

    FisherVector fv;
    if (idx.empty()) {
      log::warn("encode '" + pack.slide_id + "': cluster " + std::to_string(c) +
                " is empty, emitting a zero fisher vector");
      fv.values = Vector::Zero(rep.fvs.cols());
    } else {
      FvConfig per_cluster = config;
      per_cluster.seed = Rng(config.seed).split(c).next_u64();
      const GmmCodebook cb = fit_codebook(cx, per_cluster);
      fv = fisher_encode(cx, cb, config);
    }
    fv.source_cluster = static_cast<int>(c);
    rep.fvs.row(static_cast<Eigen::Index>(slot)) = fv.values.transpose();
  }
  return rep;
}

}  // namespace fvslide
