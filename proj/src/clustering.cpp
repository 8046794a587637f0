#include "clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "binary_io.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace fvslide {

void KmeansConfig::validate() const {
  if (k < 1) fail("kmeans: k must be >= 1");
  if (max_iters < 1) fail("kmeans: max_iters must be >= 1");
  if (n_init < 1) fail("kmeans: n_init must be >= 1");
  if (!(rel_tol >= 0.0)) fail("kmeans: rel_tol must be >= 0");
}

double squared_distance(const double* a, const double* b, Eigen::Index dim) {
  double s = 0.0;
  for (Eigen::Index d = 0; d < dim; ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

namespace {

// Greedy k-means++: each step draws 2 + floor(ln k) candidates with
// probability proportional to D^2 and keeps the one giving the lowest
// potential (ties to the earlier draw).
Matrix kmeanspp_seed(const Matrix& points, int k, Rng& rng) {
  const Eigen::Index n = points.rows();
  const Eigen::Index dim = points.cols();
  Matrix centers(k, dim);
  std::vector<double> nearest(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);
  const int trials = 2 + static_cast<int>(std::log(static_cast<double>(k)));

  auto take = [&](Eigen::Index idx, int c) {
    centers.row(c) = points.row(idx);
    chosen[static_cast<std::size_t>(idx)] = true;
    for (Eigen::Index i = 0; i < n; ++i)
      nearest[i] = std::min(nearest[i], squared_distance(points.row(i).data(), centers.row(c).data(), dim));
  };
  auto draw = [&](double total) {
    const double target = rng.uniform() * total;
    double acc = 0.0;
    Eigen::Index pick = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (nearest[i] <= 0.0) continue;
      acc += nearest[i];
      pick = i;
      if (acc > target) break;
    }
    return pick;
  };
  auto potential_with = [&](Eigen::Index idx) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      s += std::min(nearest[i], squared_distance(points.row(i).data(), points.row(idx).data(), dim));
    return s;
  };

  take(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))), 0);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += nearest[i];
    Eigen::Index pick = -1;
    if (total > 0.0) {
      double best = std::numeric_limits<double>::infinity();
      for (int t = 0; t < trials; ++t) {
        const Eigen::Index cand = draw(total);
        const double pot = potential_with(cand);
        if (pot < best) {
          best = pot;
          pick = cand;
        }
      }
    } else {
      // Fewer distinct points than k: fall back to the lowest unused index.
      for (Eigen::Index i = 0; i < n && pick < 0; ++i)
        if (!chosen[static_cast<std::size_t>(i)]) pick = i;
      if (pick < 0) pick = 0;
    }
    take(pick, c);
  }
  return centers;
}

// Returns WCSS; fills assignments and each point's squared distance.
double assign(const Matrix& points, const Matrix& centers, std::vector<std::uint32_t>& assignments,
              std::vector<double>& dist) {
  const Eigen::Index n = points.rows();
  const Eigen::Index dim = points.cols();
  double wcss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t best_c = 0;
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      const double d = squared_distance(points.row(i).data(), centers.row(c).data(), dim);
      if (d < best) {
        best = d;
        best_c = static_cast<std::uint32_t>(c);
      }
    }
    assignments[i] = best_c;
    dist[i] = best;
    wcss += best;
  }
  return wcss;
}

}  // namespace

namespace {

ClusterModel lloyd_run(const Matrix& points, const KmeansConfig& config, Rng rng) {
  const Eigen::Index n = points.rows();
  const Eigen::Index dim = points.cols();
  ClusterModel model;
  model.requested_k = config.k;
  model.k = static_cast<int>(std::min<Eigen::Index>(config.k, n));

  model.centers = kmeanspp_seed(points, model.k, rng);
  model.assignments.assign(static_cast<std::size_t>(n), 0);
  std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
  double wcss = assign(points, model.centers, model.assignments, dist);
  model.wcss_history.push_back(wcss);

  std::vector<std::uint32_t> previous;
  Matrix sums(model.k, dim);
  std::vector<std::size_t> counts(static_cast<std::size_t>(model.k));
  for (int it = 0; it < config.max_iters; ++it) {
    sums.setZero();
    std::fill(counts.begin(), counts.end(), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(model.assignments[i]) += points.row(i);
      ++counts[model.assignments[i]];
    }
    std::vector<bool> used_for_repair(static_cast<std::size_t>(n), false);
    for (int c = 0; c < model.k; ++c) {
      if (counts[c] > 0) {
        model.centers.row(c) = sums.row(c) / static_cast<double>(counts[c]);
        continue;
      }
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (used_for_repair[i]) continue;
        if (far < 0 || dist[i] > dist[far]) far = i;
      }
      if (far >= 0 && dist[far] > 0.0) {
        model.centers.row(c) = points.row(far);
        used_for_repair[far] = true;
      }
    }

    previous = model.assignments;
    const double prev_wcss = wcss;
    wcss = assign(points, model.centers, model.assignments, dist);
    model.wcss_history.push_back(wcss);
    model.iterations = it + 1;
    if (model.assignments == previous) break;
    if (prev_wcss - wcss <= config.rel_tol * prev_wcss) break;
  }

  model.wcss = wcss;
  model.cluster_sizes.assign(static_cast<std::size_t>(model.k), 0);
  for (auto a : model.assignments) ++model.cluster_sizes[a];
  return model;
}

}  // namespace

ClusterModel kmeans_fit(const Matrix& points, const KmeansConfig& config) {
  config.validate();
  if (points.rows() < 1) fail("kmeans: no points");
  if (points.cols() < 1) fail("kmeans: zero-dimensional points");
  if (!points.allFinite()) fail("kmeans: non-finite input");

  ClusterModel best = lloyd_run(points, config, Rng(config.seed, 0));
  for (int r = 1; r < config.n_init; ++r) {
    ClusterModel run = lloyd_run(points, config, Rng(config.seed, static_cast<std::uint64_t>(r)));
    if (run.wcss < best.wcss) best = std::move(run);
  }
  return best;
}

int elbow_choose(const std::vector<int>& ks, const std::vector<double>& wcss) {
  if (ks.size() < 3) fail("elbow: need at least 3 candidate ks");
  if (ks.size() != wcss.size()) fail("elbow: curve length mismatch");
  std::size_t best = 1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < ks.size(); ++i) {
    const double score = wcss[i - 1] - 2.0 * wcss[i] + wcss[i + 1];
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return ks[best];
}

ElbowReport elbow_select(const Matrix& points, const std::vector<int>& candidate_ks,
                         const KmeansConfig& config) {
  if (candidate_ks.size() < 3) fail("elbow: need at least 3 candidate ks");
  for (std::size_t i = 0; i < candidate_ks.size(); ++i) {
    if (candidate_ks[i] < 1) fail("elbow: candidate k must be >= 1");
    if (i > 0 && candidate_ks[i] <= candidate_ks[i - 1])
      fail("elbow: candidate ks must be strictly ascending");
  }
  ElbowReport report;
  report.candidate_ks = candidate_ks;
  for (int k : candidate_ks) {
    KmeansConfig c = config;
    c.k = k;
    report.wcss_curve.push_back(kmeans_fit(points, c).wcss);
  }
  for (std::size_t i = 1; i < report.wcss_curve.size(); ++i)
    if (report.wcss_curve[i] > report.wcss_curve[i - 1]) report.monotone = false;
  report.chosen_k = elbow_choose(report.candidate_ks, report.wcss_curve);
  return report;
}

void write_cluster_model(const ClusterModel& model, const std::filesystem::path& path) {
  std::string out;
  binio::put_magic(out, "WSKM");
  binio::put_u32(out, 1);
  binio::put_u32(out, static_cast<std::uint32_t>(model.k));
  binio::put_u32(out, static_cast<std::uint32_t>(model.centers.cols()));
  binio::put_u32(out, static_cast<std::uint32_t>(model.assignments.size()));
  binio::put_u32(out, static_cast<std::uint32_t>(model.requested_k));
  binio::put_f64(out, model.wcss);
  for (Eigen::Index i = 0; i < model.centers.size(); ++i) binio::put_f64(out, model.centers.data()[i]);
  for (auto a : model.assignments) binio::put_u32(out, a);
  binio::write_file(path, out);
}

ClusterModel read_cluster_model(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  binio::Reader r(bytes, path.string());
  if (r.remaining() < 4 || r.take(4) != "WSKM") fail(path.string() + ": not a cluster model");
  if (r.u32() != 1) fail(path.string() + ": unsupported version");
  ClusterModel model;
  model.k = static_cast<int>(r.u32());
  const auto dim = r.u32();
  const auto n = r.u32();
  model.requested_k = static_cast<int>(r.u32());
  model.wcss = r.f64();
  if (model.k < 1 || dim < 1 || n < 1) fail(path.string() + ": invalid header");
  model.centers.resize(model.k, dim);
  for (Eigen::Index i = 0; i < model.centers.size(); ++i) model.centers.data()[i] = r.f64();
  model.assignments.resize(n);
  model.cluster_sizes.assign(static_cast<std::size_t>(model.k), 0);
  for (auto& a : model.assignments) {
    a = r.u32();
    if (a >= static_cast<std::uint32_t>(model.k)) fail(path.string() + ": assignment out of range");
    ++model.cluster_sizes[a];
  }
  if (r.remaining() != 0) fail(path.string() + ": trailing bytes");
  return model;
}

}  // namespace fvslide
