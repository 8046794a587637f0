#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "data_model.hpp"

namespace fvslide {

enum class ClusterScope { per_slide };

struct KmeansConfig {
  int k = 10;
  int max_iters = 300;
  double rel_tol = 1e-6;  // stop when (prev - wcss) <= rel_tol * prev
  int n_init = 3;         // seeded restarts; the lowest WCSS is kept
  std::uint64_t seed = 0;
  ClusterScope scope = ClusterScope::per_slide;

  void validate() const;
};

struct ClusterModel {
  int requested_k = 0;
  int k = 0;  // min(requested_k, n_points)
  Matrix centers;
  std::vector<std::uint32_t> assignments;
  double wcss = 0.0;
  std::vector<std::size_t> cluster_sizes;
  // WCSS after the seeding assignment and after each Lloyd iteration.
  std::vector<double> wcss_history;
  int iterations = 0;

  bool k_reduced() const { return k < requested_k; }
};

// Lloyd's algorithm with greedy k-means++ seeding, best of n_init restarts
// (earliest wins ties). Ties in assignment go to the lowest center index;
// empty clusters are reseeded at the point farthest from its assigned center.
ClusterModel kmeans_fit(const Matrix& points, const KmeansConfig& config);

double squared_distance(const double* a, const double* b, Eigen::Index dim);

struct ElbowReport {
  std::vector<int> candidate_ks;
  std::vector<double> wcss_curve;
  int chosen_k = 0;
  bool monotone = true;  // false when the curve increases somewhere
};

// Knee rule on a precomputed curve: argmax over interior points of the
// second difference, ties to the smaller k.
int elbow_choose(const std::vector<int>& ks, const std::vector<double>& wcss);

ElbowReport elbow_select(const Matrix& points, const std::vector<int>& candidate_ks,
                         const KmeansConfig& config);

// File: "WSKM", version, k, dim, n (u32 LE), wcss (f64), centers (f64 row-major),
// assignments (u32).
void write_cluster_model(const ClusterModel& model, const std::filesystem::path& path);
ClusterModel read_cluster_model(const std::filesystem::path& path);

}  // namespace fvslide
