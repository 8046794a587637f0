#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clustering.hpp"
#include "data_model.hpp"

namespace fvslide {

enum class Normalization { none, power_l2 };
// centered subtracts sigma^2 from the squared deviation; paper_literal keeps
// the bare squared deviation.
enum class SecondOrder { centered, paper_literal };
// improved: c = sigma*sqrt(pi), c_hat = sigma^2*sqrt(2*pi). raw: c = c_hat = 1.
enum class Scaling { improved, raw };
enum class CenterFit { lloyd, em };

struct FvConfig {
  int m = 5;
  double pi = 0.2;
  double sigma = 0.1;
  int gmm_center_iters = 50;
  std::uint64_t seed = 0;
  Normalization normalize = Normalization::power_l2;
  SecondOrder second_order = SecondOrder::centered;
  Scaling scaling = Scaling::improved;
  CenterFit center_fit = CenterFit::lloyd;

  void validate() const;
  // Bit 0: power_l2, bit 1: paper_literal, bit 2: raw scaling, bit 3: em.
  std::uint32_t flags() const;
};

// Isotropic mixture with one shared weight and one shared scale.
struct GmmCodebook {
  Matrix centers;  // m x dim
  double mix_weight = 0.2;
  double sigma = 0.1;
  bool padded = false;  // fewer distinct points than m; centers repeated

  int m() const { return static_cast<int>(centers.rows()); }
};

GmmCodebook fit_codebook(const Matrix& cluster_embeddings, const FvConfig& config);

// n x m soft assignments; every row sums to one.
Matrix compute_posteriors(const Matrix& cluster_embeddings, const GmmCodebook& codebook);

struct FisherVector {
  Vector values;  // [first-order m*dim | second-order m*dim]
  int source_cluster = -1;
  bool empty_cluster = false;
};

// Mean over descriptors of the per-descriptor statistics; descriptors are
// accumulated in a canonical (lexicographic) order so the result does not
// depend on their input order.
FisherVector fisher_encode(const Matrix& cluster_embeddings, const GmmCodebook& codebook,
                           const FvConfig& config);

// Signed square root then L2; a zero vector is returned unchanged.
void power_l2_normalize(Vector& v);

// Rows of x sorted lexicographically (stable).
std::vector<Eigen::Index> canonical_row_order(const Matrix& x);

SlideRepresentation encode_slide(const SlidePack& pack, const ClusterModel& clusters,
                                 const FvConfig& config);

// Cluster indices by descending size, ties to the lower index.
std::vector<std::uint32_t> cluster_order(const ClusterModel& clusters);

}  // namespace fvslide
