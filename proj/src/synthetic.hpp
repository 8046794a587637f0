#pragma once

#include <cstdint>
#include <filesystem>

#include "data_model.hpp"

namespace fvslide {

// Class c's phenotype j is a Gaussian centred at offset[j] with spread
// sigma on every coordinate, except on a class-specific block of
// dim / (2 * n_classes) coordinates where the spread is
// sigma * sqrt(1 + (separation / 10)^2).
// Phenotype offsets are shared between classes, so separation = 0 makes
// the class-conditional patch distributions identical. Classes differ in
// within-phenotype shape rather than location because the per-slide
// cluster codebooks re-centre every cluster on its own members.
struct SyntheticSpec {
  int n_classes = 2;
  int slides_per_class = 100;
  int patches_min = 100;
  int patches_max = 300;
  int dim = 32;
  int phenotypes_per_class = 4;
  double separation = 20.0;
  double phenotype_sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Writes <out_dir>/manifest.csv, classes.txt and slides/<id>.wsfv.
Manifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace fvslide
