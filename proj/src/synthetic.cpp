#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "error.hpp"
#include "rng.hpp"

namespace fvslide {

void SyntheticSpec::validate() const {
  if (n_classes < 2) fail("synth: n_classes must be >= 2");
  if (slides_per_class < 1) fail("synth: slides_per_class must be >= 1");
  if (patches_min < 1 || patches_max < patches_min) fail("synth: need 1 <= patches_min <= patches_max");
  if (dim < 1) fail("synth: dim must be >= 1");
  if (phenotypes_per_class < 1) fail("synth: phenotypes_per_class must be >= 1");
  if (!(separation >= 0.0)) fail("synth: separation must be >= 0");
  if (!(phenotype_sigma > 0.0)) fail("synth: phenotype_sigma must be > 0");
}

Manifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  const Rng root(spec.seed);
  Rng layout = root.split(0);
  const int D = spec.dim;
  const double sigma = spec.phenotype_sigma;

  // Disjoint coordinate blocks, one per class, from a seeded permutation.
  std::vector<int> perm(static_cast<std::size_t>(D));
  for (int d = 0; d < D; ++d) perm[d] = d;
  layout.shuffle(perm);
  const int block = std::max(1, D / (2 * spec.n_classes));
  std::vector<Vector> class_scale(static_cast<std::size_t>(spec.n_classes), Vector::Ones(D));
  const double boosted = std::sqrt(1.0 + (spec.separation / 10.0) * (spec.separation / 10.0));
  for (int c = 0; c < spec.n_classes; ++c)
    for (int b = 0; b < block; ++b) class_scale[c][perm[(c * block + b) % D]] = boosted;

  std::vector<Vector> offsets;
  for (int j = 0; j < spec.phenotypes_per_class; ++j) {
    Vector o(D);
    for (int d = 0; d < D; ++d) o[d] = 4.0 * sigma * layout.normal();
    offsets.push_back(o);
  }

  Manifest manifest;
  manifest.base_dir = out_dir;
  for (int c = 0; c < spec.n_classes; ++c) manifest.class_names.push_back("class" + std::to_string(c));

  std::uint64_t slide_counter = 0;
  for (int c = 0; c < spec.n_classes; ++c) {
    for (int s = 0; s < spec.slides_per_class; ++s, ++slide_counter) {
      Rng rng = root.split(1 + slide_counter);
      char id[64];
      std::snprintf(id, sizeof id, "slide_%05llu", static_cast<unsigned long long>(slide_counter));
      const int n = spec.patches_min +
                    static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.patches_max - spec.patches_min + 1)));
      // Slide-specific phenotype proportions, Dirichlet(1).
      std::vector<double> w(static_cast<std::size_t>(spec.phenotypes_per_class));
      double total = 0.0;
      for (auto& x : w) total += (x = rng.gamma(1.0));
      SlidePack pack;
      pack.slide_id = id;
      pack.label = c;
      pack.embeddings.resize(n, D);
      for (int i = 0; i < n; ++i) {
        double r = rng.uniform() * total;
        std::size_t j = 0;
        while (j + 1 < w.size() && r >= w[j]) r -= w[j++];
        for (int d = 0; d < D; ++d) {
          const double x = offsets[j][d] + sigma * class_scale[c][d] * rng.normal();
          pack.embeddings(i, d) = static_cast<float>(x);
        }
      }
      const std::string rel = std::string("slides/") + id + ".wsfv";
      write_slidepack(pack, out_dir / rel);
      manifest.entries.push_back({pack.slide_id, c, rel, static_cast<std::size_t>(n), static_cast<std::size_t>(D)});
    }
  }
  write_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

}  // namespace fvslide
