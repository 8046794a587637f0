#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fvslide {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr char kSlidepackMagic[] = "WSFV";
inline constexpr std::uint32_t kSlidepackVersion = 1;
inline constexpr std::size_t kSlidepackHeaderBytes = 16;

// One slide's patch embeddings. Stored as f32 on disk and in memory;
// numerical code works on the f64 copy from embeddings_f64().
struct SlidePack {
  std::string slide_id;
  int label = 0;
  MatrixF embeddings;

  std::size_t n_patches() const { return static_cast<std::size_t>(embeddings.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(embeddings.cols()); }
  Matrix embeddings_f64() const { return embeddings.cast<double>(); }
};

// Throws on empty packs, a negative label, or non-finite values.
void validate_slidepack(const SlidePack& pack);

void write_slidepack(const SlidePack& pack, const std::filesystem::path& path);

// slide_id defaults to the file stem and label to 0; manifest loading
// fills both from the manifest row.
SlidePack read_slidepack(const std::filesystem::path& path);

struct SlidepackHeader {
  std::uint32_t n_patches = 0;
  std::uint32_t dim = 0;
};
SlidepackHeader read_slidepack_header(const std::filesystem::path& path);

struct ManifestEntry {
  std::string slide_id;
  int label = 0;
  std::string path;  // relative to the manifest's directory
  std::size_t n_patches = 0;
  std::size_t dim = 0;
};

inline constexpr char kManifestHeader[] = "slide_id,label,path,n_patches,dim";
inline constexpr char kClassNamesFile[] = "classes.txt";

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_names;
  std::filesystem::path base_dir;

  std::size_t size() const { return entries.size(); }
  std::size_t dim() const { return entries.empty() ? 0 : entries.front().dim; }
  int n_classes() const { return static_cast<int>(class_names.size()); }
  std::filesystem::path resolve(const ManifestEntry& e) const { return base_dir / e.path; }
  // Reads the pack for entry i with id and label taken from the manifest.
  SlidePack load(std::size_t i) const;
};

// Class names come from a sibling classes.txt (one name per line); when it is
// absent they default to class0..classN for N = max label.
Manifest load_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

// Ordered bag of k Fisher vectors (one per row) for one slide.
struct SlideRepresentation {
  std::string slide_id;
  std::uint32_t m = 0;
  std::uint32_t dim = 0;
  std::uint32_t flags = 0;
  Matrix fvs;  // k x (2 * m * dim)
  std::vector<std::uint32_t> cluster_order_key;

  std::size_t k() const { return static_cast<std::size_t>(fvs.rows()); }
  std::size_t fv_length() const { return static_cast<std::size_t>(fvs.cols()); }
};

inline constexpr char kRepresentationMagic[] = "WSFR";
inline constexpr std::uint32_t kRepresentationVersion = 1;

void validate_representation(const SlideRepresentation& rep);
void write_representation(const SlideRepresentation& rep, const std::filesystem::path& path);
SlideRepresentation read_representation(const std::filesystem::path& path);

enum class Split { train, val, test };
const char* split_name(Split s);
Split parse_split(const std::string& name);

// Split per manifest entry, aligned with manifest.entries.
using SplitAssignment = std::vector<Split>;

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;
};

// Stratified by label, seeded shuffle within each class.
SplitAssignment stratified_split(const Manifest& manifest, SplitFractions fractions,
                                 std::uint64_t seed);
void write_split_file(const Manifest& manifest, const SplitAssignment& split,
                      const std::filesystem::path& path);
// CSV "slide_id,split"; every manifest slide must appear exactly once.
SplitAssignment read_split_file(const Manifest& manifest, const std::filesystem::path& path);

// Representations aligned with labels and splits.
struct Dataset {
  std::vector<SlideRepresentation> representations;
  std::vector<int> labels;
  SplitAssignment split;
  int n_classes = 0;

  std::vector<std::size_t> indices(Split s) const;
  void validate() const;
};

std::filesystem::path representation_path(const std::filesystem::path& dir,
                                          const std::string& slide_id);
Dataset load_dataset(const Manifest& manifest, const std::filesystem::path& representations_dir,
                     const SplitAssignment& split);

}  // namespace fvslide
