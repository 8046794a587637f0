#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "classifier.hpp"
#include "clustering.hpp"
#include "config.hpp"
#include "data_model.hpp"
#include "fv_encoder.hpp"
#include "metrics.hpp"
#include "synthetic.hpp"

namespace fvslide {

struct PipelineConfig {
  std::filesystem::path manifest;
  std::filesystem::path work_dir;
  std::filesystem::path clusters_dir;
  std::filesystem::path representations_dir;
  std::filesystem::path model_path;
  std::filesystem::path split_file;  // empty: stratified split from the root seed
  std::filesystem::path metrics_path;
  std::uint64_t seed = 0;
  int threads = 1;

  KmeansConfig kmeans;
  std::vector<int> elbow_ks;
  FvConfig fv;
  TrainConfig train;
  SplitFractions fractions;
  std::string eval_split = "test";

  SyntheticSpec synth;
  std::filesystem::path synth_out_dir;

  // Applies defaults, derives stage paths from work_dir, and validates.
  static PipelineConfig from(const KeyValueConfig& kv);
};

// Stream ids under the root seed, one per stage.
namespace seed_stream {
inline constexpr std::uint64_t cluster = 1;
inline constexpr std::uint64_t encode = 2;
inline constexpr std::uint64_t split = 3;
inline constexpr std::uint64_t train = 4;
inline constexpr std::uint64_t synth = 5;
}  // namespace seed_stream

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index = 0);

std::filesystem::path cluster_model_path(const std::filesystem::path& dir, const std::string& slide_id);

void run_cluster_stage(const Manifest& manifest, const PipelineConfig& config);
void run_encode_stage(const Manifest& manifest, const PipelineConfig& config);
SplitAssignment resolve_split(const Manifest& manifest, const PipelineConfig& config);
TrainedClassifier run_train_stage(const Manifest& manifest, const SplitAssignment& split,
                                  const PipelineConfig& config);
// One report per split in `splits`, in that order.
std::vector<MetricsReport> run_eval_stage(const Manifest& manifest, const SplitAssignment& split,
                                          const PipelineConfig& config,
                                          const std::vector<Split>& splits);

// Dataset-level elbow: per-slide WCSS curves summed over slides.
ElbowReport run_elbow(const Manifest& manifest, const PipelineConfig& config);

struct StageStatus {
  std::string stage;
  bool cached = false;
};

struct PipelineResult {
  MetricsReport test;
  std::vector<MetricsReport> all;  // train, val (if non-empty), test
  std::vector<StageStatus> stages;
};

// cluster -> encode -> train -> eval under work_dir, each stage skipped when
// the content hash of its inputs and settings matches the stored stamp.
PipelineResult run_pipeline(const PipelineConfig& config);

}  // namespace fvslide
