#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "config.hpp"
#include "doctest.h"
#include "error.hpp"
#include "log.hpp"
#include "pipeline.hpp"
#include "test_helpers.hpp"

using namespace fvslide;
using testing_util::TempDir;

namespace {

KeyValueConfig small_config(const TempDir& dir) {
  KeyValueConfig kv;
  kv.set("synth_out_dir", (dir / "data").string());
  kv.set("synth_slides_per_class", "10");
  kv.set("synth_patches_min", "20");
  kv.set("synth_patches_max", "40");
  kv.set("synth_dim", "8");
  kv.set("manifest", (dir / "data" / "manifest.csv").string());
  kv.set("work_dir", (dir / "work").string());
  kv.set("seed", "3");
  kv.set("k", "3");
  kv.set("m", "2");
  kv.set("epochs", "3");
  kv.set("hidden", "16");
  kv.set("attn_dim", "8");
  kv.set("threads", "1");
  return kv;
}

}  // namespace

TEST_CASE("config parsing") {
  TempDir dir("cfg");
  std::ofstream(dir / "c.toml") << "# comment\n[clustering]\nk = 7   # trailing\nwork_dir = \"out dir\"\nelbow_ks = 1, 2, 4\n";
  KeyValueConfig kv;
  kv.load_file(dir / "c.toml");
  CHECK(kv.get_int("k", 0) == 7);
  CHECK(kv.get("work_dir") == "out dir");
  CHECK(kv.get_int_list("elbow_ks", {}) == std::vector<int>{1, 2, 4});
  CHECK_THROWS_AS(kv.set("no_such_key", "1"), Error);
  kv.set("lr", "abc");
  CHECK_THROWS_AS(kv.get_double("lr", 0.0), Error);
  std::ofstream(dir / "bad.toml") << "just words\n";
  CHECK_THROWS_AS(kv.load_file(dir / "bad.toml"), Error);
}

TEST_CASE("pipeline config defaults and paths") {
  KeyValueConfig kv;
  kv.set("manifest", "m.csv");
  kv.set("work_dir", "w");
  const auto c = PipelineConfig::from(kv);
  CHECK(c.kmeans.k == 10);
  CHECK(c.fv.m == 5);
  CHECK(c.fv.pi == 0.2);
  CHECK(c.fv.sigma == 0.1);
  CHECK(c.train.optimizer.lr == 0.001);
  CHECK(c.train.optimizer.weight_decay == 0.0001);
  CHECK(c.train.mixup_alpha == 0.2);
  CHECK(c.train.jitter_level == 0.01);
  CHECK(c.train.scale_low == 0.9);
  CHECK(c.train.hidden == 256);
  CHECK(c.train.attn_dim == 128);
  CHECK(c.clusters_dir == std::filesystem::path("w") / "clusters");
  CHECK(c.metrics_path == std::filesystem::path("w") / "metrics.csv");
  kv.set("normalize", "sideways");
  CHECK_THROWS_AS(PipelineConfig::from(kv), Error);
}

TEST_CASE("derived seeds differ by stream and index") {
  CHECK(derive_seed(1, 1) != derive_seed(1, 2));
  CHECK(derive_seed(1, 1, 0) != derive_seed(1, 1, 1));
  CHECK(derive_seed(1, 1, 5) == derive_seed(1, 1, 5));
}

TEST_CASE("synthetic generation is deterministic") {
  TempDir a("syn_a"), b("syn_b");
  SyntheticSpec spec;
  spec.slides_per_class = 3;
  spec.patches_min = 5;
  spec.patches_max = 9;
  spec.dim = 4;
  spec.seed = 11;
  const auto ma = generate_synthetic(spec, a.path());
  generate_synthetic(spec, b.path());
  REQUIRE(ma.size() == 6);
  CHECK(binio::read_file(a / "manifest.csv") == binio::read_file(b / "manifest.csv"));
  for (const auto& e : ma.entries) {
    CHECK(e.n_patches >= 5);
    CHECK(e.n_patches <= 9);
    CHECK(binio::read_file(a.path() / e.path) == binio::read_file(b.path() / e.path));
  }
  CHECK(load_manifest(a / "manifest.csv").class_names.size() == 2);
}

TEST_CASE("end-to-end run caches every stage on the second call") {
  log::set_level(log::Level::warn);
  TempDir dir("pipe");
  const auto kv = small_config(dir);
  const auto config = PipelineConfig::from(kv);
  generate_synthetic(config.synth, config.synth_out_dir);

  const auto first = run_pipeline(config);
  for (const auto& s : first.stages) CHECK_FALSE(s.cached);
  const auto metrics_text = binio::read_file(config.metrics_path);
  CHECK(metrics_text.rfind(kMetricsHeader, 0) == 0);
  CHECK(std::filesystem::exists(config.work_dir / "splits.csv"));
  CHECK(std::filesystem::exists(config.model_path));

  const auto second = run_pipeline(config);
  REQUIRE(second.stages.size() == first.stages.size());
  for (const auto& s : second.stages) CHECK(s.cached);
  CHECK(binio::read_file(config.metrics_path) == metrics_text);

  auto changed = kv;
  changed.set("epochs", "4");
  const auto third = run_pipeline(PipelineConfig::from(changed));
  CHECK(third.stages[0].cached);
  CHECK(third.stages[1].cached);
  CHECK_FALSE(third.stages[2].cached);
}

TEST_CASE("stages reject a mismatched slide") {
  log::set_level(log::Level::error);
  TempDir dir("mismatch");
  const auto config = PipelineConfig::from(small_config(dir));
  const auto manifest = generate_synthetic(config.synth, config.synth_out_dir);
  run_cluster_stage(manifest, config);
  run_encode_stage(manifest, config);
  // Replace one representation with a bag of a different size.
  auto rep = read_representation(representation_path(config.representations_dir, manifest.entries[0].slide_id));
  rep.fvs.conservativeResize(1, rep.fvs.cols());
  rep.cluster_order_key.resize(1);
  write_representation(rep, representation_path(config.representations_dir, manifest.entries[0].slide_id));
  const auto split = resolve_split(manifest, config);
  CHECK_THROWS_AS(run_train_stage(manifest, split, config), Error);
}

TEST_CASE("elbow over a dataset") {
  log::set_level(log::Level::error);
  TempDir dir("elbow");
  auto kv = small_config(dir);
  kv.set("elbow_ks", "1,2,3,4");
  const auto config = PipelineConfig::from(kv);
  const auto manifest = generate_synthetic(config.synth, config.synth_out_dir);
  const auto report = run_elbow(manifest, config);
  CHECK(report.candidate_ks == std::vector<int>{1, 2, 3, 4});
  CHECK(report.monotone);
  CHECK(report.chosen_k >= 2);
  CHECK(report.chosen_k <= 3);
}
