#include <fvslide/fvslide.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path path = fs::temp_directory_path() / ("fvslide_capi_" + std::to_string(::getpid()));
  Scratch() {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

std::vector<float> ramp(std::size_t n) {
  std::vector<float> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<float>(std::sin(0.37 * static_cast<double>(i)));
  return v;
}

}  // namespace

TEST_CASE("version and log level") {
  CHECK(std::string(fvs_version()) == "1.0.0");
  fvs_set_log_level(3);
}

TEST_CASE("config set and get") {
  fvs_config* cfg = nullptr;
  REQUIRE(fvs_config_create(&cfg) == FVS_OK);
  CHECK(fvs_config_set(cfg, "k", "4") == FVS_OK);
  char buf[8];
  size_t needed = 0;
  CHECK(fvs_config_get(cfg, "k", buf, sizeof buf, &needed) == FVS_OK);
  CHECK(std::string(buf) == "4");
  CHECK(needed == 2);
  CHECK(fvs_config_set(cfg, "not_a_key", "1") == FVS_ERR_VALIDATION);
  CHECK(std::string(fvs_last_error()).find("not_a_key") != std::string::npos);
  CHECK(fvs_config_load(cfg, "/nonexistent/fvslide.toml") == FVS_ERR_IO);
  fvs_config_destroy(cfg);
}

TEST_CASE("slidepack, clustering and encoding through the C API") {
  Scratch dir;
  const auto data = ramp(40 * 3);
  fvs_slidepack* pack = nullptr;
  REQUIRE(fvs_slidepack_create("s0", 1, data.data(), 40, 3, &pack) == FVS_OK);
  REQUIRE(fvs_slidepack_write(pack, (dir / "s0.wsfv").c_str()) == FVS_OK);
  CHECK(fs::file_size(dir / "s0.wsfv") == 16 + 4 * 40 * 3);

  fvs_slidepack* back = nullptr;
  REQUIRE(fvs_slidepack_read((dir / "s0.wsfv").c_str(), &back) == FVS_OK);
  CHECK(fvs_slidepack_n_patches(back) == 40);
  CHECK(fvs_slidepack_dim(back) == 3);
  CHECK(std::equal(data.begin(), data.end(), fvs_slidepack_data(back)));

  fvs_cluster_model* clusters = nullptr;
  REQUIRE(fvs_kmeans_fit(back, 4, 9, &clusters) == FVS_OK);
  CHECK(fvs_cluster_model_k(clusters) == 4);
  size_t n = 0;
  CHECK(fvs_cluster_model_assignments(clusters, &n) != nullptr);
  CHECK(n == 40);
  CHECK(fvs_cluster_model_wcss(clusters) > 0.0);

  auto opts = fvs_fv_default_options();
  CHECK(opts.m == 5);
  opts.m = 2;
  fvs_representation* rep = nullptr;
  REQUIRE(fvs_encode_slide(back, clusters, &opts, &rep) == FVS_OK);
  CHECK(fvs_representation_k(rep) == 4);
  CHECK(fvs_representation_length(rep) == 2 * 2 * 3);
  double norm = 0.0;
  for (size_t i = 0; i < 12; ++i) norm += fvs_representation_data(rep)[i] * fvs_representation_data(rep)[i];
  CHECK(norm == doctest::Approx(1.0));
  REQUIRE(fvs_representation_write(rep, (dir / "s0.fvr").c_str()) == FVS_OK);
  fvs_representation* rep2 = nullptr;
  REQUIRE(fvs_representation_read((dir / "s0.fvr").c_str(), &rep2) == FVS_OK);
  CHECK(std::equal(fvs_representation_data(rep), fvs_representation_data(rep) + 48, fvs_representation_data(rep2)));

  fvs_representation_destroy(rep2);
  fvs_representation_destroy(rep);
  fvs_cluster_model_destroy(clusters);
  fvs_slidepack_destroy(back);
  fvs_slidepack_destroy(pack);
}

TEST_CASE("error codes") {
  Scratch dir;
  fvs_slidepack* pack = nullptr;
  CHECK(fvs_slidepack_read((dir / "missing.wsfv").c_str(), &pack) == FVS_ERR_IO);
  CHECK(pack == nullptr);
  const float bad[2] = {1.0f, NAN};
  CHECK(fvs_slidepack_create("x", 0, bad, 1, 2, &pack) == FVS_ERR_VALIDATION);
  CHECK(std::string(fvs_last_error()).find("corrupt embeddings") != std::string::npos);
  CHECK(fvs_slidepack_create("x", 0, bad, 0, 2, &pack) == FVS_ERR_VALIDATION);
  CHECK(fvs_run(nullptr, nullptr) == FVS_ERR_VALIDATION);
}

TEST_CASE("pipeline through the C API") {
  Scratch dir;
  fvs_config* cfg = nullptr;
  REQUIRE(fvs_config_create(&cfg) == FVS_OK);
  const std::pair<const char*, std::string> settings[] = {
      {"synth_out_dir", dir / "data"}, {"synth_slides_per_class", "8"}, {"synth_patches_min", "20"},
      {"synth_patches_max", "30"},     {"synth_dim", "6"},              {"manifest", dir / "data/manifest.csv"},
      {"work_dir", dir / "work"},      {"k", "3"},                      {"m", "2"},
      {"epochs", "2"},                 {"hidden", "8"},                 {"attn_dim", "4"},
      {"threads", "1"},                {"seed", "5"}};
  for (const auto& [k, v] : settings) REQUIRE(fvs_config_set(cfg, k, v.c_str()) == FVS_OK);
  REQUIRE(fvs_synth(cfg) == FVS_OK);

  fvs_metrics* metrics = nullptr;
  REQUIRE(fvs_run(cfg, &metrics) == FVS_OK);
  CHECK(fvs_last_run_cached_stages() == 0);
  const double acc = fvs_metrics_get(metrics, FVS_METRIC_ACCURACY);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  fvs_metrics_destroy(metrics);

  REQUIRE(fvs_run(cfg, &metrics) == FVS_OK);
  CHECK(fvs_last_run_cached_stages() == 4);
  CHECK(fvs_metrics_get(metrics, FVS_METRIC_ACCURACY) == acc);
  REQUIRE(fvs_metrics_write_csv(metrics, (dir / "m.csv").c_str()) == FVS_OK);
  fvs_metrics_destroy(metrics);

  fvs_model* model = nullptr;
  REQUIRE(fvs_model_read((dir / "work/model.bin").c_str(), &model) == FVS_OK);
  CHECK(fvs_model_n_classes(model) == 2);
  fvs_representation* rep = nullptr;
  REQUIRE(fvs_representation_read((dir / "work/representations/slide_00000.fvr").c_str(), &rep) == FVS_OK);
  double probs[2];
  std::vector<double> attention(fvs_representation_k(rep));
  REQUIRE(fvs_model_predict(model, rep, probs, attention.data()) == FVS_OK);
  CHECK(probs[0] + probs[1] == doctest::Approx(1.0));
  double sum = 0.0;
  for (double a : attention) sum += a;
  CHECK(sum == doctest::Approx(1.0));
  fvs_representation_destroy(rep);
  fvs_model_destroy(model);

  fvs_elbow* elbow = nullptr;
  REQUIRE(fvs_config_set(cfg, "elbow_ks", "1,2,3") == FVS_OK);
  REQUIRE(fvs_elbow_run(cfg, &elbow) == FVS_OK);
  CHECK(fvs_elbow_count(elbow) == 3);
  CHECK(fvs_elbow_k(elbow, 2) == 3);
  CHECK(fvs_elbow_wcss(elbow, 0) >= fvs_elbow_wcss(elbow, 2));
  fvs_elbow_destroy(elbow);
  fvs_config_destroy(cfg);
}
