#include "fvslide/fvslide.h"

#include <cstring>
#include <new>
#include <string>

#include "classifier.hpp"
#include "clustering.hpp"
#include "config.hpp"
#include "data_model.hpp"
#include "error.hpp"
#include "fv_encoder.hpp"
#include "log.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "synthetic.hpp"

struct fvs_config {
  fvslide::KeyValueConfig kv;
};
struct fvs_slidepack {
  fvslide::SlidePack pack;
};
struct fvs_cluster_model {
  fvslide::ClusterModel model;
};
struct fvs_representation {
  fvslide::SlideRepresentation rep;
};
struct fvs_model {
  fvslide::TrainedClassifier trained;
};
struct fvs_metrics {
  fvslide::MetricsReport report;
};
struct fvs_elbow {
  fvslide::ElbowReport report;
};

namespace {

thread_local std::string g_last_error;
thread_local int g_cached_stages = 0;

template <typename Fn>
fvs_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return FVS_OK;
  } catch (const fvslide::Error& e) {
    g_last_error = e.what();
    return e.kind() == fvslide::ErrorKind::io ? FVS_ERR_IO : FVS_ERR_VALIDATION;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return FVS_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return FVS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FVS_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return FVS_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) fvslide::fail(std::string(what) + " is null");
}

template <typename T>
void publish(T** out, T* value) {
  *out = value;
}

}  // namespace

extern "C" {

const char* fvs_version(void) { return "1.0.0"; }
const char* fvs_last_error(void) { return g_last_error.c_str(); }

void fvs_set_log_level(int level) {
  if (level < 0) level = 0;
  if (level > 4) level = 4;
  fvslide::log::set_level(static_cast<fvslide::log::Level>(level));
}

fvs_status fvs_config_create(fvs_config** out) {
  return guarded([&] {
    require(out, "out");
    publish(out, new fvs_config{});
  });
}

void fvs_config_destroy(fvs_config* config) { delete config; }

fvs_status fvs_config_load(fvs_config* config, const char* path) {
  return guarded([&] {
    require(config, "config");
    require(path, "path");
    config->kv.load_file(path);
  });
}

fvs_status fvs_config_set(fvs_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    config->kv.set(key, value);
  });
}

fvs_status fvs_config_get(const fvs_config* config, const char* key, char* buf, size_t buf_len,
                          size_t* needed) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    const std::string v = config->kv.get(key);
    if (needed) *needed = v.size() + 1;
    if (buf && buf_len > 0) {
      const size_t n = std::min(buf_len - 1, v.size());
      std::memcpy(buf, v.data(), n);
      buf[n] = '\0';
    }
  });
}

fvs_status fvs_synth(const fvs_config* config) {
  return guarded([&] {
    require(config, "config");
    const auto pc = fvslide::PipelineConfig::from(config->kv);
    std::filesystem::path out = pc.synth_out_dir.empty() ? pc.work_dir : pc.synth_out_dir;
    if (out.empty()) fvslide::fail("synth: synth_out_dir (or work_dir) is required");
    const auto manifest = fvslide::generate_synthetic(pc.synth, out);
    fvslide::log::info("synth: wrote " + std::to_string(manifest.size()) + " slides to " + out.string());
  });
}

fvs_status fvs_cluster(const fvs_config* config) {
  return guarded([&] {
    require(config, "config");
    const auto pc = fvslide::PipelineConfig::from(config->kv);
    fvslide::run_cluster_stage(fvslide::load_manifest(pc.manifest), pc);
  });
}

fvs_status fvs_encode(const fvs_config* config) {
  return guarded([&] {
    require(config, "config");
    const auto pc = fvslide::PipelineConfig::from(config->kv);
    fvslide::run_encode_stage(fvslide::load_manifest(pc.manifest), pc);
  });
}

fvs_status fvs_train(const fvs_config* config) {
  return guarded([&] {
    require(config, "config");
    const auto pc = fvslide::PipelineConfig::from(config->kv);
    const auto manifest = fvslide::load_manifest(pc.manifest);
    fvslide::run_train_stage(manifest, fvslide::resolve_split(manifest, pc), pc);
  });
}

fvs_status fvs_eval(const fvs_config* config, fvs_metrics** out) {
  return guarded([&] {
    require(config, "config");
    const auto pc = fvslide::PipelineConfig::from(config->kv);
    const auto manifest = fvslide::load_manifest(pc.manifest);
    auto reports = fvslide::run_eval_stage(manifest, fvslide::resolve_split(manifest, pc), pc,
                                           {fvslide::parse_split(pc.eval_split)});
    if (out) publish(out, new fvs_metrics{std::move(reports.front())});
  });
}

fvs_status fvs_run(const fvs_config* config, fvs_metrics** out) {
  return guarded([&] {
    require(config, "config");
    g_cached_stages = 0;
    auto result = fvslide::run_pipeline(fvslide::PipelineConfig::from(config->kv));
    for (const auto& s : result.stages) g_cached_stages += s.cached ? 1 : 0;
    if (out) publish(out, new fvs_metrics{std::move(result.test)});
  });
}

int fvs_last_run_cached_stages(void) { return g_cached_stages; }

fvs_status fvs_elbow_run(const fvs_config* config, fvs_elbow** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    const auto pc = fvslide::PipelineConfig::from(config->kv);
    publish(out, new fvs_elbow{fvslide::run_elbow(fvslide::load_manifest(pc.manifest), pc)});
  });
}

void fvs_elbow_destroy(fvs_elbow* report) { delete report; }
size_t fvs_elbow_count(const fvs_elbow* report) { return report ? report->report.candidate_ks.size() : 0; }
int fvs_elbow_k(const fvs_elbow* report, size_t i) { return report->report.candidate_ks.at(i); }
double fvs_elbow_wcss(const fvs_elbow* report, size_t i) { return report->report.wcss_curve.at(i); }
int fvs_elbow_chosen_k(const fvs_elbow* report) { return report->report.chosen_k; }

void fvs_metrics_destroy(fvs_metrics* metrics) { delete metrics; }

double fvs_metrics_get(const fvs_metrics* metrics, fvs_metric which) {
  const auto& r = metrics->report;
  switch (which) {
    case FVS_METRIC_ACCURACY: return r.accuracy;
    case FVS_METRIC_AUC: return r.auc;
    case FVS_METRIC_PRECISION: return r.precision;
    case FVS_METRIC_RECALL: return r.recall;
    case FVS_METRIC_F1: return r.f1;
  }
  return 0.0;
}

fvs_status fvs_metrics_write_csv(const fvs_metrics* metrics, const char* path) {
  return guarded([&] {
    require(metrics, "metrics");
    require(path, "path");
    fvslide::write_metrics_csv({metrics->report}, path);
  });
}

fvs_status fvs_slidepack_create(const char* slide_id, int label, const float* data, uint32_t n_patches,
                                uint32_t dim, fvs_slidepack** out) {
  return guarded([&] {
    require(out, "out");
    if (n_patches > 0 && dim > 0) require(data, "data");
    fvslide::SlidePack pack;
    pack.slide_id = slide_id ? slide_id : "";
    pack.label = label;
    pack.embeddings.resize(n_patches, dim);
    if (pack.embeddings.size() > 0)
      std::memcpy(pack.embeddings.data(), data, sizeof(float) * pack.embeddings.size());
    fvslide::validate_slidepack(pack);
    publish(out, new fvs_slidepack{std::move(pack)});
  });
}

fvs_status fvs_slidepack_read(const char* path, fvs_slidepack** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    publish(out, new fvs_slidepack{fvslide::read_slidepack(path)});
  });
}

fvs_status fvs_slidepack_write(const fvs_slidepack* pack, const char* path) {
  return guarded([&] {
    require(pack, "pack");
    require(path, "path");
    fvslide::write_slidepack(pack->pack, path);
  });
}

void fvs_slidepack_destroy(fvs_slidepack* pack) { delete pack; }
uint32_t fvs_slidepack_n_patches(const fvs_slidepack* pack) { return static_cast<uint32_t>(pack->pack.n_patches()); }
uint32_t fvs_slidepack_dim(const fvs_slidepack* pack) { return static_cast<uint32_t>(pack->pack.dim()); }
const float* fvs_slidepack_data(const fvs_slidepack* pack) { return pack->pack.embeddings.data(); }

fvs_status fvs_kmeans_fit(const fvs_slidepack* pack, int k, uint64_t seed, fvs_cluster_model** out) {
  return guarded([&] {
    require(pack, "pack");
    require(out, "out");
    fvslide::KmeansConfig config;
    config.k = k;
    config.seed = seed;
    publish(out, new fvs_cluster_model{fvslide::kmeans_fit(pack->pack.embeddings_f64(), config)});
  });
}

void fvs_cluster_model_destroy(fvs_cluster_model* model) { delete model; }
int fvs_cluster_model_k(const fvs_cluster_model* model) { return model->model.k; }
double fvs_cluster_model_wcss(const fvs_cluster_model* model) { return model->model.wcss; }

const uint32_t* fvs_cluster_model_assignments(const fvs_cluster_model* model, size_t* n) {
  if (n) *n = model->model.assignments.size();
  return model->model.assignments.data();
}

fvs_fv_options fvs_fv_default_options(void) {
  return fvs_fv_options{5, 0.2, 0.1, 1, 0, 0};
}

fvs_status fvs_encode_slide(const fvs_slidepack* pack, const fvs_cluster_model* clusters,
                            const fvs_fv_options* options, fvs_representation** out) {
  return guarded([&] {
    require(pack, "pack");
    require(clusters, "clusters");
    require(out, "out");
    const fvs_fv_options o = options ? *options : fvs_fv_default_options();
    fvslide::FvConfig config;
    config.m = o.m;
    config.pi = o.pi;
    config.sigma = o.sigma;
    config.normalize = o.power_l2 ? fvslide::Normalization::power_l2 : fvslide::Normalization::none;
    config.second_order = o.paper_literal ? fvslide::SecondOrder::paper_literal : fvslide::SecondOrder::centered;
    config.seed = o.seed;
    publish(out, new fvs_representation{fvslide::encode_slide(pack->pack, clusters->model, config)});
  });
}

fvs_status fvs_representation_read(const char* path, fvs_representation** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    publish(out, new fvs_representation{fvslide::read_representation(path)});
  });
}

fvs_status fvs_representation_write(const fvs_representation* rep, const char* path) {
  return guarded([&] {
    require(rep, "rep");
    require(path, "path");
    fvslide::write_representation(rep->rep, path);
  });
}

void fvs_representation_destroy(fvs_representation* rep) { delete rep; }
size_t fvs_representation_k(const fvs_representation* rep) { return rep->rep.k(); }
size_t fvs_representation_length(const fvs_representation* rep) { return rep->rep.fv_length(); }
const double* fvs_representation_data(const fvs_representation* rep) { return rep->rep.fvs.data(); }

fvs_status fvs_model_read(const char* path, fvs_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    publish(out, new fvs_model{fvslide::read_model(path)});
  });
}

void fvs_model_destroy(fvs_model* model) { delete model; }
int fvs_model_n_classes(const fvs_model* model) { return model->trained.model.shape().n_classes; }

fvs_status fvs_model_predict(const fvs_model* model, const fvs_representation* rep, double* probs,
                             double* attention) {
  return guarded([&] {
    require(model, "model");
    require(rep, "rep");
    require(probs, "probs");
    const auto fwd = fvslide::forward(model->trained.model, rep->rep.fvs);
    const fvslide::Vector p = fvslide::predict_proba(model->trained.model, rep->rep.fvs);
    std::memcpy(probs, p.data(), sizeof(double) * static_cast<size_t>(p.size()));
    if (attention) std::memcpy(attention, fwd.attention.data(), sizeof(double) * static_cast<size_t>(fwd.attention.size()));
  });
}

}  // extern "C"
