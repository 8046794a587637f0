#include "pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "error.hpp"
#include "hash.hpp"
#include "log.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace fvslide {
namespace fs = std::filesystem;

namespace {

Normalization parse_normalize(const std::string& v) {
  if (v == "none") return Normalization::none;
  if (v == "power_l2") return Normalization::power_l2;
  fail("normalize must be none or power_l2, got '" + v + "'");
}

SecondOrder parse_second_order(const std::string& v) {
  if (v == "centered") return SecondOrder::centered;
  if (v == "paper_literal") return SecondOrder::paper_literal;
  fail("second_order must be centered or paper_literal, got '" + v + "'");
}

Scaling parse_scaling(const std::string& v) {
  if (v == "improved") return Scaling::improved;
  if (v == "raw") return Scaling::raw;
  fail("scaling must be improved or raw, got '" + v + "'");
}

CenterFit parse_center_fit(const std::string& v) {
  if (v == "lloyd") return CenterFit::lloyd;
  if (v == "em") return CenterFit::em;
  fail("center_fit must be lloyd or em, got '" + v + "'");
}

HeadType parse_head(const std::string& v) {
  if (v == "amil") return HeadType::amil;
  if (v == "mlp") return HeadType::mlp;
  fail("head must be amil or mlp, got '" + v + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string describe(const KmeansConfig& c) {
  return "k=" + std::to_string(c.k) + ";iters=" + std::to_string(c.max_iters) +
         ";tol=" + fmt_double(c.rel_tol) + ";n_init=" + std::to_string(c.n_init);
}

std::string describe(const FvConfig& c) {
  return "m=" + std::to_string(c.m) + ";pi=" + fmt_double(c.pi) + ";sigma=" + fmt_double(c.sigma) +
         ";iters=" + std::to_string(c.gmm_center_iters) + ";flags=" + std::to_string(c.flags());
}

std::string describe(const TrainConfig& c) {
  std::ostringstream s;
  s << "lr=" << fmt_double(c.optimizer.lr) << ";wd=" << fmt_double(c.optimizer.weight_decay)
    << ";b1=" << fmt_double(c.optimizer.beta1) << ";b2=" << fmt_double(c.optimizer.beta2)
    << ";eps=" << fmt_double(c.optimizer.eps) << ";epochs=" << c.epochs << ";batch=" << c.batch_size
    << ";scale=" << fmt_double(c.scale_low) << "," << fmt_double(c.scale_high) << ","
    << c.scale_per_instance << ";jitter=" << fmt_double(c.jitter_level) << ","
    << static_cast<int>(c.jitter_distribution) << ";mixup=" << fmt_double(c.mixup_alpha)
    << ";hidden=" << c.hidden << ";attn=" << c.attn_dim << ";head=" << static_cast<int>(c.head);
  return s.str();
}

template <typename Fn>
auto with_stage(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    rethrow_with_context(e, "stage " + stage);
  }
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index) {
  return Rng(root).split(stream).split(index).next_u64();
}

PipelineConfig PipelineConfig::from(const KeyValueConfig& kv) {
  PipelineConfig c;
  c.manifest = kv.get("manifest");
  c.work_dir = kv.get("work_dir");
  c.seed = kv.get_u64("seed", 0);
  c.threads = static_cast<int>(kv.get_int("threads", std::max(1u, std::thread::hardware_concurrency())));
  if (c.threads < 1) fail("threads must be >= 1");

  auto under_work = [&](const std::string& key, const std::string& leaf) -> fs::path {
    if (kv.has(key)) return kv.get(key);
    return c.work_dir.empty() ? fs::path{} : c.work_dir / leaf;
  };
  c.clusters_dir = under_work("clusters_dir", "clusters");
  c.representations_dir = under_work("representations_dir", "representations");
  c.model_path = under_work("model", "model.bin");
  c.metrics_path = under_work("metrics_out", "metrics.csv");
  c.split_file = kv.get("split_file");

  c.kmeans.k = static_cast<int>(kv.get_int("k", 10));
  c.kmeans.max_iters = static_cast<int>(kv.get_int("kmeans_max_iters", 300));
  c.kmeans.rel_tol = kv.get_double("kmeans_rel_tol", 1e-6);
  c.kmeans.n_init = static_cast<int>(kv.get_int("kmeans_n_init", 3));
  if (kv.get("cluster_scope", "per_slide") != "per_slide") fail("cluster_scope supports only per_slide");
  c.kmeans.validate();
  c.elbow_ks = kv.get_int_list("elbow_ks", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15});

  c.fv.m = static_cast<int>(kv.get_int("m", 5));
  c.fv.pi = kv.get_double("pi", 0.2);
  c.fv.sigma = kv.get_double("sigma", 0.1);
  c.fv.gmm_center_iters = static_cast<int>(kv.get_int("gmm_center_iters", 50));
  c.fv.normalize = parse_normalize(kv.get("normalize", "power_l2"));
  c.fv.second_order = parse_second_order(kv.get("second_order", "centered"));
  c.fv.scaling = parse_scaling(kv.get("scaling", "improved"));
  c.fv.center_fit = parse_center_fit(kv.get("center_fit", "lloyd"));
  c.fv.validate();

  auto& t = c.train;
  t.optimizer.lr = kv.get_double("lr", 0.001);
  t.optimizer.weight_decay = kv.get_double("weight_decay", 0.0001);
  t.optimizer.beta1 = kv.get_double("beta1", 0.9);
  t.optimizer.beta2 = kv.get_double("beta2", 0.999);
  t.optimizer.eps = kv.get_double("eps", 1e-8);
  t.epochs = static_cast<int>(kv.get_int("epochs", t.epochs));
  t.batch_size = static_cast<int>(kv.get_int("batch_size", t.batch_size));
  t.mixup_alpha = kv.get_double("mixup_alpha", 0.2);
  t.jitter_level = kv.get_double("jitter", 0.01);
  const std::string jd = kv.get("jitter_distribution", "uniform");
  if (jd == "uniform") t.jitter_distribution = JitterDistribution::uniform;
  else if (jd == "gaussian") t.jitter_distribution = JitterDistribution::gaussian;
  else fail("jitter_distribution must be uniform or gaussian");
  t.scale_low = kv.get_double("scale_low", 0.9);
  t.scale_high = kv.get_double("scale_high", 1.0);
  t.scale_per_instance = kv.get_bool("scale_per_instance", false);
  t.hidden = static_cast<int>(kv.get_int("hidden", t.hidden));
  t.attn_dim = static_cast<int>(kv.get_int("attn_dim", t.attn_dim));
  t.head = parse_head(kv.get("head", "amil"));
  t.validate();

  c.fractions.train = kv.get_double("train_frac", 0.6);
  c.fractions.val = kv.get_double("val_frac", 0.2);
  c.eval_split = kv.get("split", "test");
  parse_split(c.eval_split);

  auto& s = c.synth;
  s.n_classes = static_cast<int>(kv.get_int("synth_classes", s.n_classes));
  s.slides_per_class = static_cast<int>(kv.get_int("synth_slides_per_class", s.slides_per_class));
  s.patches_min = static_cast<int>(kv.get_int("synth_patches_min", s.patches_min));
  s.patches_max = static_cast<int>(kv.get_int("synth_patches_max", s.patches_max));
  s.dim = static_cast<int>(kv.get_int("synth_dim", s.dim));
  s.phenotypes_per_class = static_cast<int>(kv.get_int("synth_phenotypes", s.phenotypes_per_class));
  s.separation = kv.get_double("synth_separation", s.separation);
  s.phenotype_sigma = kv.get_double("synth_phenotype_sigma", s.phenotype_sigma);
  s.seed = derive_seed(c.seed, seed_stream::synth);
  c.synth_out_dir = kv.get("synth_out_dir");
  return c;
}

fs::path cluster_model_path(const fs::path& dir, const std::string& slide_id) {
  return dir / (slide_id + ".kmc");
}

void run_cluster_stage(const Manifest& manifest, const PipelineConfig& config) {
  if (config.clusters_dir.empty()) fail("cluster: no output directory (clusters_dir or work_dir)");
  fs::create_directories(config.clusters_dir);
  parallel_for(manifest.size(), config.threads, [&](std::size_t i) {
    const auto& e = manifest.entries[i];
    try {
      const SlidePack pack = manifest.load(i);
      KmeansConfig km = config.kmeans;
      km.seed = derive_seed(config.seed, seed_stream::cluster, i);
      const ClusterModel model = kmeans_fit(pack.embeddings_f64(), km);
      if (model.k_reduced())
        log::warn("slide '" + e.slide_id + "': " + std::to_string(pack.n_patches()) +
                  " patches < k, using k=" + std::to_string(model.k));
      write_cluster_model(model, cluster_model_path(config.clusters_dir, e.slide_id));
    } catch (const Error& err) {
      rethrow_with_context(err, "slide '" + e.slide_id + "'");
    }
  });
}

void run_encode_stage(const Manifest& manifest, const PipelineConfig& config) {
  if (config.representations_dir.empty()) fail("encode: no output directory (representations_dir or work_dir)");
  fs::create_directories(config.representations_dir);
  std::vector<std::size_t> ks(manifest.size());
  parallel_for(manifest.size(), config.threads, [&](std::size_t i) {
    const auto& e = manifest.entries[i];
    try {
      const SlidePack pack = manifest.load(i);
      const ClusterModel clusters = read_cluster_model(cluster_model_path(config.clusters_dir, e.slide_id));
      FvConfig fv = config.fv;
      fv.seed = derive_seed(config.seed, seed_stream::encode, i);
      const SlideRepresentation rep = encode_slide(pack, clusters, fv);
      ks[i] = rep.k();
      write_representation(rep, representation_path(config.representations_dir, e.slide_id));
    } catch (const Error& err) {
      rethrow_with_context(err, "slide '" + e.slide_id + "'");
    }
  });
  for (std::size_t i = 0; i < ks.size(); ++i)
    if (ks[i] != ks.front())
      fail("slide '" + manifest.entries[i].slide_id + "' has " + std::to_string(ks[i]) +
           " clusters, others have " + std::to_string(ks.front()) + "; bags must share k");
}

SplitAssignment resolve_split(const Manifest& manifest, const PipelineConfig& config) {
  if (!config.split_file.empty()) return read_split_file(manifest, config.split_file);
  return stratified_split(manifest, config.fractions, derive_seed(config.seed, seed_stream::split));
}

TrainedClassifier run_train_stage(const Manifest& manifest, const SplitAssignment& split,
                                  const PipelineConfig& config) {
  if (config.model_path.empty()) fail("train: no model output path (model or work_dir)");
  const Dataset ds = load_dataset(manifest, config.representations_dir, split);
  TrainConfig tc = config.train;
  tc.seed = derive_seed(config.seed, seed_stream::train);
  TrainedClassifier trained = train(ds, tc);
  write_model(trained, config.model_path);
  if (!trained.train_loss.empty())
    log::info("train: final loss " + fmt_double(trained.train_loss.back()) + ", best epoch " +
              std::to_string(trained.best_epoch));
  return trained;
}

std::vector<MetricsReport> run_eval_stage(const Manifest& manifest, const SplitAssignment& split,
                                          const PipelineConfig& config, const std::vector<Split>& splits) {
  const TrainedClassifier trained = read_model(config.model_path);
  const Dataset ds = load_dataset(manifest, config.representations_dir, split);
  std::vector<MetricsReport> reports;
  for (Split s : splits) reports.push_back(evaluate(trained.model, ds, s));
  if (!config.metrics_path.empty()) write_metrics_csv(reports, config.metrics_path);
  return reports;
}

ElbowReport run_elbow(const Manifest& manifest, const PipelineConfig& config) {
  std::vector<std::vector<double>> curves(manifest.size());
  parallel_for(manifest.size(), config.threads, [&](std::size_t i) {
    const SlidePack pack = manifest.load(i);
    std::vector<int> ks;
    for (int k : config.elbow_ks) ks.push_back(k);
    KmeansConfig km = config.kmeans;
    km.seed = derive_seed(config.seed, seed_stream::cluster, i);
    curves[i] = elbow_select(pack.embeddings_f64(), ks, km).wcss_curve;
  });
  ElbowReport total;
  total.candidate_ks = config.elbow_ks;
  total.wcss_curve.assign(config.elbow_ks.size(), 0.0);
  for (const auto& c : curves)
    for (std::size_t j = 0; j < c.size(); ++j) total.wcss_curve[j] += c[j];
  for (std::size_t j = 1; j < total.wcss_curve.size(); ++j)
    if (total.wcss_curve[j] > total.wcss_curve[j - 1]) total.monotone = false;
  total.chosen_k = elbow_choose(total.candidate_ks, total.wcss_curve);
  return total;
}

namespace {

class StageCache {
 public:
  explicit StageCache(fs::path work_dir) : dir_(std::move(work_dir)) {}

  bool fresh(const std::string& stage, const std::string& key) const {
    const auto p = stamp(stage);
    if (!fs::exists(p)) return false;
    return binio::read_file(p) == key;
  }

  void record(const std::string& stage, const std::string& key) const { binio::write_file(stamp(stage), key); }
  void invalidate(const std::string& stage) const { fs::remove(stamp(stage)); }

 private:
  fs::path stamp(const std::string& stage) const { return dir_ / ".stamps" / (stage + ".sha256"); }
  fs::path dir_;
};

bool all_exist(const Manifest& manifest, const fs::path& dir, const std::string& ext) {
  for (const auto& e : manifest.entries)
    if (!fs::exists(dir / (e.slide_id + ext))) return false;
  return true;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) {
  if (config.work_dir.empty()) fail("run: work_dir is required");
  if (config.manifest.empty()) fail("run: manifest is required");
  fs::create_directories(config.work_dir);
  const Manifest manifest = with_stage("load", [&] { return load_manifest(config.manifest); });
  const StageCache cache(config.work_dir);
  PipelineResult result;

  ContentHash h;
  h.add_field("inputs/v1").add_file(config.manifest);
  if (fs::exists(config.manifest.parent_path() / kClassNamesFile))
    h.add_file(config.manifest.parent_path() / kClassNamesFile);
  for (const auto& e : manifest.entries) h.add_field(e.slide_id).add_file(manifest.resolve(e));
  const std::string inputs_key = h.hex();

  auto run_stage = [&](const std::string& name, const std::string& key, bool outputs_present, auto&& fn) {
    if (outputs_present && cache.fresh(name, key)) {
      log::info("stage " + name + ": cached");
      result.stages.push_back({name, true});
      return;
    }
    cache.invalidate(name);
    log::info("stage " + name + ": running");
    with_stage(name, [&] {
      fn();
      return 0;
    });
    cache.record(name, key);
    result.stages.push_back({name, false});
  };

  const std::string cluster_key =
      h.add_field(inputs_key).add_field(describe(config.kmeans)).add_field(std::to_string(config.seed)).hex();
  run_stage("cluster", cluster_key, all_exist(manifest, config.clusters_dir, ".kmc"),
            [&] { run_cluster_stage(manifest, config); });

  const std::string encode_key =
      h.add_field(cluster_key).add_field(describe(config.fv)).add_field(std::to_string(config.seed)).hex();
  run_stage("encode", encode_key, all_exist(manifest, config.representations_dir, ".fvr"),
            [&] { run_encode_stage(manifest, config); });

  const SplitAssignment split = with_stage("split", [&] { return resolve_split(manifest, config); });
  const fs::path split_out = config.work_dir / "splits.csv";
  if (config.split_file.empty()) write_split_file(manifest, split, split_out);

  std::ostringstream split_desc;
  for (auto s : split) split_desc << static_cast<int>(s);
  const std::string train_key = h.add_field(encode_key)
                                    .add_field(split_desc.str())
                                    .add_field(describe(config.train))
                                    .add_field(std::to_string(config.seed))
                                    .hex();
  run_stage("train", train_key, fs::exists(config.model_path),
            [&] { run_train_stage(manifest, split, config); });

  std::vector<Split> splits = {Split::train};
  if (std::find(split.begin(), split.end(), Split::val) != split.end()) splits.push_back(Split::val);
  splits.push_back(Split::test);
  const std::string eval_key = h.add_field(train_key).add_field("eval/v1").hex();
  run_stage("eval", eval_key, fs::exists(config.metrics_path),
            [&] { result.all = run_eval_stage(manifest, split, config, splits); });
  if (result.all.empty()) result.all = read_metrics_csv(config.metrics_path);
  for (const auto& r : result.all)
    if (r.split == "test") result.test = r;
  std::fputs(format_metrics_csv(result.all).c_str(), stderr);
  return result;
}

}  // namespace fvslide
