// fvslide command-line interface. Every subcommand builds an fvs_config
// from --config plus per-flag overrides and calls the C API.

#include <cstdio>
#include <cstdlib>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fvslide/fvslide.h"

namespace {

struct Override {
  std::string key;
  std::string value;
};

class Command {
 public:
  Command(CLI::App& app, const std::string& name, const std::string& help)
      : sub_(app.add_subcommand(name, help)) {}

  Command& opt(const std::string& flag, const std::string& key, const std::string& help) {
    auto& slot = values_[key];
    sub_->add_option(flag, slot.value, help);
    slot.key = key;
    flags_.emplace_back(flag, key);
    return *this;
  }

  CLI::App* app() const { return sub_; }

  // Applies only the flags the user actually passed.
  bool apply(fvs_config* config) const {
    for (const auto& [flag, key] : flags_) {
      auto* option = sub_->get_option(flag);
      if (option->count() == 0) continue;
      if (fvs_config_set(config, key.c_str(), values_.at(key).value.c_str()) != FVS_OK) {
        std::fprintf(stderr, "fvslide: %s\n", fvs_last_error());
        return false;
      }
    }
    return true;
  }

 private:
  CLI::App* sub_;
  std::map<std::string, Override> values_;
  std::vector<std::pair<std::string, std::string>> flags_;
};

int report(fvs_status status) {
  if (status != FVS_OK) std::fprintf(stderr, "fvslide: error: %s\n", fvs_last_error());
  return static_cast<int>(status == FVS_ERR_INTERNAL ? FVS_ERR_VALIDATION : status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fvslide: cluster, Fisher-vector encode and classify slide embedding bags"};
  app.require_subcommand(1);
  std::string config_path;
  std::string threads;
  int log_level = 1;
  app.add_option("--config", config_path, "key = value settings file");
  app.add_option("--threads", threads, "worker threads for per-slide stages");
  auto* log_opt = app.add_option("--log-level", log_level, "0 debug .. 4 quiet (overrides log_level)")
                      ->check(CLI::Range(0, 4));

  std::vector<std::unique_ptr<Command>> commands;
  auto make = [&](const std::string& name, const std::string& help) -> Command& {
    commands.push_back(std::make_unique<Command>(app, name, help));
    return *commands.back();
  };

  make("synth", "generate a synthetic SlidePack dataset")
      .opt("--out-dir", "synth_out_dir", "output directory")
      .opt("--classes", "synth_classes", "number of classes")
      .opt("--slides-per-class", "synth_slides_per_class", "slides per class")
      .opt("--patches-min", "synth_patches_min", "minimum patches per slide")
      .opt("--patches-max", "synth_patches_max", "maximum patches per slide")
      .opt("--dim", "synth_dim", "embedding dimension")
      .opt("--phenotypes", "synth_phenotypes", "latent phenotypes per class")
      .opt("--separation", "synth_separation", "class separation in phenotype sigmas")
      .opt("--phenotype-sigma", "synth_phenotype_sigma", "phenotype spread")
      .opt("--seed", "seed", "root seed");

  make("cluster", "per-slide k-means")
      .opt("--manifest", "manifest", "manifest CSV")
      .opt("--k", "k", "clusters per slide (default 10)")
      .opt("--seed", "seed", "root seed")
      .opt("--out-dir", "clusters_dir", "cluster model output directory");

  make("elbow", "WCSS curve over candidate k and the elbow choice")
      .opt("--manifest", "manifest", "manifest CSV")
      .opt("--ks", "elbow_ks", "comma-separated candidate ks")
      .opt("--seed", "seed", "root seed");

  make("encode", "per-cluster Fisher vectors for every slide")
      .opt("--manifest", "manifest", "manifest CSV")
      .opt("--clusters-dir", "clusters_dir", "cluster model directory")
      .opt("--m", "m", "mixture components per cluster (default 5)")
      .opt("--pi", "pi", "mixture weight (default 0.2)")
      .opt("--sigma", "sigma", "isotropic scale (default 0.1)")
      .opt("--normalize", "normalize", "none | power_l2")
      .opt("--second-order", "second_order", "centered | paper_literal")
      .opt("--seed", "seed", "root seed")
      .opt("--out-dir", "representations_dir", "representation output directory");

  make("train", "train the attention-MIL classifier")
      .opt("--representations-dir", "representations_dir", "representation directory")
      .opt("--manifest", "manifest", "manifest CSV")
      .opt("--split-file", "split_file", "CSV slide_id,split (default: stratified 60/20/20)")
      .opt("--lr", "lr", "AdamW learning rate (default 0.001)")
      .opt("--weight-decay", "weight_decay", "AdamW weight decay (default 0.0001)")
      .opt("--epochs", "epochs", "training epochs")
      .opt("--batch-size", "batch_size", "bags per step")
      .opt("--seed", "seed", "root seed")
      .opt("--mixup-alpha", "mixup_alpha", "Beta(alpha, alpha) mixup (default 0.2)")
      .opt("--jitter", "jitter", "jitter level (default 0.01)")
      .opt("--scale-low", "scale_low", "feature scaling lower bound (default 0.9)")
      .opt("--scale-high", "scale_high", "feature scaling upper bound (default 1.0)")
      .opt("--head", "head", "amil | mlp")
      .opt("--out", "model", "model output file");

  make("eval", "evaluate a trained model on one split")
      .opt("--model", "model", "model file")
      .opt("--representations-dir", "representations_dir", "representation directory")
      .opt("--manifest", "manifest", "manifest CSV")
      .opt("--split-file", "split_file", "CSV slide_id,split (default: stratified 60/20/20)")
      .opt("--split", "split", "train | val | test")
      .opt("--seed", "seed", "root seed (used for the default split)")
      .opt("--out", "metrics_out", "metrics CSV output (default metrics.csv)");

  make("run", "cluster, encode, train and eval with stage caching")
      .opt("--manifest", "manifest", "manifest CSV")
      .opt("--work-dir", "work_dir", "directory for intermediate artifacts")
      .opt("--seed", "seed", "root seed")
      .opt("--k", "k", "clusters per slide")
      .opt("--m", "m", "mixture components per cluster")
      .opt("--epochs", "epochs", "training epochs")
      .opt("--split-file", "split_file", "CSV slide_id,split");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  fvs_set_log_level(log_level);

  fvs_config* raw = nullptr;
  if (fvs_config_create(&raw) != FVS_OK) return report(FVS_ERR_INTERNAL);
  std::unique_ptr<fvs_config, decltype(&fvs_config_destroy)> config(raw, &fvs_config_destroy);
  if (!config_path.empty()) {
    if (auto s = fvs_config_load(config.get(), config_path.c_str()); s != FVS_OK) return report(s);
    char buf[16] = {};
    size_t needed = 0;
    if (log_opt->count() == 0 && fvs_config_get(config.get(), "log_level", buf, sizeof buf, &needed) == FVS_OK &&
        buf[0] != '\0') {
      char* end = nullptr;
      const long level = std::strtol(buf, &end, 10);
      if (*end != '\0' || level < 0 || level > 4) {
        std::fprintf(stderr, "error: log_level must be 0..4, got '%s'\n", buf);
        return 1;
      }
      fvs_set_log_level(static_cast<int>(level));
    }
  }
  if (!threads.empty()) {
    if (auto s = fvs_config_set(config.get(), "threads", threads.c_str()); s != FVS_OK) return report(s);
  }

  for (const auto& cmd : commands) {
    if (!cmd->app()->parsed()) continue;
    if (!cmd->apply(config.get())) return 1;
    const std::string name = cmd->app()->get_name();

    if (name == "synth") return report(fvs_synth(config.get()));
    if (name == "cluster") return report(fvs_cluster(config.get()));
    if (name == "encode") return report(fvs_encode(config.get()));
    if (name == "train") return report(fvs_train(config.get()));

    if (name == "elbow") {
      fvs_elbow* elbow = nullptr;
      if (auto s = fvs_elbow_run(config.get(), &elbow); s != FVS_OK) return report(s);
      std::printf("k,wcss\n");
      for (size_t i = 0; i < fvs_elbow_count(elbow); ++i)
        std::printf("%d,%.10g\n", fvs_elbow_k(elbow, i), fvs_elbow_wcss(elbow, i));
      std::printf("chosen_k,%d\n", fvs_elbow_chosen_k(elbow));
      fvs_elbow_destroy(elbow);
      return 0;
    }
    if (name == "eval") {
      size_t needed = 0;
      fvs_config_get(config.get(), "metrics_out", nullptr, 0, &needed);
      if (needed <= 1) fvs_config_set(config.get(), "metrics_out", "metrics.csv");
      fvs_metrics* metrics = nullptr;
      if (auto s = fvs_eval(config.get(), &metrics); s != FVS_OK) return report(s);
      fvs_metrics_destroy(metrics);
      return 0;
    }
    if (name == "run") {
      fvs_metrics* metrics = nullptr;
      if (auto s = fvs_run(config.get(), &metrics); s != FVS_OK) return report(s);
      fvs_metrics_destroy(metrics);
      return 0;
    }
  }
  return 1;
}
