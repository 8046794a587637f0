#include "config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "binary_io.hpp"
#include "error.hpp"

namespace fvslide {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

const std::vector<std::string>& KeyValueConfig::known_keys() {
  static const std::vector<std::string> keys = {
      // paths and global
      "manifest", "work_dir", "seed", "threads", "log_level",
      "clusters_dir", "representations_dir", "model", "split_file", "metrics_out",
      // clustering
      "k", "kmeans_max_iters", "kmeans_rel_tol", "kmeans_n_init", "cluster_scope", "elbow_ks",
      // fisher vectors
      "m", "pi", "sigma", "gmm_center_iters", "normalize", "second_order", "scaling",
      "center_fit",
      // training
      "lr", "weight_decay", "beta1", "beta2", "eps", "epochs", "batch_size", "mixup_alpha",
      "jitter", "jitter_distribution", "scale_low", "scale_high", "scale_per_instance",
      "hidden", "attn_dim", "head",
      // splits and evaluation
      "train_frac", "val_frac", "split",
      // synthetic data
      "synth_out_dir", "synth_classes", "synth_slides_per_class", "synth_patches_min",
      "synth_patches_max", "synth_dim", "synth_phenotypes", "synth_separation",
      "synth_phenotype_sigma",
  };
  return keys;
}

void KeyValueConfig::load_file(const std::filesystem::path& path) {
  parse(binio::read_file(path), path.string());
}

void KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(origin + ":" + std::to_string(ln) + ": expected key = value");
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    try {
      set(trim(line.substr(0, eq)), value);
    } catch (const Error& e) {
      rethrow_with_context(e, origin + ":" + std::to_string(ln));
    }
  }
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  const auto& keys = known_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) fail("unknown config key '" + key + "'");
  values_[key] = value;
}

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get(key);
  char* end = nullptr;
  errno = 0;
  const long long out = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno != 0) fail("config '" + key + "': expected integer, got '" + v + "'");
  return out;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get(key);
  char* end = nullptr;
  errno = 0;
  const unsigned long long out = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || v.front() == '-' || *end != '\0' || errno != 0)
    fail("config '" + key + "': expected unsigned integer, got '" + v + "'");
  return out;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get(key);
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || !std::isfinite(out)) fail("config '" + key + "': expected number, got '" + v + "'");
  return out;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail("config '" + key + "': expected boolean, got '" + v + "'");
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<int> out;
  std::istringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    char* end = nullptr;
    const long v = std::strtol(item.c_str(), &end, 10);
    if (*end != '\0') fail("config '" + key + "': bad list item '" + item + "'");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

}  // namespace fvslide
