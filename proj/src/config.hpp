#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fvslide {

// Flat key=value settings. Lines look like `key = value`; '#' starts a
// comment; values may be double-quoted; [section] headers are ignored.
// Unknown keys are rejected so typos do not silently fall back to defaults.
class KeyValueConfig {
 public:
  static const std::vector<std::string>& known_keys();

  void load_file(const std::filesystem::path& path);
  void parse(const std::string& text, const std::string& origin = "<config>");
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback = "") const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace fvslide
