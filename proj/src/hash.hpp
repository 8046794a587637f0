#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

namespace fvslide {

// Incremental SHA-256 used for stage cache keys.
class ContentHash {
 public:
  ContentHash();
  ~ContentHash();
  ContentHash(const ContentHash&) = delete;
  ContentHash& operator=(const ContentHash&) = delete;

  ContentHash& add(std::string_view bytes);
  // Length-prefixed so ("ab","c") and ("a","bc") differ.
  ContentHash& add_field(std::string_view bytes);
  ContentHash& add_file(const std::filesystem::path& path);
  std::string hex();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace fvslide
