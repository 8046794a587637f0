#include "hash.hpp"

#include <openssl/evp.h>

#include "binary_io.hpp"
#include "error.hpp"

namespace fvslide {

struct ContentHash::Impl {
  EVP_MD_CTX* ctx = nullptr;
};

ContentHash::ContentHash() : impl_(std::make_unique<Impl>()) {
  impl_->ctx = EVP_MD_CTX_new();
  if (impl_->ctx == nullptr || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 init failed");
}

ContentHash::~ContentHash() {
  if (impl_ && impl_->ctx) EVP_MD_CTX_free(impl_->ctx);
}

ContentHash& ContentHash::add(std::string_view bytes) {
  EVP_DigestUpdate(impl_->ctx, bytes.data(), bytes.size());
  return *this;
}

ContentHash& ContentHash::add_field(std::string_view bytes) {
  std::string len;
  binio::put_u64(len, bytes.size());
  add(len);
  return add(bytes);
}

ContentHash& ContentHash::add_file(const std::filesystem::path& path) {
  return add_field(binio::read_file(path));
}

std::string ContentHash::hex() {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(impl_->ctx, digest, &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr);
  return out;
}

}  // namespace fvslide
