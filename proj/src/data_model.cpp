#include "data_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace fvslide {
namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

long long parse_integer(const std::string& text, const std::string& context) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    fail(context + ": expected integer, got '" + text + "'");
  }
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail_io(path.string() + ": cannot open");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

SlidepackHeader parse_header(binio::Reader& r) {
  if (r.remaining() < 4 || r.take(4) != std::string_view(kSlidepackMagic, 4))
    fail(r.context() + ": not a slidepack");
  const auto version = r.u32();
  if (version != kSlidepackVersion)
    fail(r.context() + ": unsupported version " + std::to_string(version));
  SlidepackHeader h;
  h.n_patches = r.u32();
  h.dim = r.u32();
  return h;
}

}  // namespace

void validate_slidepack(const SlidePack& pack) {
  if (pack.embeddings.rows() == 0) fail("slide '" + pack.slide_id + "': empty slide");
  if (pack.embeddings.cols() == 0) fail("slide '" + pack.slide_id + "': zero-dimensional embeddings");
  if (pack.label < 0) fail("slide '" + pack.slide_id + "': negative label");
  if (!pack.embeddings.allFinite())
    fail("slide '" + pack.slide_id + "': corrupt embeddings (non-finite value)");
}

void write_slidepack(const SlidePack& pack, const fs::path& path) {
  validate_slidepack(pack);
  std::string out;
  out.reserve(kSlidepackHeaderBytes + 4 * pack.embeddings.size());
  binio::put_magic(out, std::string_view(kSlidepackMagic, 4));
  binio::put_u32(out, kSlidepackVersion);
  binio::put_u32(out, static_cast<std::uint32_t>(pack.n_patches()));
  binio::put_u32(out, static_cast<std::uint32_t>(pack.dim()));
  const float* data = pack.embeddings.data();
  for (Eigen::Index i = 0; i < pack.embeddings.size(); ++i) binio::put_f32(out, data[i]);
  binio::write_file(path, out);
}

SlidepackHeader read_slidepack_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io(path.string() + ": missing slidepack");
  std::string bytes(kSlidepackHeaderBytes, '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  bytes.resize(static_cast<std::size_t>(in.gcount()));
  binio::Reader r(bytes, path.string());
  return parse_header(r);
}

SlidePack read_slidepack(const fs::path& path) {
  const std::string bytes = binio::read_file(path);
  binio::Reader r(bytes, path.string());
  const auto h = parse_header(r);
  if (h.n_patches == 0) fail(path.string() + ": empty slide");
  if (h.dim == 0) fail(path.string() + ": zero-dimensional embeddings");
  const std::size_t count = std::size_t{h.n_patches} * h.dim;
  if (r.remaining() < 4 * count) fail(path.string() + ": truncated");
  if (r.remaining() > 4 * count) fail(path.string() + ": trailing bytes after payload");

  SlidePack pack;
  pack.slide_id = path.stem().string();
  pack.embeddings.resize(h.n_patches, h.dim);
  float* data = pack.embeddings.data();
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = r.f32();
    if (!std::isfinite(data[i])) fail(path.string() + ": corrupt embeddings");
  }
  return pack;
}

SlidePack Manifest::load(std::size_t i) const {
  const auto& e = entries.at(i);
  SlidePack pack = read_slidepack(resolve(e));
  pack.slide_id = e.slide_id;
  pack.label = e.label;
  return pack;
}

Manifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) fail_io(path.string() + ": manifest not found");
  const auto lines = read_lines(path);
  if (lines.empty() || trim(lines.front()) != kManifestHeader)
    fail(path.string() + ": expected header '" + std::string(kManifestHeader) + "'");

  Manifest manifest;
  manifest.base_dir = path.parent_path();
  std::set<std::string> seen;
  int max_label = -1;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (trim(lines[ln]).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(ln + 1);
    const auto fields = split_csv_line(lines[ln]);
    if (fields.size() != 5) fail(where + ": expected 5 fields");
    ManifestEntry e;
    e.slide_id = trim(fields[0]);
    if (e.slide_id.empty()) fail(where + ": empty slide_id");
    const auto label = parse_integer(trim(fields[1]), where);
    if (label < 0) fail(where + ": negative label");
    e.label = static_cast<int>(label);
    e.path = trim(fields[2]);
    const auto n = parse_integer(trim(fields[3]), where);
    const auto d = parse_integer(trim(fields[4]), where);
    if (n < 1 || d < 1) fail(where + ": n_patches and dim must be >= 1");
    e.n_patches = static_cast<std::size_t>(n);
    e.dim = static_cast<std::size_t>(d);
    if (!seen.insert(e.slide_id).second) fail(where + ": duplicate slide '" + e.slide_id + "'");
    if (!manifest.entries.empty() && e.dim != manifest.entries.front().dim)
      fail(where + ": inconsistent dim (" + std::to_string(e.dim) + " vs " +
           std::to_string(manifest.entries.front().dim) + ")");

    const fs::path file = manifest.base_dir / e.path;
    if (!fs::exists(file)) fail_io(where + ": missing slidepack " + file.string());
    const auto header = read_slidepack_header(file);
    if (header.n_patches != e.n_patches || header.dim != e.dim)
      fail(where + ": slidepack header (" + std::to_string(header.n_patches) + ", " +
           std::to_string(header.dim) + ") does not match manifest (" +
           std::to_string(e.n_patches) + ", " + std::to_string(e.dim) + ")");
    max_label = std::max(max_label, e.label);
    manifest.entries.push_back(std::move(e));
  }
  if (manifest.entries.empty()) fail(path.string() + ": manifest has no entries");

  const fs::path classes = manifest.base_dir / kClassNamesFile;
  if (fs::exists(classes)) {
    for (auto& line : read_lines(classes)) {
      line = trim(line);
      if (!line.empty()) manifest.class_names.push_back(line);
    }
  } else {
    for (int c = 0; c <= max_label; ++c) manifest.class_names.push_back("class" + std::to_string(c));
  }
  if (max_label >= manifest.n_classes())
    fail(path.string() + ": label " + std::to_string(max_label) + " outside " +
         std::to_string(manifest.n_classes()) + " class names");
  return manifest;
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  std::ostringstream out;
  out << kManifestHeader << '\n';
  for (const auto& e : manifest.entries)
    out << e.slide_id << ',' << e.label << ',' << e.path << ',' << e.n_patches << ',' << e.dim
        << '\n';
  binio::write_file(path, out.str());
  std::ostringstream names;
  for (const auto& n : manifest.class_names) names << n << '\n';
  binio::write_file(path.parent_path() / kClassNamesFile, names.str());
}

void validate_representation(const SlideRepresentation& rep) {
  if (rep.fvs.cols() != static_cast<Eigen::Index>(2 * rep.m * rep.dim))
    fail("representation '" + rep.slide_id + "': fisher vector length != 2*m*dim");
  if (rep.cluster_order_key.size() != rep.k())
    fail("representation '" + rep.slide_id + "': order key length != k");
  if (!rep.fvs.allFinite()) fail("representation '" + rep.slide_id + "': non-finite entries");
}

void write_representation(const SlideRepresentation& rep, const fs::path& path) {
  validate_representation(rep);
  std::string out;
  binio::put_magic(out, std::string_view(kRepresentationMagic, 4));
  binio::put_u32(out, kRepresentationVersion);
  binio::put_u32(out, static_cast<std::uint32_t>(rep.k()));
  binio::put_u32(out, rep.m);
  binio::put_u32(out, rep.dim);
  binio::put_u32(out, rep.flags);
  for (Eigen::Index i = 0; i < rep.fvs.size(); ++i) binio::put_f64(out, rep.fvs.data()[i]);
  for (auto key : rep.cluster_order_key) binio::put_u32(out, key);
  binio::write_file(path, out);
}

SlideRepresentation read_representation(const fs::path& path) {
  const std::string bytes = binio::read_file(path);
  binio::Reader r(bytes, path.string());
  if (r.remaining() < 4 || r.take(4) != std::string_view(kRepresentationMagic, 4))
    fail(path.string() + ": not a representation file");
  if (r.u32() != kRepresentationVersion) fail(path.string() + ": unsupported version");
  SlideRepresentation rep;
  rep.slide_id = path.stem().string();
  const auto k = r.u32();
  rep.m = r.u32();
  rep.dim = r.u32();
  rep.flags = r.u32();
  const std::size_t len = 2 * std::size_t{rep.m} * rep.dim;
  if (r.remaining() != k * len * 8 + k * 4) fail(path.string() + ": truncated");
  rep.fvs.resize(k, static_cast<Eigen::Index>(len));
  for (Eigen::Index i = 0; i < rep.fvs.size(); ++i) rep.fvs.data()[i] = r.f64();
  rep.cluster_order_key.resize(k);
  for (auto& key : rep.cluster_order_key) key = r.u32();
  validate_representation(rep);
  return rep;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val" || name == "validation") return Split::val;
  if (name == "test") return Split::test;
  fail("unknown split '" + name + "'");
}

SplitAssignment stratified_split(const Manifest& manifest, SplitFractions fractions,
                                 std::uint64_t seed) {
  if (fractions.train <= 0 || fractions.val < 0 || fractions.train + fractions.val > 1.0)
    fail("split fractions must satisfy train > 0, val >= 0, train + val <= 1");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < manifest.size(); ++i) by_class[manifest.entries[i].label].push_back(i);

  SplitAssignment split(manifest.size(), Split::test);
  for (auto& [label, members] : by_class) {
    Rng rng = Rng(seed).split(static_cast<std::uint64_t>(label));
    rng.shuffle(members);
    const double n = static_cast<double>(members.size());
    const auto n_train = static_cast<std::size_t>(std::llround(fractions.train * n));
    const auto n_val = std::min(members.size() - std::min(n_train, members.size()),
                                static_cast<std::size_t>(std::llround(fractions.val * n)));
    for (std::size_t j = 0; j < members.size(); ++j) {
      if (j < n_train) split[members[j]] = Split::train;
      else if (j < n_train + n_val) split[members[j]] = Split::val;
    }
  }
  return split;
}

void write_split_file(const Manifest& manifest, const SplitAssignment& split,
                      const fs::path& path) {
  std::ostringstream out;
  out << "slide_id,split\n";
  for (std::size_t i = 0; i < manifest.size(); ++i)
    out << manifest.entries[i].slide_id << ',' << split_name(split[i]) << '\n';
  binio::write_file(path, out.str());
}

SplitAssignment read_split_file(const Manifest& manifest, const fs::path& path) {
  const auto lines = read_lines(path);
  std::map<std::string, Split> by_id;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const auto fields = split_csv_line(lines[ln]);
    if (fields.empty() || trim(lines[ln]).empty()) continue;
    if (ln == 0 && trim(fields[0]) == "slide_id") continue;
    if (fields.size() != 2) fail(path.string() + ":" + std::to_string(ln + 1) + ": expected slide_id,split");
    if (!by_id.emplace(trim(fields[0]), parse_split(trim(fields[1]))).second)
      fail(path.string() + ": slide '" + trim(fields[0]) + "' assigned twice");
  }
  SplitAssignment split;
  split.reserve(manifest.size());
  for (const auto& e : manifest.entries) {
    auto it = by_id.find(e.slide_id);
    if (it == by_id.end()) fail(path.string() + ": slide '" + e.slide_id + "' has no split");
    split.push_back(it->second);
    by_id.erase(it);
  }
  if (!by_id.empty()) fail(path.string() + ": slide '" + by_id.begin()->first + "' not in manifest");
  return split;
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

void Dataset::validate() const {
  if (representations.size() != labels.size() || labels.size() != split.size())
    fail("dataset: representations, labels and splits are not aligned");
  for (std::size_t i = 0; i < representations.size(); ++i) {
    const auto& r = representations[i];
    if (r.k() != representations.front().k() || r.fv_length() != representations.front().fv_length())
      fail("dataset: slide '" + r.slide_id + "' bag shape differs from the first slide");
    if (labels[i] < 0 || labels[i] >= n_classes) fail("dataset: label out of range for '" + r.slide_id + "'");
  }
}

fs::path representation_path(const fs::path& dir, const std::string& slide_id) {
  return dir / (slide_id + ".fvr");
}

Dataset load_dataset(const Manifest& manifest, const fs::path& representations_dir,
                     const SplitAssignment& split) {
  if (split.size() != manifest.size()) fail("split does not cover the manifest");
  Dataset ds;
  ds.n_classes = manifest.n_classes();
  ds.split = split;
  for (const auto& e : manifest.entries) {
    auto rep = read_representation(representation_path(representations_dir, e.slide_id));
    rep.slide_id = e.slide_id;
    ds.representations.push_back(std::move(rep));
    ds.labels.push_back(e.label);
  }
  ds.validate();
  return ds;
}

}  // namespace fvslide
