#include "testing/fixtures.hpp"

#include <stdlib.h>

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rangesort::testing {

TempDir::TempDir() {
  std::string pattern = (fs::temp_directory_path() / "rangesort-test-XXXXXX").string();
  if (::mkdtemp(pattern.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
  path_ = pattern;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_text(path, text);
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::istringstream in(read_text(path));
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

std::string concat_files(const std::vector<fs::path>& files) {
  std::string out;
  for (const auto& f : files) out += read_text(f);
  return out;
}

std::string oracle_sorted_text(const fs::path& input, KeyOrder order) {
  fs::path out = input;
  out += ".oracle";
  oracle_sort(input, out, order);
  std::string text = read_text(out);
  fs::remove(out);
  return text;
}

std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
  std::map<std::string, std::string> tree;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    const std::string rel = fs::relative(entry.path(), root).string();
    tree[rel] = entry.is_regular_file() ? read_text(entry.path()) : std::string("<dir>");
  }
  return tree;
}

DatasetManifest make_dataset(const fs::path& path, std::uint64_t bytes, Distribution dist,
                             std::uint64_t seed, double parameter, int keyWidth) {
  DatasetSpec spec;
  spec.totalBytes = bytes;
  spec.distribution = dist;
  spec.seed = seed;
  spec.keyWidth = keyWidth;
  if (dist == Distribution::kZipf && parameter > 0) spec.zipfSkew = parameter;
  if (dist == Distribution::kDuplicateHeavy && parameter > 0) spec.hotKeyFraction = parameter;
  return generate_dataset(spec, path);
}

}  // namespace rangesort::testing
