#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rangesort/key_order.hpp"
#include "rangesort/storage.hpp"

namespace rangesort::testing {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);
void write_lines(const fs::path& path, const std::vector<std::string>& lines);
std::vector<std::string> read_lines(const fs::path& path);
std::string concat_files(const std::vector<fs::path>& files);

// Bytes of oracle_sort(input).
std::string oracle_sorted_text(const fs::path& input, KeyOrder order = {});

// Relative path -> file contents for every regular file below `root`.
std::map<std::string, std::string> snapshot_tree(const fs::path& root);

DatasetManifest make_dataset(const fs::path& path, std::uint64_t bytes, Distribution dist,
                             std::uint64_t seed, double parameter = 0, int keyWidth = 10);

}  // namespace rangesort::testing
