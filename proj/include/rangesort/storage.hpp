#pragma once

// Benchmark datasets and the independent checks used to validate sorter
// output: an in-memory oracle sort, a single-pass sortedness verifier, and
// an order-independent multiset digest.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rangesort/key_order.hpp"

namespace rangesort {

namespace fs = std::filesystem;

enum class Distribution { kUniform, kZipf, kDuplicateHeavy, kSorted, kReversed };

struct DatasetSpec {
  std::uint64_t totalBytes = 0;
  Distribution distribution = Distribution::kUniform;
  double zipfSkew = 1.2;
  double hotKeyFraction = 0.5;
  int keyWidth = 10;
  std::uint64_t seed = 1;

  void validate() const;
  // "uniform", "zipf:1.2", "dup:0.3", "sorted", "reversed".
  std::string distribution_text() const;
  void set_distribution(std::string_view text);
};

// Sum of two SipHash lanes over every record, modulo 2^64 per lane.
struct MultisetDigest {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;

  void add(std::string_view record);
  std::string hex() const;
  static MultisetDigest from_hex(std::string_view text);

  friend bool operator==(const MultisetDigest&, const MultisetDigest&) = default;
};

struct VerificationResult {
  bool sorted = true;
  // Offset (in the concatenated stream) of the first record smaller than
  // its predecessor.
  std::optional<std::uint64_t> firstViolationOffset;
  MultisetDigest multisetHash;
  std::uint64_t recordCount = 0;
};

// Incremental form of verify_sorted.
class Verifier {
 public:
  explicit Verifier(KeyOrder order = {}) : order_(order) {}
  void feed(std::string_view record, std::uint64_t offset);
  const VerificationResult& result() const noexcept { return result_; }

 private:
  KeyOrder order_;
  std::string previous_;
  bool havePrevious_ = false;
  VerificationResult result_;
};

inline constexpr std::uint64_t kVerifyMaxRecordBytes = 1 << 20;
inline constexpr std::uint64_t kOracleSizeLimit = 1ull << 30;

// Treats `files` as one concatenated stream of records.
VerificationResult verify_sorted(std::span<const fs::path> files, KeyOrder order = {});
VerificationResult verify_sorted(const fs::path& file, KeyOrder order = {});

// Reference sort: loads the whole file and sorts it with one std::sort call.
void oracle_sort(const fs::path& input, const fs::path& output, KeyOrder order = {},
                 std::uint64_t sizeLimit = kOracleSizeLimit);

struct DatasetManifest {
  DatasetSpec spec;
  std::uint64_t records = 0;
  std::uint64_t bytes = 0;
  MultisetDigest multisetHash;
};

fs::path manifest_path_for(const fs::path& dataset);
void write_manifest(const DatasetManifest& manifest, const fs::path& path);
DatasetManifest read_manifest(const fs::path& path);

// Writes `path` and `<path>.manifest`. Keys are zero-padded decimals of
// spec.keyWidth digits, one per line; the file holds
// floor(totalBytes / (keyWidth + 1)) records.
DatasetManifest generate_dataset(const DatasetSpec& spec, const fs::path& path);

// Number of distinct ranks the zipf generator draws from; rank r is
// written as key r.
std::uint64_t zipf_rank_count(int keyWidth);

}  // namespace rangesort
