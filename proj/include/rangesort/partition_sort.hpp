#pragma once

// Multi-round range-partitioned sort.
//
// Each file-based round samples its target, splits it into segments at the
// division sites, and routes every record into per-segment intermediate
// files. A segment whose files total at most the memory threshold is sorted
// in memory and written to the result directory under its segment path.
// Larger segments are deferred: their identifiers go to the round's output
// files and their intermediate files become targets of the next round.
// Segments still deferred after the last file-based round are sorted by a
// shuffle job.
//
// Directory layout:
//   <middleDir>/<parent path>/<segment>/_0.DDDDD   intermediate files
//   <resultDir>/<p1>_<p2>_..._<pk>                 sorted segments
//   <outputDir>/round_<r>/<parent path>/part-r-NNNNN  deferred identifiers

#include <chrono>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "rangesort/error.hpp"
#include "rangesort/job_config.hpp"
#include "rangesort/record_io.hpp"
#include "rangesort/sampling.hpp"

namespace rangesort {

namespace fs = std::filesystem;

// Segment indices chosen across rounds, rendered "1_2_3".
class SegmentPath {
 public:
  SegmentPath() = default;
  explicit SegmentPath(std::vector<std::size_t> indices) : indices_(std::move(indices)) {}

  // Accepts only the canonical rendering; throws ValidationError otherwise.
  static SegmentPath parse(std::string_view text);

  std::string render() const;
  SegmentPath child(std::size_t index) const;
  bool is_prefix_of(const SegmentPath& other) const;

  const std::vector<std::size_t>& indices() const noexcept { return indices_; }
  bool empty() const noexcept { return indices_.empty(); }
  std::size_t depth() const noexcept { return indices_.size(); }

  friend auto operator<=>(const SegmentPath&, const SegmentPath&) = default;

 private:
  std::vector<std::size_t> indices_;
};

inline constexpr std::size_t kMaxNameAttempts = 64;
inline constexpr int kNameDigits = 5;
inline constexpr std::uint64_t kNameSpace = 100000;  // 10^kNameDigits

// Draws "_0.DDDDD" names (the leading fractional digits of a uniform draw
// in [0, 1)) until one is not in `existing`.
template <std::uniform_random_bit_generator Rng>
std::string gen_intermediate_name(Rng& rng, const std::set<std::string>& existing) {
  for (std::size_t attempt = 0; attempt < kMaxNameAttempts; ++attempt) {
    const double u = std::generate_canonical<double, std::numeric_limits<double>::digits>(rng);
    const auto digits =
        std::min<std::uint64_t>(kNameSpace - 1, static_cast<std::uint64_t>(u * kNameSpace));
    std::string name = fmt::format("_0.{:0{}d}", digits, kNameDigits);
    if (!existing.contains(name)) return name;
  }
  throw IoError(fmt::format("no free intermediate name after {} attempts", kMaxNameAttempts));
}

struct IntermediateFile {
  std::size_t segment = 0;
  fs::path path;
  std::uint64_t byteLength = 0;
};

// Routes every record of `split` into <middleDir>/<segment>/<random name>.
// One file per segment is created up front; empty ones are removed before
// returning. The result is ordered by segment.
std::vector<IntermediateFile> map_partition_task(const InputSplit& split,
                                                 const DivisionSites& sites,
                                                 const fs::path& middleDir, std::mt19937_64& rng,
                                                 std::uint64_t maxRecordBytes);

// segment mod reducerCount.
std::size_t partition_fn(std::size_t segment, std::size_t reducerCount);

enum class SegmentStatus { kSorted, kDeferred };

struct SegmentOutcome {
  SegmentPath segment;
  SegmentStatus status = SegmentStatus::kSorted;
  fs::path resultPath;  // set when sorted
  std::uint64_t bytes = 0;
  // Sorted by stream copy because every record was identical.
  bool guardTaken = false;
  // Bytes loaded into memory for the in-memory sort.
  std::uint64_t loadedBytes = 0;
};

// Sorts one segment in memory, or defers it when its files exceed
// cfg.memoryThreshold. Deferral writes the segment path as one line to
// `deferredOut`. An over-threshold segment made of a single repeated record
// is copied straight to the result instead of being deferred.
SegmentOutcome reduce_segment_task(std::size_t segment, std::span<const IntermediateFile> files,
                                   const JobConfig& cfg, const SegmentPath& parentPath,
                                   RecordWriter& deferredOut);

// Data still to be sorted: the whole input, or one deferred segment.
struct RoundTarget {
  SegmentPath prefix;
  std::vector<fs::path> files;
  // True for intermediate files owned by the sorter (deleted once consumed).
  bool intermediate = false;
};

struct RoundStats {
  std::size_t round = 0;
  std::size_t targets = 0;
  std::size_t sites = 0;
  std::size_t reducers = 0;
  std::size_t mapTasks = 0;
  // Non-empty segments produced by the round.
  std::size_t segments = 0;
  std::size_t deferred = 0;
  std::size_t guardHits = 0;
  std::uint64_t maxSegmentBytes = 0;
  std::uint64_t peakLoadedBytes = 0;
  std::vector<std::uint64_t> segmentBytes;
};

struct RoundResult {
  std::vector<SegmentOutcome> sorted;
  std::vector<RoundTarget> deferred;
  RoundStats stats;
};

// One file-based round over every target. Deferred targets come back in
// segment-path order, read from the round's output files.
RoundResult run_round(std::span<const RoundTarget> targets, const JobConfig& cfg,
                      std::size_t round);

// Sorts a deferred target with a shuffle job whose partitions are the
// target's freshly sampled sub-segments.
std::vector<SegmentOutcome> run_shuffle_fallback(const RoundTarget& target, const JobConfig& cfg);

struct SortReport {
  // File-based rounds plus the fallback, when used.
  std::size_t roundsExecuted = 0;
  std::vector<std::size_t> segmentsPerRound;
  std::vector<std::size_t> deferredPerRound;
  std::uint64_t bytesSorted = 0;
  std::chrono::duration<double> elapsed{};
  fs::path resultDir;
  bool fallbackUsed = false;
  std::size_t guardHits = 0;
  std::uint64_t peakLoadedBytes = 0;
  std::vector<RoundStats> rounds;
};

// Full pipeline. resultDir must be absent or empty. On failure the working
// directories are left in place for inspection.
SortReport run_partition_sort(std::span<const fs::path> inputs, const JobConfig& cfg);

// Result files in concatenation order. Throws InvariantError on a name that
// is not a segment path or on a segment coexisting with one of its children.
std::vector<fs::path> ordered_result_files(const fs::path& resultDir);

// Concatenates the ordered result files into `output`.
void assemble_result(const fs::path& resultDir, const fs::path& output);

}  // namespace rangesort
