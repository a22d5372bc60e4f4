#pragma once

// Sort-by-key under a memory budget: buffered records are sorted and
// spilled to run files, then k-way merged back through a priority queue.
//
// Run files hold frames of [u32 BE key length][u32 BE value length][key]
// [value], so keys and values may contain any byte.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "rangesort/key_order.hpp"
#include "rangesort/record_io.hpp"

namespace rangesort {

namespace fs = std::filesystem;

inline constexpr std::uint64_t kFrameHeaderBytes = 8;
inline constexpr std::size_t kDefaultMergeFanIn = 64;

struct KeyValue {
  std::string key;
  std::string value;

  friend bool operator==(const KeyValue&, const KeyValue&) = default;
};

struct KvView {
  std::string_view key;
  std::string_view value;
};

inline std::uint64_t frame_bytes(std::string_view key, std::string_view value) {
  return kFrameHeaderBytes + key.size() + value.size();
}

// A byte range of a spill file holding frames sorted by key.
struct SortedRun {
  fs::path path;
  std::uint64_t offset = 0;
  std::uint64_t bytes = 0;
  std::uint64_t recordCount = 0;
};

// Pull-based key/value stream. Views stay valid until the next call.
class KvStream {
 public:
  virtual ~KvStream() = default;
  virtual bool next(KvView& out) = 0;
};

class RunWriter {
 public:
  explicit RunWriter(const fs::path& path);

  void add(std::string_view key, std::string_view value);
  // Marks the end of the current run and returns it.
  SortedRun finish_run();
  void close();

 private:
  RecordWriter out_;
  SortedRun current_;
};

class RunReader final : public KvStream {
 public:
  explicit RunReader(const SortedRun& run);
  bool next(KvView& out) override;

 private:
  bool ensure(std::size_t bytes);

  SortedRun run_;
  FilePtr file_;
  std::uint64_t remaining_;
  std::string buffer_;
  std::size_t pos_ = 0;
};

// Merges sorted sources with a min-heap ordered by (key, source index).
class MergeStream final : public KvStream {
 public:
  MergeStream(std::vector<std::unique_ptr<KvStream>> sources, KeyOrder order);
  bool next(KvView& out) override;

 private:
  struct Head {
    KvView view;
    std::size_t source;
  };
  bool after(const Head& a, const Head& b) const;

  std::vector<std::unique_ptr<KvStream>> sources_;
  std::vector<Head> heap_;
  KeyOrder order_;
  bool pending_ = false;
  Head last_{};
};

struct ShuffleStats {
  // Sorted runs handed to the merge, counting an in-memory run.
  std::uint64_t sortedRuns = 0;
  // Run files written, by spills and by intermediate merge passes.
  std::uint64_t runsWritten = 0;
  std::uint64_t mergePasses = 0;
  std::uint64_t peakBufferedBytes = 0;
  std::uint64_t recordCount = 0;
};

// Merges `runs` into one sorted stream. While more than `fanIn` runs remain,
// groups of `fanIn` are merged into new run files under `scratchDir`; each
// such pass and the final streaming merge count as merge passes.
std::unique_ptr<KvStream> merge_runs(std::vector<SortedRun> runs, KeyOrder order,
                                     const fs::path& scratchDir, const std::string& namePrefix,
                                     std::size_t fanIn, ShuffleStats& stats);

// Map-side buffer: collects (partition, key, value) up to `budget` framed
// bytes, then sorts by (partition, key) and writes one spill file holding
// one SortedRun per non-empty partition.
class SpillBuffer {
 public:
  SpillBuffer(std::size_t partitions, std::uint64_t budget, KeyOrder order, fs::path scratchDir,
              std::string namePrefix);

  void add(std::size_t partition, std::string_view key, std::string_view value);
  void spill();

  bool buffer_empty() const noexcept { return entries_.empty(); }
  std::uint64_t buffered_bytes() const noexcept { return bufferedBytes_; }
  const ShuffleStats& stats() const noexcept { return stats_; }
  ShuffleStats& stats() noexcept { return stats_; }
  // Runs per partition, in spill order.
  const std::vector<std::vector<SortedRun>>& runs() const noexcept { return runs_; }

  // Sorts the buffer and hands it out as a stream of partition 0. Only
  // valid for a single-partition buffer.
  std::unique_ptr<KvStream> release_sorted();

 private:
  struct Entry {
    std::size_t partition;
    std::uint64_t keyOffset;
    std::uint32_t keyLength;
    std::uint32_t valueLength;
  };
  void sort_entries();

  std::size_t partitions_;
  std::uint64_t budget_;
  KeyOrder order_;
  fs::path scratchDir_;
  std::string namePrefix_;
  std::string arena_;
  std::vector<Entry> entries_;
  std::uint64_t bufferedBytes_ = 0;
  std::size_t spillCount_ = 0;
  std::vector<std::vector<SortedRun>> runs_;
  ShuffleStats stats_;
};

struct ShuffleOptions {
  std::uint64_t memoryBudget = 64ull << 20;
  std::uint64_t maxRecordBytes = kDefaultMaxRecordBytes;
  fs::path scratchDir;
  std::string namePrefix = "shuffle";
  std::size_t fanIn = kDefaultMergeFanIn;
  KeyOrder order;

  // Throws ValidationError if the budget cannot hold two maximal records.
  void validate() const;
};

// Single-partition shuffle: add() everything, then finish() once. Input
// that fits the budget is sorted in memory without touching disk.
class ExternalSorter {
 public:
  explicit ExternalSorter(ShuffleOptions options);

  void add(std::string_view key, std::string_view value);
  std::unique_ptr<KvStream> finish();

  const ShuffleStats& stats() const noexcept { return buffer_.stats(); }
  // Spilled runs, available after finish() for inspection.
  const std::vector<SortedRun>& runs() const noexcept { return buffer_.runs()[0]; }

 private:
  ShuffleOptions options_;
  SpillBuffer buffer_;
  bool finished_ = false;
};

}  // namespace rangesort
