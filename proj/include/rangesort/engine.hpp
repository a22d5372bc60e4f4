#pragma once

// A single-machine map/shuffle/reduce executor.
//
// Map tasks run over input splits and buffer their output per task; full
// buffers are sorted by (partition, key) and spilled. Each reduce task
// merges its partition's runs from every map task and sees keys in
// nondecreasing order, one reducer call per distinct key.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rangesort/job_config.hpp"
#include "rangesort/key_order.hpp"
#include "rangesort/shuffle.hpp"

namespace rangesort {

namespace fs = std::filesystem;

class Emitter {
 public:
  virtual ~Emitter() = default;
  virtual void emit(std::string_view key, std::string_view value) = 0;
};

// Values of one key group. Views stay valid until the next call.
class ValueStream {
 public:
  ValueStream(KvStream& source, std::string_view key, std::string_view firstValue,
              KeyOrder order);

  bool next(std::string_view& value);
  // Consumes the rest of the group. Returns the first record of the next
  // group, if any.
  bool drain(KvView& nextHead);

 private:
  KvStream& source_;
  std::string_view key_;
  std::string_view first_;
  KeyOrder order_;
  bool firstPending_ = true;
  bool groupDone_ = false;
  bool haveHead_ = false;
  KvView head_{};
};

class OutputWriter {
 public:
  explicit OutputWriter(RecordWriter& out) : out_(out) {}
  void write(std::string_view record) { out_.write(record); }

 private:
  RecordWriter& out_;
};

using Mapper = std::function<void(std::string_view record, Emitter& out)>;
using Reducer =
    std::function<void(std::string_view key, ValueStream& values, OutputWriter& out)>;
using Partitioner = std::function<std::size_t(std::string_view key, std::size_t reducerCount)>;

struct JobSpec {
  Mapper mapper;
  Reducer reducer;
  Partitioner partitioner;
  std::size_t reducerCount = 1;
  // Buffer budget of each map task, in framed bytes.
  std::uint64_t memoryBudget = 64 * kMiB;
  fs::path outputDir;
  fs::path scratchDir;
  std::uint64_t maxRecordBytes = kDefaultMaxRecordBytes;
  std::uint64_t splitBytes = 16 * kMiB;
  std::size_t workers = 1;
  std::size_t mergeFanIn = kDefaultMergeFanIn;
  KeyOrder order;
  bool keepTemp = false;

  void validate() const;
};

struct JobStats {
  std::size_t mapTasks = 0;
  std::uint64_t inputRecords = 0;
  std::uint64_t emittedRecords = 0;
  std::uint64_t reducedRecords = 0;
  std::uint64_t runsWritten = 0;
  std::uint64_t mergePasses = 0;
  // Largest buffer held by any single map task.
  std::uint64_t peakBufferedBytes = 0;
};

struct JobResult {
  // <outputDir>/part-r-NNNNN, one per reducer, in reducer order.
  std::vector<fs::path> outputs;
  JobStats stats;
};

JobResult run_job(const JobSpec& spec, std::span<const fs::path> inputs);

// Record -> (record, "") and (key, values) -> key once per value.
Mapper identity_mapper();
Reducer identity_reducer();

enum class BaselinePartitioner {
  // Contiguous ranges of sampled segments; part files concatenate in order.
  kRange,
  // Hash of the key; per-part output is sorted but parts interleave.
  kHash,
};

struct BaselineResult {
  std::vector<fs::path> outputs;
  std::size_t reducerCount = 1;
  JobStats stats;
};

// Sorts `inputs` with a plain identity job, relying on the shuffle for
// ordering. The shuffle budget is cfg.shuffle_budget().
BaselineResult baseline_shuffle_sort(std::span<const fs::path> inputs, const JobConfig& cfg,
                                     const fs::path& outputDir,
                                     BaselinePartitioner mode = BaselinePartitioner::kRange);

}  // namespace rangesort
