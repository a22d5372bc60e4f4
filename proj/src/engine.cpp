#include "rangesort/engine.hpp"

#include <memory>

#include <fmt/format.h>

#include "rangesort/error.hpp"
#include "rangesort/parallel.hpp"
#include "rangesort/record_io.hpp"
#include "rangesort/sampling.hpp"

namespace rangesort {

ValueStream::ValueStream(KvStream& source, std::string_view key, std::string_view firstValue,
                         KeyOrder order)
    : source_(source), key_(key), first_(firstValue), order_(order) {}

bool ValueStream::next(std::string_view& value) {
  if (firstPending_) {
    firstPending_ = false;
    value = first_;
    return true;
  }
  if (groupDone_) return false;
  KvView kv;
  if (!source_.next(kv)) {
    groupDone_ = true;
    return false;
  }
  if (kv.key == key_) {
    value = kv.value;
    return true;
  }
  if (order_.less(kv.key, key_)) {
    throw InvariantError("shuffle produced keys out of order");
  }
  head_ = kv;
  haveHead_ = true;
  groupDone_ = true;
  return false;
}

bool ValueStream::drain(KvView& nextHead) {
  firstPending_ = false;
  std::string_view ignored;
  while (next(ignored)) {
  }
  if (haveHead_) nextHead = head_;
  return haveHead_;
}

void JobSpec::validate() const {
  if (!mapper) throw ValidationError("job has no mapper");
  if (!reducer) throw ValidationError("job has no reducer");
  if (!partitioner) throw ValidationError("job has no partitioner");
  if (reducerCount < 1) throw ValidationError("job needs at least one reducer");
  if (outputDir.empty()) throw ValidationError("job has no output directory");
  if (scratchDir.empty()) throw ValidationError("job has no scratch directory");
  if (splitBytes < 1) throw ValidationError("split size must be at least 1 byte");
  ShuffleOptions{memoryBudget, maxRecordBytes, scratchDir, "job", mergeFanIn, order}.validate();
}

namespace {

struct MapTaskOutput {
  std::vector<std::vector<SortedRun>> runs;
  ShuffleStats shuffle;
  std::uint64_t inputRecords = 0;
};

class BufferEmitter final : public Emitter {
 public:
  BufferEmitter(const JobSpec& spec, SpillBuffer& buffer) : spec_(spec), buffer_(buffer) {}

  void emit(std::string_view key, std::string_view value) override {
    if (key.size() + value.size() > spec_.maxRecordBytes) {
      throw ValidationError(fmt::format("emitted key/value of {} bytes exceeds maxRecordBytes {}",
                                        key.size() + value.size(), spec_.maxRecordBytes));
    }
    const std::size_t partition = spec_.partitioner(key, spec_.reducerCount);
    if (partition >= spec_.reducerCount) {
      throw InvariantError(fmt::format("partitioner returned {} for {} reducers", partition,
                                       spec_.reducerCount));
    }
    buffer_.add(partition, key, value);
  }

 private:
  const JobSpec& spec_;
  SpillBuffer& buffer_;
};

MapTaskOutput run_map_task(const JobSpec& spec, const InputSplit& split, std::size_t task) {
  SpillBuffer buffer(spec.reducerCount, spec.memoryBudget, spec.order, spec.scratchDir,
                     fmt::format("map{}", task));
  BufferEmitter emitter(spec, buffer);
  RecordReader reader(split, spec.maxRecordBytes);
  MapTaskOutput out;
  std::string_view record;
  while (reader.next(record)) {
    ++out.inputRecords;
    try {
      spec.mapper(record, emitter);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw JobError(fmt::format("map task {} failed at offset {} of {}: {}", task,
                                 reader.record_offset(), split.path.string(), e.what()));
    }
  }
  buffer.spill();
  out.runs = buffer.runs();
  out.shuffle = buffer.stats();
  return out;
}

struct ReduceTaskOutput {
  ShuffleStats shuffle;
  std::uint64_t records = 0;
};

ReduceTaskOutput run_reduce_task(const JobSpec& spec, std::size_t partition,
                                 const std::vector<MapTaskOutput>& maps,
                                 const fs::path& outputPath) {
  std::vector<SortedRun> runs;
  for (const auto& m : maps) {
    runs.insert(runs.end(), m.runs[partition].begin(), m.runs[partition].end());
  }
  ReduceTaskOutput out;
  auto stream = merge_runs(std::move(runs), spec.order, spec.scratchDir,
                           fmt::format("reduce{}", partition), spec.mergeFanIn, out.shuffle);
  RecordWriter file(outputPath);
  OutputWriter writer(file);
  std::string key;
  std::string previous;
  bool first = true;
  KvView kv;
  bool have = stream->next(kv);
  while (have) {
    key.assign(kv.key);
    if (!first && !spec.order.less(previous, key)) {
      throw InvariantError(fmt::format("reduce task {} saw keys out of order", partition));
    }
    ValueStream values(*stream, key, kv.value, spec.order);
    try {
      spec.reducer(key, values, writer);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw JobError(fmt::format("reduce task {} failed at key '{}': {}", partition, key,
                                 e.what()));
    }
    have = values.drain(kv);
    previous.swap(key);
    first = false;
    ++out.records;
  }
  file.close();
  return out;
}

void create_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
}

}  // namespace

JobResult run_job(const JobSpec& spec, std::span<const fs::path> inputs) {
  spec.validate();
  create_dirs(spec.outputDir);
  create_dirs(spec.scratchDir);

  const auto splits = make_splits(inputs, spec.splitBytes);
  std::vector<MapTaskOutput> maps(splits.size());
  JobResult result;
  try {
    parallel_for(splits.size(), spec.workers,
                 [&](std::size_t t) { maps[t] = run_map_task(spec, splits[t], t); });

    result.outputs.resize(spec.reducerCount);
    std::vector<ReduceTaskOutput> reduces(spec.reducerCount);
    for (std::size_t p = 0; p < spec.reducerCount; ++p) {
      result.outputs[p] = spec.outputDir / part_file_name(p);
    }
    parallel_for(spec.reducerCount, spec.workers, [&](std::size_t p) {
      reduces[p] = run_reduce_task(spec, p, maps, result.outputs[p]);
    });

    auto& stats = result.stats;
    stats.mapTasks = splits.size();
    for (const auto& m : maps) {
      stats.inputRecords += m.inputRecords;
      stats.emittedRecords += m.shuffle.recordCount;
      stats.runsWritten += m.shuffle.runsWritten;
      stats.peakBufferedBytes = std::max(stats.peakBufferedBytes, m.shuffle.peakBufferedBytes);
    }
    for (const auto& r : reduces) {
      stats.reducedRecords += r.records;
      stats.runsWritten += r.shuffle.runsWritten;
      stats.mergePasses += r.shuffle.mergePasses;
    }
  } catch (...) {
    if (!spec.keepTemp) {
      std::error_code ec;
      fs::remove_all(spec.scratchDir, ec);
    }
    throw;
  }
  if (!spec.keepTemp) {
    std::error_code ec;
    fs::remove_all(spec.scratchDir, ec);
  }
  return result;
}

Mapper identity_mapper() {
  return [](std::string_view record, Emitter& out) { out.emit(record, {}); };
}

Reducer identity_reducer() {
  return [](std::string_view key, ValueStream& values, OutputWriter& out) {
    std::string_view ignored;
    while (values.next(ignored)) out.write(key);
  };
}

BaselineResult baseline_shuffle_sort(std::span<const fs::path> inputs, const JobConfig& cfg,
                                     const fs::path& outputDir, BaselinePartitioner mode) {
  cfg.validate();
  const KeyOrder order = cfg.key_order();
  const auto summary = take_samples(inputs, cfg.samplingPlan, order);
  const auto plan = make_partition_plan(summary, cfg.blockSize, total_size_of(inputs),
                                        cfg.maxReducers, cfg.siteRule);

  JobSpec spec;
  spec.mapper = identity_mapper();
  spec.reducer = identity_reducer();
  spec.reducerCount = plan.reducerCount;
  if (mode == BaselinePartitioner::kRange) {
    auto sites = std::make_shared<const DivisionSites>(plan.sites);
    spec.partitioner = [sites](std::string_view key, std::size_t reducers) {
      // Contiguous groups of segments keep reducer outputs in key order.
      return sites->segment_of(key) * reducers / sites->segment_count();
    };
  } else {
    spec.partitioner = [](std::string_view key, std::size_t reducers) {
      return std::hash<std::string_view>{}(key) % reducers;
    };
  }
  spec.memoryBudget = cfg.shuffle_budget();
  spec.outputDir = outputDir;
  spec.scratchDir = cfg.scratchDir / "baseline";
  spec.maxRecordBytes = cfg.maxRecordBytes;
  spec.splitBytes = cfg.splitBytes;
  spec.workers = cfg.workers;
  spec.order = order;
  spec.keepTemp = cfg.keepTemp;

  auto job = run_job(spec, inputs);
  return {std::move(job.outputs), plan.reducerCount, job.stats};
}

}  // namespace rangesort
