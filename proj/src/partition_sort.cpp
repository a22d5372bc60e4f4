#include "rangesort/partition_sort.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <map>
#include <memory>
#include <new>

#include "rangesort/engine.hpp"
#include "rangesort/parallel.hpp"

namespace rangesort {

SegmentPath SegmentPath::parse(std::string_view text) {
  std::vector<std::size_t> indices;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t end = std::min(text.find('_', pos), text.size());
    const std::string_view part = text.substr(pos, end - pos);
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
    const bool canonical = !part.empty() && (part.size() == 1 || part[0] != '0');
    if (ec != std::errc{} || ptr != part.data() + part.size() || !canonical) {
      throw ValidationError(fmt::format("'{}' is not a segment path", text));
    }
    indices.push_back(value);
    if (end == text.size()) break;
    pos = end + 1;
  }
  return SegmentPath(std::move(indices));
}

std::string SegmentPath::render() const { return fmt::format("{}", fmt::join(indices_, "_")); }

SegmentPath SegmentPath::child(std::size_t index) const {
  auto indices = indices_;
  indices.push_back(index);
  return SegmentPath(std::move(indices));
}

bool SegmentPath::is_prefix_of(const SegmentPath& other) const {
  return indices_.size() <= other.indices_.size() &&
         std::equal(indices_.begin(), indices_.end(), other.indices_.begin());
}

namespace {

void create_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
}

void remove_quietly(const fs::path& path) {
  std::error_code ec;
  fs::remove(path, ec);
}

void move_file(const fs::path& from, const fs::path& to) {
  std::error_code ec;
  fs::rename(from, to, ec);
  if (!ec) return;
  // Scratch space may live on another filesystem.
  fs::copy_file(from, to, fs::copy_options::overwrite_existing, ec);
  if (ec) {
    throw IoError(fmt::format("cannot move {} to {}: {}", from.string(), to.string(),
                              ec.message()));
  }
  remove_quietly(from);
}

fs::path under(const fs::path& base, const SegmentPath& prefix) {
  return prefix.empty() ? base : base / prefix.render();
}

// Buffered appender for one intermediate file.
class SegmentSink {
 public:
  SegmentSink(fs::path path, std::size_t bufferLimit)
      : path_(std::move(path)), bufferLimit_(bufferLimit) {}

  void append(std::string_view record) {
    buffer_.append(record);
    buffer_.push_back('\n');
    bytes_ += record.size() + 1;
    if (buffer_.size() >= bufferLimit_) flush();
  }

  void flush() {
    if (buffer_.empty()) return;
    auto f = open_file(path_, "ab");
    if (std::fwrite(buffer_.data(), 1, buffer_.size(), f.get()) != buffer_.size() ||
        std::fclose(f.release()) != 0) {
      throw IoError(fmt::format("write failed on {}", path_.string()));
    }
    buffer_.clear();
  }

  const fs::path& path() const noexcept { return path_; }
  std::uint64_t bytes() const noexcept { return bytes_; }

 private:
  fs::path path_;
  std::size_t bufferLimit_;
  std::string buffer_;
  std::uint64_t bytes_ = 0;
};

fs::path create_intermediate_file(const fs::path& dir, std::mt19937_64& rng) {
  std::set<std::string> taken;
  for (std::size_t attempt = 0; attempt < kMaxNameAttempts; ++attempt) {
    std::string name = gen_intermediate_name(rng, taken);
    fs::path path = dir / name;
    if (create_exclusive(path)) return path;
    taken.insert(std::move(name));
  }
  throw IoError(fmt::format("no free intermediate name in {} after {} attempts", dir.string(),
                            kMaxNameAttempts));
}

bool all_records_equal(std::span<const IntermediateFile> files, std::uint64_t maxRecordBytes) {
  std::string first;
  bool haveFirst = false;
  for (const auto& file : files) {
    RecordReader reader(file.path, maxRecordBytes);
    std::string_view record;
    while (reader.next(record)) {
      if (!haveFirst) {
        first.assign(record);
        haveFirst = true;
      } else if (record != first) {
        return false;
      }
    }
  }
  return true;
}

// Loads every file of a segment, sorts each file's records, and merges the
// sorted files through a priority queue into `out`.
std::uint64_t sort_in_memory(std::span<const IntermediateFile> files, std::uint64_t totalBytes,
                             KeyOrder order, const fs::path& out) {
  std::string arena;
  arena.resize(totalBytes);
  std::vector<std::string_view> records;
  std::vector<std::pair<std::size_t, std::size_t>> slices;  // [begin, end) in records
  std::size_t filled = 0;
  for (const auto& file : files) {
    auto f = open_file(file.path, "rb");
    const std::size_t want = totalBytes - filled;
    const std::size_t got = std::fread(arena.data() + filled, 1, want, f.get());
    if (std::ferror(f.get()) || std::fgetc(f.get()) != EOF) {
      throw InvariantError(fmt::format("{} changed size while its segment was being sorted",
                                       file.path.string()));
    }
    const std::size_t begin = records.size();
    std::string_view data(arena.data() + filled, got);
    std::size_t pos = 0;
    while (pos < data.size()) {
      std::size_t nl = data.find('\n', pos);
      if (nl == std::string_view::npos) nl = data.size();
      records.push_back(data.substr(pos, nl - pos));
      pos = nl + 1;
    }
    filled += got;
    std::sort(records.begin() + begin, records.end(), order);
    slices.emplace_back(begin, records.size());
  }

  struct Cursor {
    std::size_t pos;
    std::size_t end;
  };
  std::vector<Cursor> heap;
  for (const auto& [b, e] : slices) {
    if (b != e) heap.push_back({b, e});
  }
  auto after = [&](const Cursor& a, const Cursor& b) {
    const int c = order.compare(records[a.pos], records[b.pos]);
    return c != 0 ? c > 0 : a.pos > b.pos;
  };
  std::make_heap(heap.begin(), heap.end(), after);
  RecordWriter writer(out);
  while (!heap.empty()) {
    std::pop_heap(heap.begin(), heap.end(), after);
    Cursor& top = heap.back();
    writer.write(records[top.pos]);
    if (++top.pos == top.end) {
      heap.pop_back();
    } else {
      std::push_heap(heap.begin(), heap.end(), after);
    }
  }
  writer.close();
  return totalBytes;
}

std::uint64_t task_seed_word(std::uint64_t seed, int half) {
  return half == 0 ? (seed & 0xffffffffu) : (seed >> 32);
}

std::mt19937_64 task_rng(std::uint64_t seed, std::size_t round, std::size_t target,
                         std::size_t task) {
  std::seed_seq seq{task_seed_word(seed, 0), task_seed_word(seed, 1),
                    static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(target),
                    static_cast<std::uint64_t>(task)};
  return std::mt19937_64(seq);
}

}  // namespace

std::vector<IntermediateFile> map_partition_task(const InputSplit& split,
                                                 const DivisionSites& sites,
                                                 const fs::path& middleDir, std::mt19937_64& rng,
                                                 std::uint64_t maxRecordBytes) {
  const std::size_t n = sites.segment_count();
  const std::size_t bufferLimit =
      std::clamp<std::size_t>((8u << 20) / n, 4u << 10, 256u << 10);

  // Setup: one file per segment, created before any record is read.
  std::vector<SegmentSink> sinks;
  sinks.reserve(n);
  for (std::size_t seg = 0; seg < n; ++seg) {
    const fs::path dir = middleDir / std::to_string(seg);
    create_dirs(dir);
    sinks.emplace_back(create_intermediate_file(dir, rng), bufferLimit);
  }

  RecordReader reader(split, maxRecordBytes);
  std::string_view record;
  while (reader.next(record)) sinks[sites.segment_of(record)].append(record);

  std::vector<IntermediateFile> files;
  for (std::size_t seg = 0; seg < n; ++seg) {
    sinks[seg].flush();
    if (sinks[seg].bytes() == 0) {
      remove_quietly(sinks[seg].path());
    } else {
      files.push_back({seg, sinks[seg].path(), sinks[seg].bytes()});
    }
  }
  return files;
}

std::size_t partition_fn(std::size_t segment, std::size_t reducerCount) {
  if (reducerCount < 1) throw ValidationError("reducerCount must be at least 1");
  return segment % reducerCount;
}

SegmentOutcome reduce_segment_task(std::size_t segment, std::span<const IntermediateFile> files,
                                   const JobConfig& cfg, const SegmentPath& parentPath,
                                   RecordWriter& deferredOut) {
  SegmentOutcome outcome;
  outcome.segment = parentPath.child(segment);
  for (const auto& file : files) {
    if (file.segment != segment) {
      throw InvariantError(fmt::format("{} belongs to segment {}, not {}", file.path.string(),
                                       file.segment, segment));
    }
    outcome.bytes += file_size_of(file.path);
  }
  const fs::path resultPath = cfg.resultDir / outcome.segment.render();

  if (outcome.bytes > cfg.memoryThreshold) {
    if (!all_records_equal(files, cfg.maxRecordBytes)) {
      deferredOut.write(outcome.segment.render());
      outcome.status = SegmentStatus::kDeferred;
      return outcome;
    }
    // One repeated record is already sorted; no subdivision can split it.
    RecordWriter out(resultPath);
    for (const auto& file : files) append_file(file.path, out);
    out.close();
    outcome.guardTaken = true;
    outcome.resultPath = resultPath;
    return outcome;
  }

  try {
    outcome.loadedBytes = sort_in_memory(files, outcome.bytes, cfg.key_order(), resultPath);
  } catch (const std::bad_alloc&) {
    throw InvariantError(fmt::format(
        "segment {} ({} bytes) did not fit in memory under threshold {}",
        outcome.segment.render(), outcome.bytes, cfg.memoryThreshold));
  }
  outcome.resultPath = resultPath;
  return outcome;
}

RoundResult run_round(std::span<const RoundTarget> targets, const JobConfig& cfg,
                      std::size_t round) {
  if (targets.empty()) throw ValidationError("run_round needs at least one target");
  const KeyOrder order = cfg.key_order();
  RoundResult result;
  result.stats.round = round;
  result.stats.targets = targets.size();

  for (std::size_t t = 0; t < targets.size(); ++t) {
    const RoundTarget& target = targets[t];
    const auto summary = take_samples(target.files, cfg.samplingPlan, order);
    const auto plan = make_partition_plan(summary, cfg.blockSize, total_size_of(target.files),
                                          cfg.maxReducers, cfg.siteRule);
    const std::size_t segments = plan.sites.segment_count();
    result.stats.sites += plan.sites.sites().size();
    result.stats.reducers += plan.reducerCount;

    // Map: route records into intermediate files.
    const fs::path middle = under(cfg.middleDir, target.prefix);
    const auto splits = make_splits(target.files, cfg.splitBytes);
    result.stats.mapTasks += splits.size();
    std::vector<std::vector<IntermediateFile>> mapped(splits.size());
    parallel_for(splits.size(), cfg.workers, [&](std::size_t task) {
      auto rng = task_rng(cfg.seed, round, t, task);
      mapped[task] =
          map_partition_task(splits[task], plan.sites, middle, rng, cfg.maxRecordBytes);
    });
    for (std::size_t seg = 0; seg < segments; ++seg) {
      std::error_code ec;
      fs::remove(middle / std::to_string(seg), ec);  // only succeeds when empty
    }

    // Shuffle the (segment, file) pairs to their reducers.
    std::vector<std::vector<IntermediateFile>> bySegment(segments);
    for (const auto& files : mapped) {
      for (const auto& file : files) bySegment[file.segment].push_back(file);
    }

    // Reduce: reducer r owns segments r, r + R, r + 2R, ...
    const std::size_t reducers = plan.reducerCount;
    const fs::path roundOut = under(cfg.outputDir / fmt::format("round_{}", round), target.prefix);
    create_dirs(roundOut);
    std::vector<std::vector<SegmentOutcome>> outcomes(reducers);
    parallel_for(reducers, cfg.workers, [&](std::size_t r) {
      RecordWriter deferred(roundOut / part_file_name(r));
      for (std::size_t seg = 0; seg < segments; ++seg) {
        if (partition_fn(seg, reducers) != r || bySegment[seg].empty()) continue;
        outcomes[r].push_back(
            reduce_segment_task(seg, bySegment[seg], cfg, target.prefix, deferred));
      }
      deferred.close();
    });

    std::vector<SegmentOutcome> sorted;
    for (auto& list : outcomes) {
      for (auto& outcome : list) {
        ++result.stats.segments;
        result.stats.segmentBytes.push_back(outcome.bytes);
        result.stats.maxSegmentBytes = std::max(result.stats.maxSegmentBytes, outcome.bytes);
        result.stats.peakLoadedBytes = std::max(result.stats.peakLoadedBytes, outcome.loadedBytes);
        if (outcome.guardTaken) ++result.stats.guardHits;
        if (outcome.status == SegmentStatus::kSorted) sorted.push_back(std::move(outcome));
      }
    }

    // Read the deferred identifiers back from the round's output files.
    std::vector<RoundTarget> deferredTargets;
    for (std::size_t r = 0; r < reducers; ++r) {
      RecordReader reader(roundOut / part_file_name(r), cfg.maxRecordBytes);
      std::string_view line;
      while (reader.next(line)) {
        const SegmentPath path = SegmentPath::parse(line);
        if (path.depth() != target.prefix.depth() + 1 || !target.prefix.is_prefix_of(path) ||
            path.indices().back() >= segments) {
          throw InvariantError(fmt::format("deferred list {} names foreign segment '{}'",
                                           (roundOut / part_file_name(r)).string(), line));
        }
        RoundTarget next{path, {}, true};
        for (const auto& file : bySegment[path.indices().back()]) next.files.push_back(file.path);
        deferredTargets.push_back(std::move(next));
      }
    }
    result.stats.deferred += deferredTargets.size();

    if (!cfg.keepTemp) {
      for (const auto& outcome : sorted) {
        const std::size_t seg = outcome.segment.indices().back();
        for (const auto& file : bySegment[seg]) remove_quietly(file.path);
        remove_quietly(middle / std::to_string(seg));
      }
      if (target.intermediate) {
        for (const auto& file : target.files) remove_quietly(file);
      }
    }

    std::move(sorted.begin(), sorted.end(), std::back_inserter(result.sorted));
    std::move(deferredTargets.begin(), deferredTargets.end(),
              std::back_inserter(result.deferred));
  }

  auto byPath = [](const auto& a, const auto& b) { return a.segment < b.segment; };
  std::sort(result.sorted.begin(), result.sorted.end(), byPath);
  std::sort(result.deferred.begin(), result.deferred.end(),
            [](const RoundTarget& a, const RoundTarget& b) { return a.prefix < b.prefix; });
  return result;
}

std::vector<SegmentOutcome> run_shuffle_fallback(const RoundTarget& target, const JobConfig& cfg) {
  const KeyOrder order = cfg.key_order();
  const auto summary = take_samples(target.files, cfg.samplingPlan, order);
  const auto plan = make_partition_plan(summary, cfg.blockSize, total_size_of(target.files),
                                        cfg.maxReducers, cfg.siteRule);
  auto sites = std::make_shared<const DivisionSites>(plan.sites);

  const fs::path jobDir = cfg.scratchDir / fmt::format("fallback-{}", target.prefix.render());
  JobSpec spec;
  spec.mapper = identity_mapper();
  spec.reducer = identity_reducer();
  // One shuffle partition per sub-segment, so part-r-j holds sub-segment j.
  spec.reducerCount = sites->segment_count();
  spec.partitioner = [sites](std::string_view key, std::size_t) { return sites->segment_of(key); };
  spec.memoryBudget = cfg.shuffle_budget();
  spec.outputDir = jobDir / "out";
  spec.scratchDir = jobDir / "spill";
  spec.maxRecordBytes = cfg.maxRecordBytes;
  spec.splitBytes = cfg.splitBytes;
  spec.workers = cfg.workers;
  spec.order = order;
  spec.keepTemp = cfg.keepTemp;
  const auto job = run_job(spec, target.files);

  std::vector<SegmentOutcome> outcomes;
  for (std::size_t j = 0; j < job.outputs.size(); ++j) {
    const std::uint64_t bytes = file_size_of(job.outputs[j]);
    if (bytes == 0) {
      remove_quietly(job.outputs[j]);
      continue;
    }
    SegmentOutcome outcome;
    outcome.segment = target.prefix.child(j);
    outcome.resultPath = cfg.resultDir / outcome.segment.render();
    outcome.bytes = bytes;
    move_file(job.outputs[j], outcome.resultPath);
    outcomes.push_back(std::move(outcome));
  }
  if (!cfg.keepTemp) {
    std::error_code ec;
    fs::remove_all(jobDir, ec);
    if (target.intermediate) {
      for (const auto& file : target.files) remove_quietly(file);
    }
  }
  return outcomes;
}

SortReport run_partition_sort(std::span<const fs::path> inputs, const JobConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  if (fs::exists(cfg.resultDir) && !fs::is_empty(cfg.resultDir)) {
    throw ValidationError(fmt::format("result directory {} is not empty", cfg.resultDir.string()));
  }
  create_dirs(cfg.resultDir);
  create_dirs(cfg.middleDir);
  create_dirs(cfg.outputDir);

  SortReport report;
  report.resultDir = cfg.resultDir;
  report.bytesSorted = total_size_of(inputs);

  std::vector<RoundTarget> targets{{SegmentPath{}, {inputs.begin(), inputs.end()}, false}};
  for (std::size_t round = 1; round <= cfg.maxFileRounds && !targets.empty(); ++round) {
    auto result = run_round(targets, cfg, round);
    ++report.roundsExecuted;
    report.segmentsPerRound.push_back(result.stats.segments);
    report.deferredPerRound.push_back(result.stats.deferred);
    report.guardHits += result.stats.guardHits;
    report.peakLoadedBytes = std::max(report.peakLoadedBytes, result.stats.peakLoadedBytes);
    report.rounds.push_back(std::move(result.stats));
    targets = std::move(result.deferred);
  }

  if (!targets.empty()) {
    report.fallbackUsed = true;
    ++report.roundsExecuted;
    std::size_t segments = 0;
    for (const auto& target : targets) segments += run_shuffle_fallback(target, cfg).size();
    report.segmentsPerRound.push_back(segments);
    report.deferredPerRound.push_back(0);
  }

  if (!cfg.keepTemp) {
    std::error_code ec;
    fs::remove_all(cfg.middleDir, ec);
    fs::remove_all(cfg.scratchDir, ec);
  }
  report.elapsed = std::chrono::steady_clock::now() - start;
  return report;
}

std::vector<fs::path> ordered_result_files(const fs::path& resultDir) {
  std::vector<std::pair<SegmentPath, fs::path>> entries;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(resultDir, ec)) {
    const std::string name = entry.path().filename().string();
    try {
      entries.emplace_back(SegmentPath::parse(name), entry.path());
    } catch (const ValidationError&) {
      throw InvariantError(fmt::format("unexpected file '{}' in result directory {}", name,
                                       resultDir.string()));
    }
  }
  if (ec) throw IoError(fmt::format("cannot list {}: {}", resultDir.string(), ec.message()));
  std::sort(entries.begin(), entries.end());
  // All descendants of a path sort directly after it, so checking
  // neighbours finds every parent/child pair.
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i - 1].first.is_prefix_of(entries[i].first)) {
      throw InvariantError(fmt::format("result segment {} coexists with its sub-segment {}",
                                       entries[i - 1].first.render(),
                                       entries[i].first.render()));
    }
  }
  std::vector<fs::path> files;
  files.reserve(entries.size());
  for (auto& [path, file] : entries) files.push_back(std::move(file));
  return files;
}

void assemble_result(const fs::path& resultDir, const fs::path& output) {
  const auto files = ordered_result_files(resultDir);
  RecordWriter out(output);
  for (const auto& file : files) append_file(file, out);
  out.close();
}

}  // namespace rangesort
