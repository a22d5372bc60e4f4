#include "rangesort/shuffle.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

#include <fmt/format.h>

#include "rangesort/error.hpp"

namespace rangesort {

namespace {

constexpr std::size_t kRunReadBlock = 64 << 10;

void put_u32(char* out, std::uint32_t v) {
  out[0] = static_cast<char>(v >> 24);
  out[1] = static_cast<char>(v >> 16);
  out[2] = static_cast<char>(v >> 8);
  out[3] = static_cast<char>(v);
}

std::uint32_t get_u32(const char* in) {
  const auto* p = reinterpret_cast<const unsigned char*>(in);
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

std::uint32_t checked_length(std::size_t n) {
  if (n > std::numeric_limits<std::uint32_t>::max()) {
    throw ValidationError(fmt::format("frame field of {} bytes exceeds 4 GiB", n));
  }
  return static_cast<std::uint32_t>(n);
}

// Serves the already sorted contents of a released SpillBuffer.
class VectorStream final : public KvStream {
 public:
  struct Slice {
    std::uint64_t offset;
    std::uint32_t keyLength;
    std::uint32_t valueLength;
  };

  VectorStream(std::string arena, std::vector<Slice> slices)
      : arena_(std::move(arena)), slices_(std::move(slices)) {}

  bool next(KvView& out) override {
    if (index_ >= slices_.size()) return false;
    const Slice& s = slices_[index_++];
    const std::string_view all(arena_);
    out = {all.substr(s.offset, s.keyLength), all.substr(s.offset + s.keyLength, s.valueLength)};
    return true;
  }

 private:
  std::string arena_;
  std::vector<Slice> slices_;
  std::size_t index_ = 0;
};

}  // namespace

RunWriter::RunWriter(const fs::path& path) : out_(path) { current_.path = path; }

void RunWriter::add(std::string_view key, std::string_view value) {
  char header[kFrameHeaderBytes];
  put_u32(header, checked_length(key.size()));
  put_u32(header + 4, checked_length(value.size()));
  out_.write_raw(std::string_view(header, sizeof header));
  out_.write_raw(key);
  out_.write_raw(value);
  ++current_.recordCount;
}

SortedRun RunWriter::finish_run() {
  SortedRun run = current_;
  run.bytes = out_.bytes_written() - run.offset;
  current_.offset = out_.bytes_written();
  current_.recordCount = 0;
  return run;
}

void RunWriter::close() { out_.close(); }

RunReader::RunReader(const SortedRun& run)
    : run_(run), file_(open_file(run.path, "rb")), remaining_(run.bytes) {
  if (::fseeko(file_.get(), static_cast<off_t>(run.offset), SEEK_SET) != 0) {
    throw IoError(fmt::format("cannot seek in run file {}", run.path.string()));
  }
}

bool RunReader::ensure(std::size_t bytes) {
  if (buffer_.size() - pos_ >= bytes) return true;
  buffer_.erase(0, pos_);
  pos_ = 0;
  while (buffer_.size() < bytes && remaining_ > 0) {
    const std::size_t want = static_cast<std::size_t>(
        std::min<std::uint64_t>(remaining_, std::max(kRunReadBlock, bytes - buffer_.size())));
    const std::size_t old = buffer_.size();
    buffer_.resize(old + want);
    const std::size_t got = std::fread(buffer_.data() + old, 1, want, file_.get());
    buffer_.resize(old + got);
    remaining_ -= got;
    if (got < want) {
      throw IoError(fmt::format("run file {} truncated", run_.path.string()));
    }
  }
  return buffer_.size() >= bytes;
}

bool RunReader::next(KvView& out) {
  if (!ensure(kFrameHeaderBytes)) {
    if (buffer_.size() != pos_) {
      throw IoError(fmt::format("run file {} has a torn frame header", run_.path.string()));
    }
    return false;
  }
  const std::uint32_t keyLength = get_u32(buffer_.data() + pos_);
  const std::uint32_t valueLength = get_u32(buffer_.data() + pos_ + 4);
  const std::size_t frame = kFrameHeaderBytes + keyLength + valueLength;
  if (!ensure(frame)) {
    throw IoError(fmt::format("run file {} has a torn frame", run_.path.string()));
  }
  const char* base = buffer_.data() + pos_ + kFrameHeaderBytes;
  out.key = std::string_view(base, keyLength);
  out.value = std::string_view(base + keyLength, valueLength);
  pos_ += frame;
  return true;
}

MergeStream::MergeStream(std::vector<std::unique_ptr<KvStream>> sources, KeyOrder order)
    : sources_(std::move(sources)), order_(order) {
  heap_.reserve(sources_.size());
  for (std::size_t i = 0; i < sources_.size(); ++i) {
    Head head{{}, i};
    if (sources_[i]->next(head.view)) heap_.push_back(head);
  }
  std::make_heap(heap_.begin(), heap_.end(),
                 [this](const Head& a, const Head& b) { return after(a, b); });
}

bool MergeStream::after(const Head& a, const Head& b) const {
  const int c = order_.compare(a.view.key, b.view.key);
  if (c != 0) return c > 0;
  return a.source > b.source;
}

bool MergeStream::next(KvView& out) {
  auto cmp = [this](const Head& a, const Head& b) { return after(a, b); };
  // The previous head is advanced lazily so its view stays valid until now.
  if (pending_) {
    pending_ = false;
    Head head{{}, last_.source};
    if (sources_[head.source]->next(head.view)) {
      heap_.push_back(head);
      std::push_heap(heap_.begin(), heap_.end(), cmp);
    }
  }
  if (heap_.empty()) return false;
  std::pop_heap(heap_.begin(), heap_.end(), cmp);
  last_ = heap_.back();
  heap_.pop_back();
  pending_ = true;
  out = last_.view;
  return true;
}

std::unique_ptr<KvStream> merge_runs(std::vector<SortedRun> runs, KeyOrder order,
                                     const fs::path& scratchDir, const std::string& namePrefix,
                                     std::size_t fanIn, ShuffleStats& stats) {
  if (fanIn < 2) throw ValidationError("merge fan-in must be at least 2");
  std::size_t pass = 0;
  while (runs.size() > fanIn) {
    std::vector<SortedRun> merged;
    for (std::size_t g = 0; g * fanIn < runs.size(); ++g) {
      const std::size_t first = g * fanIn;
      const std::size_t last = std::min(runs.size(), first + fanIn);
      std::vector<std::unique_ptr<KvStream>> sources;
      for (std::size_t i = first; i < last; ++i) {
        sources.push_back(std::make_unique<RunReader>(runs[i]));
      }
      MergeStream stream(std::move(sources), order);
      RunWriter writer(scratchDir / fmt::format("{}-pass{}-{}", namePrefix, pass, g));
      KvView kv;
      while (stream.next(kv)) writer.add(kv.key, kv.value);
      merged.push_back(writer.finish_run());
      writer.close();
      ++stats.runsWritten;
    }
    runs = std::move(merged);
    ++pass;
    ++stats.mergePasses;
  }
  std::vector<std::unique_ptr<KvStream>> sources;
  for (const auto& run : runs) sources.push_back(std::make_unique<RunReader>(run));
  if (sources.size() == 1) return std::move(sources.front());
  if (sources.size() > 1) ++stats.mergePasses;
  return std::make_unique<MergeStream>(std::move(sources), order);
}

SpillBuffer::SpillBuffer(std::size_t partitions, std::uint64_t budget, KeyOrder order,
                         fs::path scratchDir, std::string namePrefix)
    : partitions_(partitions),
      budget_(budget),
      order_(order),
      scratchDir_(std::move(scratchDir)),
      namePrefix_(std::move(namePrefix)),
      runs_(partitions) {
  if (partitions_ == 0) throw ValidationError("spill buffer needs at least one partition");
}

void SpillBuffer::add(std::size_t partition, std::string_view key, std::string_view value) {
  if (partition >= partitions_) {
    throw InvariantError(
        fmt::format("partition {} outside [0, {})", partition, partitions_));
  }
  const std::uint64_t size = frame_bytes(key, value);
  if (!entries_.empty() && bufferedBytes_ + size > budget_) spill();
  entries_.push_back({partition, arena_.size(), checked_length(key.size()),
                      checked_length(value.size())});
  arena_.append(key);
  arena_.append(value);
  bufferedBytes_ += size;
  stats_.peakBufferedBytes = std::max(stats_.peakBufferedBytes, bufferedBytes_);
  ++stats_.recordCount;
}

void SpillBuffer::sort_entries() {
  const char* base = arena_.data();
  std::sort(entries_.begin(), entries_.end(), [&](const Entry& a, const Entry& b) {
    if (a.partition != b.partition) return a.partition < b.partition;
    return order_.less(std::string_view(base + a.keyOffset, a.keyLength),
                       std::string_view(base + b.keyOffset, b.keyLength));
  });
}

void SpillBuffer::spill() {
  if (entries_.empty()) return;
  sort_entries();
  const fs::path path = scratchDir_ / fmt::format("{}-spill{}", namePrefix_, spillCount_++);
  RunWriter writer(path);
  const char* base = arena_.data();
  std::size_t i = 0;
  while (i < entries_.size()) {
    const std::size_t partition = entries_[i].partition;
    for (; i < entries_.size() && entries_[i].partition == partition; ++i) {
      const Entry& e = entries_[i];
      writer.add(std::string_view(base + e.keyOffset, e.keyLength),
                 std::string_view(base + e.keyOffset + e.keyLength, e.valueLength));
    }
    runs_[partition].push_back(writer.finish_run());
    ++stats_.runsWritten;
  }
  writer.close();
  entries_.clear();
  arena_.clear();
  bufferedBytes_ = 0;
}

std::unique_ptr<KvStream> SpillBuffer::release_sorted() {
  if (partitions_ != 1) throw InvariantError("release_sorted needs a single-partition buffer");
  sort_entries();
  std::vector<VectorStream::Slice> slices;
  slices.reserve(entries_.size());
  for (const Entry& e : entries_) slices.push_back({e.keyOffset, e.keyLength, e.valueLength});
  std::string arena = std::move(arena_);
  entries_.clear();
  arena_.clear();
  bufferedBytes_ = 0;
  return std::make_unique<VectorStream>(std::move(arena), std::move(slices));
}

void ShuffleOptions::validate() const {
  const std::uint64_t minimum = 2 * (maxRecordBytes + kFrameHeaderBytes);
  if (memoryBudget < minimum) {
    throw ValidationError(fmt::format(
        "shuffle memory budget {} is below the minimum {} (two maximal records)", memoryBudget,
        minimum));
  }
  if (fanIn < 2) throw ValidationError("merge fan-in must be at least 2");
}

ExternalSorter::ExternalSorter(ShuffleOptions options)
    : options_((options.validate(), std::move(options))),
      buffer_(1, options_.memoryBudget, options_.order, options_.scratchDir,
              options_.namePrefix) {}

void ExternalSorter::add(std::string_view key, std::string_view value) {
  if (finished_) throw InvariantError("ExternalSorter::add after finish");
  if (frame_bytes(key, value) - kFrameHeaderBytes > options_.maxRecordBytes) {
    throw ValidationError(fmt::format("key/value of {} bytes exceeds maxRecordBytes {}",
                                      key.size() + value.size(), options_.maxRecordBytes));
  }
  buffer_.add(0, key, value);
}

std::unique_ptr<KvStream> ExternalSorter::finish() {
  if (finished_) throw InvariantError("ExternalSorter::finish called twice");
  finished_ = true;
  auto& stats = buffer_.stats();
  if (buffer_.runs()[0].empty()) {
    stats.sortedRuns = buffer_.buffer_empty() ? 0 : 1;
    return buffer_.release_sorted();
  }
  buffer_.spill();
  stats.sortedRuns = buffer_.runs()[0].size();
  return merge_runs(buffer_.runs()[0], options_.order, options_.scratchDir,
                    options_.namePrefix + "-merge", options_.fanIn, stats);
}

}  // namespace rangesort
