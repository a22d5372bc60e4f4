#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rangesort {

namespace fs = std::filesystem;

inline constexpr std::uint64_t kDefaultMaxRecordBytes = 4096;

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Opens with fopen semantics; throws IoError naming the path on failure.
FilePtr open_file(const fs::path& path, const char* mode);

// Creates `path` only if it does not already exist. Returns false when the
// name is taken; throws IoError on any other failure.
bool create_exclusive(const fs::path& path);

std::uint64_t file_size_of(const fs::path& path);
std::uint64_t total_size_of(std::span<const fs::path> files);

// Reads exactly [offset, offset + length) of a file, clamped to its end.
std::string read_bytes(const fs::path& path, std::uint64_t offset, std::uint64_t length);

// A contiguous byte range of one input file. A split owns every record whose
// first byte lies in [begin, end); the record may run past `end`.
struct InputSplit {
  fs::path path;
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
};

// Cuts every non-empty file into splits of at most `splitBytes`.
std::vector<InputSplit> make_splits(std::span<const fs::path> files, std::uint64_t splitBytes);

// Streams newline-delimited records. A missing final newline still yields
// the last record. Views returned by next() stay valid until the next call.
class RecordReader {
 public:
  static constexpr std::uint64_t kToEnd = std::numeric_limits<std::uint64_t>::max();

  explicit RecordReader(const fs::path& path,
                        std::uint64_t maxRecordBytes = kDefaultMaxRecordBytes,
                        std::uint64_t begin = 0, std::uint64_t end = kToEnd);
  explicit RecordReader(const InputSplit& split,
                        std::uint64_t maxRecordBytes = kDefaultMaxRecordBytes)
      : RecordReader(split.path, maxRecordBytes, split.begin, split.end) {}

  bool next(std::string_view& record);

  // File offset of the record last returned by next().
  std::uint64_t record_offset() const noexcept { return recordOffset_; }
  const fs::path& path() const noexcept { return path_; }

 private:
  bool fill();

  fs::path path_;
  FilePtr file_;
  std::uint64_t maxRecordBytes_;
  std::uint64_t end_;
  std::string buffer_;
  std::size_t pos_ = 0;
  std::uint64_t bufferOffset_ = 0;  // file offset of buffer_[0]
  std::uint64_t recordOffset_ = 0;
  bool eof_ = false;
};

// Buffered line writer. close() reports write errors; the destructor
// closes silently.
class RecordWriter {
 public:
  explicit RecordWriter(const fs::path& path, bool append = false);
  RecordWriter(RecordWriter&&) noexcept = default;
  RecordWriter& operator=(RecordWriter&&) noexcept = default;
  ~RecordWriter();

  void write(std::string_view record);  // appends record + '\n'
  void write_raw(std::string_view bytes);
  void close();

  std::uint64_t bytes_written() const noexcept { return bytesWritten_; }
  const fs::path& path() const noexcept { return path_; }

 private:
  void flush();

  fs::path path_;
  FilePtr file_;
  std::string buffer_;
  std::uint64_t bytesWritten_ = 0;
};

// Appends a copy of `from` to `to` without interpreting records.
void append_file(const fs::path& from, RecordWriter& to);

// "%05d" reducer output name: part-r-00000.
std::string part_file_name(std::size_t index);

}  // namespace rangesort
