#include "rangesort/record_io.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <fmt/format.h>

#include "rangesort/error.hpp"

namespace rangesort {

namespace {

constexpr std::size_t kReadBlock = 1 << 20;
constexpr std::size_t kWriteBlock = 1 << 20;

std::string errno_text() { return std::strerror(errno); }

void seek_to(std::FILE* f, std::uint64_t offset, const fs::path& path) {
  if (::fseeko(f, static_cast<off_t>(offset), SEEK_SET) != 0) {
    throw IoError(fmt::format("cannot seek to {} in {}: {}", offset, path.string(), errno_text()));
  }
}

}  // namespace

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError(fmt::format("cannot open {}: {}", path.string(), errno_text()));
  return f;
}

bool create_exclusive(const fs::path& path) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
  if (fd < 0) {
    if (errno == EEXIST) return false;
    throw IoError(fmt::format("cannot create {}: {}", path.string(), errno_text()));
  }
  ::close(fd);
  return true;
}

std::uint64_t file_size_of(const fs::path& path) {
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw IoError(fmt::format("cannot stat {}: {}", path.string(), ec.message()));
  return size;
}

std::uint64_t total_size_of(std::span<const fs::path> files) {
  std::uint64_t total = 0;
  for (const auto& f : files) total += file_size_of(f);
  return total;
}

std::string read_bytes(const fs::path& path, std::uint64_t offset, std::uint64_t length) {
  auto f = open_file(path, "rb");
  seek_to(f.get(), offset, path);
  std::string out(length, '\0');
  const std::size_t got = std::fread(out.data(), 1, out.size(), f.get());
  if (got < out.size() && std::ferror(f.get())) {
    throw IoError(fmt::format("read failed on {}", path.string()));
  }
  out.resize(got);
  return out;
}

std::vector<InputSplit> make_splits(std::span<const fs::path> files, std::uint64_t splitBytes) {
  if (splitBytes == 0) throw ValidationError("split size must be at least 1 byte");
  std::vector<InputSplit> splits;
  for (const auto& file : files) {
    const auto size = file_size_of(file);
    for (std::uint64_t begin = 0; begin < size; begin += splitBytes) {
      splits.push_back({file, begin, std::min(size, begin + splitBytes)});
    }
  }
  return splits;
}

RecordReader::RecordReader(const fs::path& path, std::uint64_t maxRecordBytes,
                           std::uint64_t begin, std::uint64_t end)
    : path_(path), file_(open_file(path, "rb")), maxRecordBytes_(maxRecordBytes), end_(end) {
  if (begin == 0) return;
  // The split owns a record starting at `begin` only if the previous byte
  // terminates a record; otherwise the partial record belongs to the
  // previous split.
  seek_to(file_.get(), begin - 1, path_);
  bufferOffset_ = begin - 1;
  if (!fill()) return;
  if (buffer_[0] == '\n') {
    pos_ = 1;
    return;
  }
  // Skip the tail of the record that straddles the boundary.
  for (;;) {
    const void* nl = std::memchr(buffer_.data() + pos_, '\n', buffer_.size() - pos_);
    if (nl != nullptr) {
      pos_ = static_cast<const char*>(nl) - buffer_.data() + 1;
      return;
    }
    pos_ = buffer_.size();
    if (!fill()) return;
  }
}

bool RecordReader::fill() {
  if (eof_) return false;
  // Drop consumed bytes, then append one block.
  if (pos_ > 0) {
    buffer_.erase(0, pos_);
    bufferOffset_ += pos_;
    pos_ = 0;
  }
  const std::size_t old = buffer_.size();
  buffer_.resize(old + kReadBlock);
  const std::size_t got = std::fread(buffer_.data() + old, 1, kReadBlock, file_.get());
  buffer_.resize(old + got);
  if (got < kReadBlock) {
    if (std::ferror(file_.get())) throw IoError(fmt::format("read failed on {}", path_.string()));
    eof_ = true;
  }
  return got > 0;
}

bool RecordReader::next(std::string_view& record) {
  for (;;) {
    if (pos_ < buffer_.size() && bufferOffset_ + pos_ >= end_) return false;
    const std::size_t avail = buffer_.size() - pos_;
    const void* nl = avail ? std::memchr(buffer_.data() + pos_, '\n', avail) : nullptr;
    if (nl != nullptr) {
      const std::size_t len = static_cast<const char*>(nl) - (buffer_.data() + pos_);
      if (len > maxRecordBytes_) break;
      record = std::string_view(buffer_.data() + pos_, len);
      recordOffset_ = bufferOffset_ + pos_;
      pos_ += len + 1;
      return true;
    }
    if (avail > maxRecordBytes_) break;
    if (!fill()) {
      if (pos_ >= buffer_.size()) return false;
      if (bufferOffset_ + pos_ >= end_) return false;
      // Final record without a trailing newline.
      record = std::string_view(buffer_.data() + pos_, buffer_.size() - pos_);
      recordOffset_ = bufferOffset_ + pos_;
      pos_ = buffer_.size();
      return true;
    }
  }
  throw ValidationError(fmt::format("record at offset {} of {} exceeds {} bytes",
                                    bufferOffset_ + pos_, path_.string(), maxRecordBytes_));
}

RecordWriter::RecordWriter(const fs::path& path, bool append)
    : path_(path), file_(open_file(path, append ? "ab" : "wb")) {
  buffer_.reserve(kWriteBlock);
}

RecordWriter::~RecordWriter() {
  if (!file_) return;
  try {
    flush();
  } catch (...) {
  }
}

void RecordWriter::write(std::string_view record) {
  if (buffer_.size() + record.size() + 1 > kWriteBlock) flush();
  if (record.size() + 1 > kWriteBlock) {
    write_raw(record);
    write_raw("\n");
    return;
  }
  buffer_.append(record);
  buffer_.push_back('\n');
  bytesWritten_ += record.size() + 1;
}

void RecordWriter::write_raw(std::string_view bytes) {
  if (buffer_.size() + bytes.size() > kWriteBlock) flush();
  if (bytes.size() > kWriteBlock) {
    if (std::fwrite(bytes.data(), 1, bytes.size(), file_.get()) != bytes.size()) {
      throw IoError(fmt::format("write failed on {}: {}", path_.string(), errno_text()));
    }
  } else {
    buffer_.append(bytes);
  }
  bytesWritten_ += bytes.size();
}

void RecordWriter::flush() {
  if (!file_) throw IoError(fmt::format("write to closed file {}", path_.string()));
  if (buffer_.empty()) return;
  if (std::fwrite(buffer_.data(), 1, buffer_.size(), file_.get()) != buffer_.size()) {
    throw IoError(fmt::format("write failed on {}: {}", path_.string(), errno_text()));
  }
  buffer_.clear();
}

void RecordWriter::close() {
  if (!file_) return;
  flush();
  std::FILE* f = file_.release();
  if (std::fclose(f) != 0) {
    throw IoError(fmt::format("close failed on {}: {}", path_.string(), errno_text()));
  }
}

void append_file(const fs::path& from, RecordWriter& to) {
  auto f = open_file(from, "rb");
  std::string block(kReadBlock, '\0');
  for (;;) {
    const std::size_t got = std::fread(block.data(), 1, block.size(), f.get());
    if (got > 0) to.write_raw(std::string_view(block.data(), got));
    if (got < block.size()) {
      if (std::ferror(f.get())) throw IoError(fmt::format("read failed on {}", from.string()));
      break;
    }
  }
}

std::string part_file_name(std::size_t index) { return fmt::format("part-r-{:05d}", index); }

}  // namespace rangesort
