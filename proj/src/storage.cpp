#include "rangesort/storage.hpp"

#include <sodium.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <random>

#include <fmt/format.h>

#include "rangesort/error.hpp"
#include "rangesort/record_io.hpp"

namespace rangesort {

namespace {

constexpr unsigned char kDigestKey[crypto_shorthash_siphashx24_KEYBYTES] = {
    0x72, 0x61, 0x6e, 0x67, 0x65, 0x73, 0x6f, 0x72, 0x74, 0x2d, 0x6d, 0x73, 0x65, 0x74, 0x31, 0x00};

std::uint64_t pow10(int exponent) {
  std::uint64_t v = 1;
  for (int i = 0; i < exponent; ++i) v *= 10;
  return v;
}

double parse_double(std::string_view text, std::string_view what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(std::string(text), &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ValidationError(fmt::format("invalid {} '{}'", what, text));
  }
}

class ZipfSampler {
 public:
  ZipfSampler(std::uint64_t ranks, double skew) : cdf_(ranks) {
    double sum = 0;
    for (std::uint64_t r = 1; r <= ranks; ++r) {
      sum += 1.0 / std::pow(static_cast<double>(r), skew);
      cdf_[r - 1] = sum;
    }
  }

  template <typename Rng>
  std::uint64_t operator()(Rng& rng) {
    std::uniform_real_distribution<double> uniform(0.0, cdf_.back());
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), uniform(rng));
    return std::min<std::uint64_t>(cdf_.size(), (it - cdf_.begin()) + 1);
  }

 private:
  std::vector<double> cdf_;
};

}  // namespace

void DatasetSpec::validate() const {
  if (keyWidth < 1 || keyWidth > 18) throw ValidationError("key width must be in [1, 18]");
  if (distribution == Distribution::kZipf && !(zipfSkew > 0)) {
    throw ValidationError("zipf skew must be positive");
  }
  if (distribution == Distribution::kDuplicateHeavy &&
      !(hotKeyFraction > 0 && hotKeyFraction <= 1)) {
    throw ValidationError("hot key fraction must be in (0, 1]");
  }
}

std::string DatasetSpec::distribution_text() const {
  switch (distribution) {
    case Distribution::kUniform:
      return "uniform";
    case Distribution::kZipf:
      return fmt::format("zipf:{}", zipfSkew);
    case Distribution::kDuplicateHeavy:
      return fmt::format("dup:{}", hotKeyFraction);
    case Distribution::kSorted:
      return "sorted";
    case Distribution::kReversed:
      return "reversed";
  }
  return "?";
}

void DatasetSpec::set_distribution(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view name = text.substr(0, colon);
  const std::string_view arg = colon == std::string_view::npos ? "" : text.substr(colon + 1);
  if (name == "uniform" || name == "sorted" || name == "reversed") {
    if (!arg.empty()) throw ValidationError(fmt::format("'{}' takes no parameter", name));
    distribution = name == "uniform" ? Distribution::kUniform
                   : name == "sorted" ? Distribution::kSorted
                                      : Distribution::kReversed;
  } else if (name == "zipf") {
    distribution = Distribution::kZipf;
    if (!arg.empty()) zipfSkew = parse_double(arg, "zipf skew");
  } else if (name == "dup" || name == "duplicate") {
    distribution = Distribution::kDuplicateHeavy;
    if (!arg.empty()) hotKeyFraction = parse_double(arg, "hot key fraction");
  } else {
    throw ValidationError(fmt::format(
        "unknown distribution '{}' (uniform, zipf[:s], dup[:f], sorted, reversed)", text));
  }
  validate();
}

void MultisetDigest::add(std::string_view record) {
  static const bool ready = sodium_init() >= 0;
  if (!ready) throw InvariantError("libsodium failed to initialise");
  unsigned char out[crypto_shorthash_siphashx24_BYTES];
  crypto_shorthash_siphashx24(out, reinterpret_cast<const unsigned char*>(record.data()),
                              record.size(), kDigestKey);
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  for (int i = 0; i < 8; ++i) {
    a |= std::uint64_t{out[i]} << (8 * i);
    b |= std::uint64_t{out[8 + i]} << (8 * i);
  }
  lo += a;
  hi += b;
}

std::string MultisetDigest::hex() const { return fmt::format("{:016x}{:016x}", hi, lo); }

MultisetDigest MultisetDigest::from_hex(std::string_view text) {
  MultisetDigest d;
  auto parse = [&](std::string_view part, std::uint64_t& out) {
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out, 16);
    if (ec != std::errc{} || ptr != part.data() + part.size()) {
      throw ValidationError(fmt::format("invalid multiset digest '{}'", text));
    }
  };
  if (text.size() != 32) throw ValidationError(fmt::format("invalid multiset digest '{}'", text));
  parse(text.substr(0, 16), d.hi);
  parse(text.substr(16), d.lo);
  return d;
}

void Verifier::feed(std::string_view record, std::uint64_t offset) {
  if (havePrevious_ && result_.sorted && order_.less(record, previous_)) {
    result_.sorted = false;
    result_.firstViolationOffset = offset;
  }
  previous_.assign(record);
  havePrevious_ = true;
  result_.multisetHash.add(record);
  ++result_.recordCount;
}

VerificationResult verify_sorted(std::span<const fs::path> files, KeyOrder order) {
  Verifier verifier(order);
  std::uint64_t base = 0;
  for (const auto& file : files) {
    RecordReader reader(file, kVerifyMaxRecordBytes);
    std::string_view record;
    while (reader.next(record)) verifier.feed(record, base + reader.record_offset());
    base += file_size_of(file);
  }
  return verifier.result();
}

VerificationResult verify_sorted(const fs::path& file, KeyOrder order) {
  return verify_sorted(std::span<const fs::path>(&file, 1), order);
}

void oracle_sort(const fs::path& input, const fs::path& output, KeyOrder order,
                 std::uint64_t sizeLimit) {
  const std::uint64_t size = file_size_of(input);
  if (size > sizeLimit) {
    throw ValidationError(fmt::format("{} ({} bytes) exceeds the oracle size limit of {} bytes",
                                      input.string(), size, sizeLimit));
  }
  const std::string data = read_bytes(input, 0, size);
  std::vector<std::string_view> records;
  std::string_view view(data);
  for (std::size_t pos = 0; pos < view.size();) {
    std::size_t nl = view.find('\n', pos);
    if (nl == std::string_view::npos) nl = view.size();
    records.push_back(view.substr(pos, nl - pos));
    pos = nl + 1;
  }
  std::sort(records.begin(), records.end(), order);
  RecordWriter out(output);
  for (const auto r : records) out.write(r);
  out.close();
}

fs::path manifest_path_for(const fs::path& dataset) {
  fs::path p = dataset;
  p += ".manifest";
  return p;
}

void write_manifest(const DatasetManifest& m, const fs::path& path) {
  RecordWriter out(path);
  out.write(fmt::format("size_bytes={}", m.spec.totalBytes));
  out.write(fmt::format("distribution={}", m.spec.distribution_text()));
  out.write(fmt::format("key_width={}", m.spec.keyWidth));
  out.write(fmt::format("seed={}", m.spec.seed));
  out.write(fmt::format("records={}", m.records));
  out.write(fmt::format("bytes={}", m.bytes));
  out.write(fmt::format("multiset_hash={}", m.multisetHash.hex()));
  out.close();
}

DatasetManifest read_manifest(const fs::path& path) {
  std::map<std::string, std::string, std::less<>> fields;
  RecordReader reader(path);
  std::string_view line;
  while (reader.next(line)) {
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError(fmt::format("{}: malformed line '{}'", path.string(), line));
    }
    fields[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 1));
  }
  auto get = [&](std::string_view key) -> const std::string& {
    const auto it = fields.find(key);
    if (it == fields.end()) {
      throw ValidationError(fmt::format("{}: missing field '{}'", path.string(), key));
    }
    return it->second;
  };
  auto number = [&](std::string_view key) {
    const std::string& text = get(key);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
      throw ValidationError(fmt::format("{}: field '{}' is not a number", path.string(), key));
    }
    return v;
  };
  DatasetManifest m;
  m.spec.totalBytes = number("size_bytes");
  m.spec.set_distribution(get("distribution"));
  m.spec.keyWidth = static_cast<int>(number("key_width"));
  m.spec.seed = number("seed");
  m.records = number("records");
  m.bytes = number("bytes");
  m.multisetHash = MultisetDigest::from_hex(get("multiset_hash"));
  return m;
}

std::uint64_t zipf_rank_count(int keyWidth) {
  return std::min<std::uint64_t>(pow10(keyWidth) - 1, 1'000'000);
}

DatasetManifest generate_dataset(const DatasetSpec& spec, const fs::path& path) {
  spec.validate();
  const std::uint64_t keySpace = pow10(spec.keyWidth);
  const std::uint64_t records = spec.totalBytes / (spec.keyWidth + 1);
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::uint64_t> uniformKey(0, keySpace - 1);

  DatasetManifest manifest;
  manifest.spec = spec;
  manifest.records = records;
  RecordWriter out(path);
  auto emit = [&](std::uint64_t key) {
    const std::string text = fmt::format("{:0{}d}", key, spec.keyWidth);
    out.write(text);
    manifest.multisetHash.add(text);
  };

  switch (spec.distribution) {
    case Distribution::kUniform:
      for (std::uint64_t i = 0; i < records; ++i) emit(uniformKey(rng));
      break;
    case Distribution::kZipf: {
      if (records == 0) break;
      ZipfSampler zipf(zipf_rank_count(spec.keyWidth), spec.zipfSkew);
      for (std::uint64_t i = 0; i < records; ++i) emit(zipf(rng));
      break;
    }
    case Distribution::kDuplicateHeavy: {
      const std::uint64_t hot = uniformKey(rng);
      std::bernoulli_distribution isHot(spec.hotKeyFraction);
      for (std::uint64_t i = 0; i < records; ++i) emit(isHot(rng) ? hot : uniformKey(rng));
      break;
    }
    case Distribution::kSorted:
    case Distribution::kReversed: {
      // Random nonnegative steps spread the keys over the key space.
      const std::uint64_t maxStep = records == 0 ? 0 : 2 * (keySpace - 1) / records;
      std::uniform_int_distribution<std::uint64_t> step(0, maxStep);
      std::uint64_t key = 0;
      const bool reversed = spec.distribution == Distribution::kReversed;
      for (std::uint64_t i = 0; i < records; ++i) {
        emit(reversed ? keySpace - 1 - key : key);
        key = std::min(keySpace - 1, key + step(rng));
      }
      break;
    }
  }
  out.close();
  manifest.bytes = out.bytes_written();
  write_manifest(manifest, manifest_path_for(path));
  return manifest;
}

}  // namespace rangesort
