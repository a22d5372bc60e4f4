#include "rangesort/sampling.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

#include <fmt/format.h>

#include "rangesort/error.hpp"
#include "rangesort/record_io.hpp"

namespace rangesort {

void SamplingPlan::validate() const {
  if (sitesPerFile < 1) throw ValidationError("sampling needs at least one site per file");
  if (chunkBytes < 1) throw ValidationError("sampling chunk must be at least 1 byte");
}

void SampleSummary::add(std::string_view key, std::uint64_t count) {
  if (count == 0) return;
  auto it = counts_.find(key);
  if (it == counts_.end()) {
    counts_.emplace(std::string(key), count);
  } else {
    it->second += count;
  }
  sampleCount_ += count;
}

void SampleSummary::merge(const SampleSummary& other) {
  for (const auto& [key, count] : other.counts_) add(key, count);
}

DivisionSites::DivisionSites(std::vector<std::string> sites, KeyOrder order)
    : sites_(std::move(sites)), order_(order) {
  for (std::size_t i = 1; i < sites_.size(); ++i) {
    if (!order_.less(sites_[i - 1], sites_[i])) {
      throw ValidationError(fmt::format("division sites not strictly increasing at {}", i));
    }
  }
}

std::size_t DivisionSites::segment_of(std::string_view key) const {
  // First site >= key; upper-inclusive intervals.
  const auto it = std::lower_bound(
      sites_.begin(), sites_.end(), key,
      [this](const std::string& site, std::string_view k) { return order_.less(site, k); });
  return static_cast<std::size_t>(it - sites_.begin());
}

SiteIndexRule parse_site_rule(std::string_view text) {
  if (text == "interior") return SiteIndexRule::kInteriorMultiples;
  if (text == "block-upper") return SiteIndexRule::kBlockUpperBounds;
  throw ValidationError(fmt::format("unknown site rule '{}' (expected interior or block-upper)",
                                    text));
}

std::string_view to_string(SiteIndexRule rule) {
  return rule == SiteIndexRule::kInteriorMultiples ? "interior" : "block-upper";
}

namespace {

void sample_chunk(const fs::path& file, std::uint64_t fileSize, std::uint64_t offset,
                  std::uint64_t chunkBytes, SampleSummary& out) {
  const std::uint64_t chunkEnd = std::min(fileSize, offset + chunkBytes);
  if (offset >= chunkEnd) return;
  // One extra leading byte tells whether `offset` begins a record.
  const std::uint64_t readFrom = offset == 0 ? 0 : offset - 1;
  const std::string bytes = read_bytes(file, readFrom, chunkEnd - readFrom);
  std::string_view chunk(bytes);
  std::size_t pos = 0;
  if (offset > 0) {
    if (chunk[0] == '\n') {
      pos = 1;
    } else {
      const auto nl = chunk.find('\n');
      if (nl == std::string_view::npos) return;
      pos = nl + 1;
    }
  }
  while (pos < chunk.size()) {
    const auto nl = chunk.find('\n', pos);
    if (nl == std::string_view::npos) {
      // A record cut by the chunk end is discarded unless it ends at EOF.
      if (chunkEnd == fileSize) out.add(chunk.substr(pos));
      return;
    }
    out.add(chunk.substr(pos, nl - pos));
    pos = nl + 1;
  }
}

}  // namespace

SampleSummary take_samples(std::span<const fs::path> files, const SamplingPlan& plan,
                           KeyOrder order) {
  plan.validate();
  SampleSummary summary(order);
  for (const auto& file : files) {
    const std::uint64_t size = file_size_of(file);
    if (size == 0) continue;
    for (std::size_t k = 0; k < plan.sitesPerFile; ++k) {
      const auto offset = static_cast<std::uint64_t>(
          static_cast<unsigned __int128>(k) * size / plan.sitesPerFile);
      sample_chunk(file, size, offset, plan.chunkBytes, summary);
    }
  }
  return summary;
}

std::uint64_t compute_divide_nums(std::uint64_t sampleCount, std::uint64_t blockSize,
                                  std::uint64_t totalLength) {
  if (sampleCount == 0 || blockSize == 0 || totalLength == 0) {
    throw ValidationError(fmt::format(
        "divideNums needs positive arguments (sampleCount={}, blockSize={}, totalLength={})",
        sampleCount, blockSize, totalLength));
  }
  const auto product = static_cast<unsigned __int128>(sampleCount) * blockSize;
  const auto quotient = product / totalLength;
  if (quotient > std::numeric_limits<std::uint64_t>::max()) {
    return std::numeric_limits<std::uint64_t>::max();
  }
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(quotient));
}

DivisionSites compute_division_sites(const SampleSummary& summary, std::uint64_t divideNums,
                                     SiteIndexRule rule) {
  if (divideNums < 1) throw ValidationError("divideNums must be at least 1");
  const std::uint64_t n = summary.sample_count();
  const KeyOrder order = summary.order();
  std::vector<std::string> sites;

  // Walk the sorted multiset once; `target` is the next sorted-sample index
  // whose key becomes a candidate site.
  std::uint64_t target = rule == SiteIndexRule::kInteriorMultiples ? divideNums : divideNums - 1;
  std::uint64_t seen = 0;
  for (const auto& [key, count] : summary.counts()) {
    if (target >= n) break;
    while (target < seen + count && target < n) {
      if (sites.empty() || order.less(sites.back(), key)) sites.push_back(key);
      target += divideNums;
    }
    seen += count;
  }
  return DivisionSites(std::move(sites), order);
}

std::size_t reducer_count(std::size_t numSites, std::size_t maxReducers) {
  if (maxReducers < 1) throw ValidationError("maxReducers must be at least 1");
  return std::min(numSites + 1, maxReducers);
}

PartitionPlan make_partition_plan(const SampleSummary& summary, std::uint64_t blockSize,
                                  std::uint64_t totalLength, std::size_t maxReducers,
                                  SiteIndexRule rule) {
  PartitionPlan plan;
  plan.blockSize = blockSize;
  plan.totalLength = totalLength;
  if (summary.sample_count() > 0 && totalLength > 0) {
    plan.divideNums = compute_divide_nums(summary.sample_count(), blockSize, totalLength);
    plan.sites = compute_division_sites(summary, plan.divideNums, rule);
  } else {
    plan.sites = DivisionSites({}, summary.order());
  }
  plan.reducerCount = reducer_count(plan.sites.sites().size(), maxReducers);
  return plan;
}

}  // namespace rangesort
