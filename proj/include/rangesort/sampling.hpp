#pragma once

// Positional sampling of input files and the division-site arithmetic that
// turns a sample into a range partition.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rangesort/key_order.hpp"

namespace rangesort {

namespace fs = std::filesystem;

struct SamplingPlan {
  std::size_t sitesPerFile = 3;
  std::uint64_t chunkBytes = 4096;

  void validate() const;
};

// Key -> occurrence count over every sampled record.
class SampleSummary {
 public:
  using Counts = std::map<std::string, std::uint64_t, KeyOrder>;

  explicit SampleSummary(KeyOrder order = {}) : counts_(order) {}

  void add(std::string_view key, std::uint64_t count = 1);
  void merge(const SampleSummary& other);

  const Counts& counts() const noexcept { return counts_; }
  std::uint64_t sample_count() const noexcept { return sampleCount_; }
  KeyOrder order() const { return counts_.key_comp(); }

 private:
  Counts counts_;
  std::uint64_t sampleCount_ = 0;
};

// Strictly increasing boundary keys. Segment 0 is (-inf, sites[0]],
// segment i is (sites[i-1], sites[i]], the last is (sites.back(), +inf).
class DivisionSites {
 public:
  DivisionSites() = default;
  // Throws ValidationError unless `sites` is strictly increasing.
  DivisionSites(std::vector<std::string> sites, KeyOrder order);

  const std::vector<std::string>& sites() const noexcept { return sites_; }
  std::size_t segment_count() const noexcept { return sites_.size() + 1; }
  KeyOrder order() const noexcept { return order_; }

  std::size_t segment_of(std::string_view key) const;

 private:
  std::vector<std::string> sites_;
  KeyOrder order_;
};

inline std::size_t segment_of(std::string_view key, const DivisionSites& sites) {
  return sites.segment_of(key);
}

// Which positions of the sorted sample become sites, given stride d and
// sample count n.
enum class SiteIndexRule {
  // Indices d, 2d, ... strictly below n (0-based).
  kInteriorMultiples,
  // Indices d-1, 2d-1, ... up to n-1: the last sample of every full block
  // of d samples.
  kBlockUpperBounds,
};

SiteIndexRule parse_site_rule(std::string_view text);
std::string_view to_string(SiteIndexRule rule);

struct PartitionPlan {
  DivisionSites sites;
  std::uint64_t divideNums = 1;
  std::size_t reducerCount = 1;
  std::uint64_t blockSize = 0;
  std::uint64_t totalLength = 0;
};

// Reads plan.sitesPerFile chunks of plan.chunkBytes from each file at
// offsets k * size / sitesPerFile and counts every record that both starts
// and ends inside its chunk. The first record of a chunk counts only when
// the chunk starts on a record boundary.
SampleSummary take_samples(std::span<const fs::path> files, const SamplingPlan& plan,
                           KeyOrder order = {});

// max(1, floor(sampleCount * blockSize / totalLength)).
std::uint64_t compute_divide_nums(std::uint64_t sampleCount, std::uint64_t blockSize,
                                  std::uint64_t totalLength);

DivisionSites compute_division_sites(const SampleSummary& summary, std::uint64_t divideNums,
                                     SiteIndexRule rule = SiteIndexRule::kInteriorMultiples);

std::size_t reducer_count(std::size_t numSites, std::size_t maxReducers);

// Full plan for one target. An empty sample yields a single segment.
PartitionPlan make_partition_plan(const SampleSummary& summary, std::uint64_t blockSize,
                                  std::uint64_t totalLength, std::size_t maxReducers,
                                  SiteIndexRule rule = SiteIndexRule::kInteriorMultiples);

}  // namespace rangesort
