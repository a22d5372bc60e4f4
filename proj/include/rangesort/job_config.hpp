#pragma once

#include <cstdint>
#include <filesystem>

#include "rangesort/key_order.hpp"
#include "rangesort/record_io.hpp"
#include "rangesort/sampling.hpp"

namespace rangesort {

namespace fs = std::filesystem;

inline constexpr std::uint64_t kMiB = 1ull << 20;

// Settings shared by the partition sorter and the shuffle baseline.
struct JobConfig {
  // Target bytes of data per reduce segment.
  std::uint64_t blockSize = 20 * kMiB;
  // Largest segment sorted in memory; also the shuffle buffer budget.
  std::uint64_t memoryThreshold = 20 * kMiB;
  std::size_t maxReducers = 64;
  std::size_t maxFileRounds = 2;
  SamplingPlan samplingPlan;
  SiteIndexRule siteRule = SiteIndexRule::kInteriorMultiples;
  std::uint64_t seed = 1;
  KeyMode keyMode = KeyMode::kLexicographic;
  // 0 selects host parallelism; 1 with a fixed seed is the deterministic mode.
  std::size_t workers = 0;
  std::uint64_t splitBytes = 16 * kMiB;
  std::uint64_t maxRecordBytes = kDefaultMaxRecordBytes;
  bool keepTemp = false;
  // Buffer budget of shuffle jobs; 0 means memoryThreshold.
  std::uint64_t shuffleBudget = 0;

  fs::path middleDir;
  fs::path resultDir;
  // Deferred-segment lists, one subdirectory per round.
  fs::path outputDir;
  // Spill files of shuffle jobs.
  fs::path scratchDir;

  // Points every directory at a conventional layout under `workDir`:
  // middle/, result/, output/, and scratch/.
  void use_work_dir(const fs::path& workDir);

  KeyOrder key_order() const { return KeyOrder{keyMode}; }
  std::uint64_t shuffle_budget() const { return shuffleBudget ? shuffleBudget : memoryThreshold; }

  // Throws ValidationError on inconsistent settings.
  void validate() const;
};

}  // namespace rangesort
