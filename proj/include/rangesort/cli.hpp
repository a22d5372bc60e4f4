#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rangesort/partition_sort.hpp"

namespace rangesort::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitVerifyFailed = 1,
  kExitUsage = 2,  // bad flags or invalid configuration
  kExitRuntime = 3,  // I/O or task failure
  kExitInvariant = 4,  // internal invariant violated
};

// Entry point shared by the executable and the tests. args[0] is the
// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Byte counts with optional K/M/G suffix (powers of 1024).
std::uint64_t parse_size(std::string_view text);
// Inverse of parse_size for exact multiples; plain bytes otherwise.
std::string format_size(std::uint64_t bytes);

std::string format_report(const SortReport& report);

struct BenchRow {
  std::uint64_t sizeBytes = 0;
  std::optional<double> baselineSeconds;   // empty: the run failed
  std::optional<double> partitionSeconds;  // empty: the run failed
  std::size_t roundsExecuted = 0;
  bool verified = false;
};

// size,baseline_s,new_partition_s,rounds,verified with FAILED cells.
std::string render_bench_csv(const std::vector<BenchRow>& rows);
// Aligned table; a failed run renders as "---".
std::string render_bench_table(const std::vector<BenchRow>& rows, std::size_t repetitions);

}  // namespace rangesort::cli
