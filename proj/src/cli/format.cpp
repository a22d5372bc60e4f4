#include <algorithm>
#include <charconv>
#include <limits>

#include <fmt/format.h>

#include "rangesort/cli.hpp"
#include "rangesort/error.hpp"

namespace rangesort::cli {

std::uint64_t parse_size(std::string_view text) {
  std::uint64_t multiplier = 1;
  std::string_view digits = text;
  if (!text.empty()) {
    switch (text.back()) {
      case 'K':
      case 'k':
        multiplier = 1ull << 10;
        break;
      case 'M':
      case 'm':
        multiplier = 1ull << 20;
        break;
      case 'G':
      case 'g':
        multiplier = 1ull << 30;
        break;
      default:
        break;
    }
    if (multiplier != 1) digits.remove_suffix(1);
  }
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (digits.empty() || ec != std::errc{} || ptr != digits.data() + digits.size()) {
    throw ValidationError(fmt::format("invalid size '{}' (expected e.g. 4096, 64K, 20M, 1G)", text));
  }
  if (value > std::numeric_limits<std::uint64_t>::max() / multiplier) {
    throw ValidationError(fmt::format("size '{}' overflows", text));
  }
  return value * multiplier;
}

std::string format_size(std::uint64_t bytes) {
  if (bytes != 0) {
    if (bytes % (1ull << 30) == 0) return fmt::format("{}G", bytes >> 30);
    if (bytes % (1ull << 20) == 0) return fmt::format("{}M", bytes >> 20);
    if (bytes % (1ull << 10) == 0) return fmt::format("{}K", bytes >> 10);
  }
  return fmt::format("{}", bytes);
}

std::string format_report(const SortReport& report) {
  std::string out;
  auto line = [&out](std::string_view key, const auto& value) {
    out += fmt::format("{}: {}\n", key, value);
  };
  line("mode", "partition");
  line("bytes_sorted", report.bytesSorted);
  line("rounds_executed", report.roundsExecuted);
  line("segments_per_round", fmt::format("{}", fmt::join(report.segmentsPerRound, ",")));
  line("deferred_per_round", fmt::format("{}", fmt::join(report.deferredPerRound, ",")));
  line("fallback_used", report.fallbackUsed ? "true" : "false");
  line("guard_hits", report.guardHits);
  line("peak_loaded_bytes", report.peakLoadedBytes);
  line("elapsed_s", fmt::format("{:.3f}", report.elapsed.count()));
  line("result_dir", report.resultDir.string());
  return out;
}

namespace {

std::string seconds_cell(const std::optional<double>& s, std::string_view failed) {
  return s ? fmt::format("{:.3f}", *s) : std::string(failed);
}

std::vector<BenchRow> by_size(std::vector<BenchRow> rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const BenchRow& a, const BenchRow& b) { return a.sizeBytes < b.sizeBytes; });
  return rows;
}

}  // namespace

std::string render_bench_csv(const std::vector<BenchRow>& rows) {
  std::string out = "size,baseline_s,new_partition_s,rounds,verified\n";
  for (const auto& row : by_size(rows)) {
    out += fmt::format("{},{},{},{},{}\n", format_size(row.sizeBytes),
                       seconds_cell(row.baselineSeconds, "FAILED"),
                       seconds_cell(row.partitionSeconds, "FAILED"),
                       row.partitionSeconds ? fmt::format("{}", row.roundsExecuted) : "",
                       row.verified ? "true" : "false");
  }
  return out;
}

std::string render_bench_table(const std::vector<BenchRow>& rows, std::size_t repetitions) {
  std::string out = fmt::format("{:<8}{:>14}{:>19}{:>9}{:>11}\n", "size", "baseline(s)",
                                "new_partition(s)", "rounds", "verified");
  for (const auto& row : by_size(rows)) {
    out += fmt::format("{:<8}{:>14}{:>19}{:>9}{:>11}\n", format_size(row.sizeBytes),
                       seconds_cell(row.baselineSeconds, "---"),
                       seconds_cell(row.partitionSeconds, "---"),
                       row.partitionSeconds ? fmt::format("{}", row.roundsExecuted) : "---",
                       row.verified ? "true" : "false");
  }
  out += fmt::format(
      "\nWall-clock median of {} run(s) per cell on this host, including sampling.\n"
      "\"---\" marks a run that failed. Absolute times depend on the machine.\n",
      repetitions);
  return out;
}

}  // namespace rangesort::cli
