#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "rangesort/cli.hpp"
#include "rangesort/engine.hpp"
#include "rangesort/error.hpp"
#include "rangesort/storage.hpp"

namespace rangesort::cli {

namespace {

// Flag values shared by `sort` and `bench`. Defaults come from JobConfig.
struct ConfigFlags {
  std::string blockSize;
  std::string threshold;
  std::size_t maxReducers;
  std::size_t maxFileRounds;
  std::size_t sampleSites;
  std::string sampleChunk;
  std::uint64_t seed;
  std::size_t workers;
  bool keepTemp = false;
  std::string keyMode;
  std::string siteRule;
  std::string splitSize;
  std::string maxRecordBytes;

  ConfigFlags() {
    const JobConfig d;
    blockSize = format_size(d.blockSize);
    maxReducers = d.maxReducers;
    maxFileRounds = d.maxFileRounds;
    sampleSites = d.samplingPlan.sitesPerFile;
    sampleChunk = format_size(d.samplingPlan.chunkBytes);
    seed = d.seed;
    workers = d.workers;
    keyMode = std::string(to_string(d.keyMode));
    siteRule = std::string(to_string(d.siteRule));
    splitSize = format_size(d.splitBytes);
    maxRecordBytes = format_size(d.maxRecordBytes);
  }

  void attach(CLI::App& app) {
    app.add_option("--block-size", blockSize, "Target bytes per segment (K/M/G suffixes)");
    app.add_option("--threshold", threshold, "Largest segment sorted in memory; shuffle budget")
        ->default_str("same as --block-size");
    app.add_option("--max-reducers", maxReducers, "Upper bound on reducers per round");
    app.add_option("--max-file-rounds", maxFileRounds,
                   "File-based rounds before the shuffle fallback");
    app.add_option("--sample-sites", sampleSites, "Sampled positions per input file");
    app.add_option("--sample-chunk", sampleChunk, "Bytes read at each sampled position");
    app.add_option("--seed", seed, "Seed for intermediate file names");
    app.add_option("--workers", workers, "Worker threads (0 = host parallelism)");
    app.add_flag("--keep-temp", keepTemp, "Keep intermediate and spill files");
    app.add_option("--key-mode", keyMode, "Key order: lexicographic or numeric")
        ->check(CLI::IsMember({"lexicographic", "numeric"}));
    app.add_option("--site-rule", siteRule,
                   "Sorted-sample positions used as sites: interior or block-upper")
        ->check(CLI::IsMember({"interior", "block-upper"}));
    app.add_option("--split-size", splitSize, "Input bytes per map task");
    app.add_option("--max-record-bytes", maxRecordBytes, "Longest accepted record");
  }

  JobConfig to_config() const {
    JobConfig cfg;
    cfg.blockSize = parse_size(blockSize);
    cfg.memoryThreshold = threshold.empty() ? cfg.blockSize : parse_size(threshold);
    cfg.maxReducers = maxReducers;
    cfg.maxFileRounds = maxFileRounds;
    cfg.samplingPlan.sitesPerFile = sampleSites;
    cfg.samplingPlan.chunkBytes = parse_size(sampleChunk);
    cfg.seed = seed;
    cfg.workers = workers;
    cfg.keepTemp = keepTemp;
    cfg.keyMode = parse_key_mode(keyMode);
    cfg.siteRule = parse_site_rule(siteRule);
    cfg.splitBytes = parse_size(splitSize);
    cfg.maxRecordBytes = parse_size(maxRecordBytes);
    cfg.validate();
    return cfg;
  }
};

// Points the work directories at `out`, honouring SORT_SCRATCH_DIR.
void place_dirs(JobConfig& cfg, const fs::path& out) {
  cfg.use_work_dir(out);
  if (const char* scratch = std::getenv("SORT_SCRATCH_DIR"); scratch != nullptr && *scratch) {
    cfg.scratchDir = fs::path(scratch) / fmt::format("rangesort-{}", ::getpid());
  }
}

template <typename Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ValidationError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const InvariantError& e) {
    fmt::print(err, "internal error: {}\n", e.what());
    return kExitInvariant;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitRuntime;
  }
}

std::vector<fs::path> to_paths(const std::vector<std::string>& names) {
  return {names.begin(), names.end()};
}

// Output files of a finished run, in concatenation order.
std::vector<fs::path> output_files_of(const fs::path& target) {
  if (!fs::is_directory(target)) {
    if (!fs::exists(target)) throw IoError(fmt::format("{} does not exist", target.string()));
    return {target};
  }
  if (fs::is_directory(target / "result")) return ordered_result_files(target / "result");
  std::vector<fs::path> parts;
  for (const auto& entry : fs::directory_iterator(target)) {
    if (entry.is_regular_file() && entry.path().filename().string().starts_with("part-r-")) {
      parts.push_back(entry.path());
    }
  }
  if (!parts.empty()) {
    std::sort(parts.begin(), parts.end());
    return parts;
  }
  return ordered_result_files(target);
}

std::string shuffle_report(const BaselineResult& result, std::chrono::duration<double> elapsed,
                           const fs::path& outDir) {
  return fmt::format(
      "mode: shuffle\nreducers: {}\nmap_tasks: {}\nrecords: {}\nruns_written: {}\n"
      "merge_passes: {}\npeak_buffered_bytes: {}\nelapsed_s: {:.3f}\noutput_dir: {}\n",
      result.reducerCount, result.stats.mapTasks, result.stats.reducedRecords,
      result.stats.runsWritten, result.stats.mergePasses, result.stats.peakBufferedBytes,
      elapsed.count(), outDir.string());
}

struct SortFlags {
  std::vector<std::string> inputs;
  std::string mode = "partition";
  std::string out;
  std::string partitioner = "range";
  ConfigFlags config;
};

int cmd_sort(const SortFlags& flags, std::ostream& out) {
  JobConfig cfg = flags.config.to_config();
  const auto inputs = to_paths(flags.inputs);
  const fs::path outDir = flags.out.empty() ? fs::path(flags.inputs.front() + ".sorted")
                                            : fs::path(flags.out);
  place_dirs(cfg, outDir);
  if (flags.mode == "partition") {
    const auto report = run_partition_sort(inputs, cfg);
    out << format_report(report);
    return kExitOk;
  }
  const auto start = std::chrono::steady_clock::now();
  const auto mode = flags.partitioner == "hash" ? BaselinePartitioner::kHash
                                                : BaselinePartitioner::kRange;
  if (cfg.scratchDir == outDir / "scratch") cfg.scratchDir = outDir / "_scratch";
  const auto result = baseline_shuffle_sort(inputs, cfg, outDir, mode);
  if (!cfg.keepTemp) {
    std::error_code ec;
    fs::remove_all(cfg.scratchDir, ec);
  }
  out << shuffle_report(result, std::chrono::steady_clock::now() - start, outDir);
  return kExitOk;
}

struct GenFlags {
  std::string size = "0";
  std::string dist = "uniform";
  std::uint64_t seed = 1;
  int keyWidth = 10;
  std::string out = "data.txt";
};

int cmd_gen(const GenFlags& flags, std::ostream& out) {
  DatasetSpec spec;
  spec.totalBytes = parse_size(flags.size);
  spec.set_distribution(flags.dist);
  spec.seed = flags.seed;
  spec.keyWidth = flags.keyWidth;
  const fs::path path(flags.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto manifest = generate_dataset(spec, path);
  fmt::print(out, "dataset: {}\nmanifest: {}\nrecords: {}\nbytes: {}\nmultiset_hash: {}\n",
             path.string(), manifest_path_for(path).string(), manifest.records, manifest.bytes,
             manifest.multisetHash.hex());
  return kExitOk;
}

struct VerifyFlags {
  std::string target;
  std::string manifest;
  std::string keyMode = "lexicographic";
};

int cmd_verify(const VerifyFlags& flags, std::ostream& out) {
  const auto files = output_files_of(flags.target);
  const auto result = verify_sorted(files, KeyOrder{parse_key_mode(flags.keyMode)});
  bool ok = result.sorted;
  fmt::print(out, "records: {}\nsorted: {}\nfirst_violation_offset: {}\nmultiset_hash: {}\n",
             result.recordCount, result.sorted ? "true" : "false",
             result.firstViolationOffset ? fmt::format("{}", *result.firstViolationOffset)
                                         : "none",
             result.multisetHash.hex());
  if (!flags.manifest.empty()) {
    const auto manifest = read_manifest(flags.manifest);
    const bool match =
        manifest.multisetHash == result.multisetHash && manifest.records == result.recordCount;
    fmt::print(out, "manifest_match: {}\n", match ? "true" : "false");
    ok = ok && match;
  }
  return ok ? kExitOk : kExitVerifyFailed;
}

struct BenchFlags {
  std::vector<std::string> sizes{"30M", "60M", "100M"};
  std::string dist = "uniform";
  std::uint64_t dataSeed = 1;
  std::size_t repetitions = 3;
  std::string out = "bench_work";
  std::string csv;
  std::string baselineBudget;
  bool keepData = false;
  ConfigFlags config;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

int cmd_bench(const BenchFlags& flags, std::ostream& out, std::ostream& err) {
  const JobConfig base = flags.config.to_config();
  if (flags.repetitions < 1) throw ValidationError("--reps must be at least 1");
  std::vector<std::uint64_t> sizes;
  for (const auto& s : flags.sizes) sizes.push_back(parse_size(s));
  std::sort(sizes.begin(), sizes.end());
  const KeyOrder order = base.key_order();
  const fs::path work(flags.out);
  fs::create_directories(work);

  std::vector<BenchRow> rows;
  bool allVerified = true;
  for (const std::uint64_t size : sizes) {
    DatasetSpec spec;
    spec.totalBytes = size;
    spec.set_distribution(flags.dist);
    spec.seed = flags.dataSeed;
    const fs::path data = work / fmt::format("data-{}.txt", format_size(size));
    const auto manifest = generate_dataset(spec, data);
    const std::vector<fs::path> inputs{data};

    BenchRow row;
    row.sizeBytes = size;
    row.verified = true;
    auto check = [&](const std::vector<fs::path>& files) {
      const auto v = verify_sorted(files, order);
      return v.sorted && v.multisetHash == manifest.multisetHash &&
             v.recordCount == manifest.records;
    };

    for (const bool partition : {false, true}) {
      const fs::path runDir = work / fmt::format("run-{}-{}", format_size(size),
                                                 partition ? "partition" : "shuffle");
      std::vector<double> times;
      std::vector<fs::path> outputs;
      try {
        for (std::size_t rep = 0; rep < flags.repetitions; ++rep) {
          fs::remove_all(runDir);
          JobConfig cfg = base;
          place_dirs(cfg, runDir);
          const auto start = std::chrono::steady_clock::now();
          if (partition) {
            const auto report = run_partition_sort(inputs, cfg);
            row.roundsExecuted = report.roundsExecuted;
          } else {
            if (!flags.baselineBudget.empty()) {
              cfg.shuffleBudget = parse_size(flags.baselineBudget);
            }
            outputs = baseline_shuffle_sort(inputs, cfg, runDir / "out").outputs;
          }
          times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                              .count());
        }
        if (partition) outputs = ordered_result_files(runDir / "result");
        const bool verified = check(outputs);
        row.verified = row.verified && verified;
        (partition ? row.partitionSeconds : row.baselineSeconds) = median(times);
      } catch (const std::exception& e) {
        fmt::print(err, "{} {} run failed: {}\n", format_size(size),
                   partition ? "new_partition" : "baseline", e.what());
      }
      if (!flags.keepData) fs::remove_all(runDir);
    }
    if (!flags.keepData) {
      fs::remove(data);
      fs::remove(manifest_path_for(data));
    }
    if (!row.verified) {
      allVerified = false;
      fmt::print(err, "{}: output failed verification; row omitted from the report\n",
                 format_size(size));
      continue;
    }
    rows.push_back(row);
  }

  const fs::path csvPath = flags.csv.empty() ? work / "bench.csv" : fs::path(flags.csv);
  std::ofstream csv(csvPath);
  csv << render_bench_csv(rows);
  if (!csv) throw IoError(fmt::format("cannot write {}", csvPath.string()));
  out << render_bench_table(rows, flags.repetitions);
  fmt::print(out, "csv: {}\n", csvPath.string());
  return allVerified ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Range-partitioned external sorting and a shuffle-sort baseline", "rangesort"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  GenFlags gen;
  auto* genCmd = app.add_subcommand("gen", "Generate a dataset and its manifest");
  genCmd->add_option("--size", gen.size, "Dataset bytes (K/M/G suffixes)");
  genCmd->add_option("--dist", gen.dist, "uniform, zipf[:s], dup[:fraction], sorted, reversed");
  genCmd->add_option("--seed", gen.seed, "Generator seed");
  genCmd->add_option("--key-width", gen.keyWidth, "Digits per key");
  genCmd->add_option("--out", gen.out, "Dataset path; the manifest is <out>.manifest");

  SortFlags sort;
  auto* sortCmd = app.add_subcommand("sort", "Sort files with the partition sorter or the shuffle");
  sortCmd->add_option("inputs", sort.inputs, "Input files")->required()->default_str("");
  sortCmd->add_option("--mode", sort.mode, "partition or shuffle")
      ->check(CLI::IsMember({"partition", "shuffle"}));
  sortCmd->add_option("--out", sort.out, "Output directory")->default_str("<first input>.sorted");
  sortCmd->add_option("--partitioner", sort.partitioner, "Shuffle mode partitioner: range or hash")
      ->check(CLI::IsMember({"range", "hash"}));
  sort.config.attach(*sortCmd);

  VerifyFlags verify;
  auto* verifyCmd =
      app.add_subcommand("verify", "Check that a file or sort output is sorted; exit 1 if not");
  verifyCmd->add_option("target", verify.target, "File, sort output directory, or result directory")
      ->required();
  verifyCmd->add_option("--manifest", verify.manifest, "Dataset manifest to compare against");
  verifyCmd->add_option("--key-mode", verify.keyMode, "Key order: lexicographic or numeric")
      ->check(CLI::IsMember({"lexicographic", "numeric"}));

  BenchFlags bench;
  auto* benchCmd = app.add_subcommand("bench", "Time both sorters over a list of dataset sizes");
  benchCmd->add_option("--sizes", bench.sizes, "Dataset sizes")
      ->delimiter(',')
      ->default_str("30M,60M,100M");
  benchCmd->add_option("--dist", bench.dist, "Dataset distribution");
  benchCmd->add_option("--data-seed", bench.dataSeed, "Dataset generator seed");
  benchCmd->add_option("--reps", bench.repetitions, "Timed repetitions per cell (median)");
  benchCmd->add_option("--out", bench.out, "Work directory");
  benchCmd->add_option("--csv", bench.csv, "CSV path")->default_str("<out>/bench.csv");
  benchCmd->add_option("--baseline-budget", bench.baselineBudget,
                       "Shuffle budget for the baseline column only")
      ->default_str("same as --threshold");
  benchCmd->add_flag("--keep-data", bench.keepData, "Keep datasets and outputs");
  bench.config.attach(*benchCmd);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  return guarded(err, [&] {
    if (genCmd->parsed()) return cmd_gen(gen, out);
    if (sortCmd->parsed()) return cmd_sort(sort, out);
    if (verifyCmd->parsed()) return cmd_verify(verify, out);
    return cmd_bench(bench, out, err);
  });
}

}  // namespace rangesort::cli
