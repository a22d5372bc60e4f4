// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "rangesort/engine.hpp"
#include "rangesort/partition_sort.hpp"
#include "rangesort/sampling.hpp"
#include "rangesort/shuffle.hpp"
#include "rangesort/storage.hpp"
#include "testing/fixtures.hpp"

namespace rs = rangesort;
namespace t = rangesort::testing;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kKiB = 1024;
constexpr std::uint64_t kMiB = 1024 * 1024;

struct Verdict {
  bool pass = false;
  std::string detail;
};

Verdict pass(std::string detail) { return {true, std::move(detail)}; }
Verdict fail(std::string detail) { return {false, std::move(detail)}; }

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary);
  std::ifstream fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  std::vector<char> ba(1 << 20);
  std::vector<char> bb(1 << 20);
  for (;;) {
    fa.read(ba.data(), static_cast<std::streamsize>(ba.size()));
    fb.read(bb.data(), static_cast<std::streamsize>(bb.size()));
    if (fa.gcount() != fb.gcount()) return false;
    if (!std::equal(ba.begin(), ba.begin() + fa.gcount(), bb.begin())) return false;
    if (fa.gcount() == 0) return true;
  }
}

rs::JobConfig config_in(const fs::path& work, std::uint64_t block, std::uint64_t threshold) {
  rs::JobConfig cfg;
  cfg.use_work_dir(work);
  cfg.blockSize = block;
  cfg.memoryThreshold = threshold;
  cfg.workers = 1;
  return cfg;
}

// Runs the partition sort and compares the assembled output with the
// oracle sort of `data`.
bool sorts_like_oracle(const fs::path& data, const rs::JobConfig& cfg, const fs::path& scratch,
                       rs::SortReport* report = nullptr) {
  const std::vector<fs::path> inputs{data};
  auto r = rs::run_partition_sort(inputs, cfg);
  if (report) *report = r;
  rs::assemble_result(cfg.resultDir, scratch / "assembled");
  rs::oracle_sort(data, scratch / "oracle", cfg.key_order());
  const bool same = same_bytes(scratch / "assembled", scratch / "oracle");
  fs::remove(scratch / "assembled");
  fs::remove(scratch / "oracle");
  return same;
}

std::vector<std::string> result_names(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename());
  std::sort(names.begin(), names.end());
  return names;
}

std::size_t count_depth(const std::vector<std::string>& names, std::size_t depth) {
  return static_cast<std::size_t>(std::count_if(names.begin(), names.end(), [&](const auto& n) {
    return rs::SegmentPath::parse(n).depth() == depth;
  }));
}

std::string field(const std::string& text, const std::string& key) {
  const std::regex pattern("(^|\\n)" + key + ": ([^\\n]*)");
  std::smatch m;
  return std::regex_search(text, m, pattern) ? m[2].str() : std::string();
}

int shell(const std::string& command) {
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Verdict division_arithmetic() {
  const auto d = rs::compute_divide_nums(100, 20, 100);
  const auto r6 = rs::reducer_count(5, 6);
  const auto r64 = rs::reducer_count(5, 64);
  if (d != 20 || r6 != 6 || r64 != 6) {
    return fail(fmt::format("divideNums {} reducers {} / {}", d, r6, r64));
  }
  // The same numbers through the site computation: 100 distinct samples,
  // stride 20, last sample of each block as a site.
  rs::SampleSummary summary;
  for (int i = 0; i < 100; ++i) summary.add(fmt::format("{:03d}", i));
  const auto plan =
      rs::make_partition_plan(summary, 20, 100, 64, rs::SiteIndexRule::kBlockUpperBounds);
  if (plan.divideNums != 20 || plan.sites.sites().size() != 5 || plan.reducerCount != 6) {
    return fail(fmt::format("plan: divideNums {} sites {} reducers {}", plan.divideNums,
                            plan.sites.sites().size(), plan.reducerCount));
  }
  return pass("divideNums=20, 5 sites -> 6 reducers");
}

Verdict interval_semantics() {
  for (auto mode : {rs::KeyMode::kLexicographic, rs::KeyMode::kNumeric}) {
    const rs::DivisionSites sites({"23", "42"}, rs::KeyOrder{mode});
    const auto a = rs::segment_of("23", sites);
    const auto b = rs::segment_of("30", sites);
    if (a != 0 || b != 1) {
      return fail(fmt::format("{}: segment_of(23)={} segment_of(30)={}", rs::to_string(mode), a,
                              b));
    }
  }
  return pass("segment_of(23)=0, segment_of(30)=1");
}

Verdict end_to_end(const fs::path& work) {
  std::mt19937_64 rng(2024);
  const char* dists[] = {"uniform", "zipf", "dup", "sorted", "reversed"};
  const int kConfigs = 50;
  std::uint64_t totalBytes = 0;
  std::size_t deferredRuns = 0;
  std::size_t fallbackRuns = 0;
  for (int i = 0; i < kConfigs; ++i) {
    // Log-uniform sizes; the first two pin the range ends.
    const double lo = std::log(100.0 * kKiB);
    const double hi = std::log(100.0 * kMiB);
    const std::uint64_t size =
        i == 0 ? 100 * kKiB
               : i == 1 ? 100 * kMiB
                        : static_cast<std::uint64_t>(std::exp(
                              std::uniform_real_distribution<double>(lo, hi)(rng)));
    rs::DatasetSpec spec;
    spec.totalBytes = size;
    spec.set_distribution(dists[i % 5]);
    if (spec.distribution == rs::Distribution::kZipf) {
      spec.zipfSkew = std::uniform_real_distribution<double>(1.05, 2.0)(rng);
    }
    if (spec.distribution == rs::Distribution::kDuplicateHeavy) {
      spec.hotKeyFraction = std::uniform_real_distribution<double>(0.1, 0.9)(rng);
    }
    spec.seed = rng();
    const fs::path dir = work / fmt::format("c{}", i);
    fs::create_directories(dir);
    rs::generate_dataset(spec, dir / "data");

    // blockSize between size/32 and size/2; threshold up to 2x blockSize.
    const std::uint64_t block = std::max<std::uint64_t>(
        16 * kKiB, static_cast<std::uint64_t>(
                       size / std::uniform_real_distribution<double>(2.0, 32.0)(rng)));
    const std::uint64_t threshold = static_cast<std::uint64_t>(
        block * std::uniform_real_distribution<double>(1.0, 2.0)(rng));
    auto cfg = config_in(dir / "work", block, threshold);
    cfg.maxFileRounds = 1 + rng() % 3;
    cfg.seed = rng();
    cfg.splitBytes = std::max<std::uint64_t>(64 * kKiB, size / (1 + rng() % 8));

    rs::SortReport report;
    const bool ok = sorts_like_oracle(dir / "data", cfg, dir, &report);
    totalBytes += size;
    if (!report.deferredPerRound.empty() && report.deferredPerRound[0] > 0) ++deferredRuns;
    if (report.fallbackUsed) ++fallbackRuns;
    fs::remove_all(dir);
    if (!ok) {
      return fail(fmt::format("config {} ({} bytes, {}, block {}, threshold {}, rounds {}) "
                              "differs from oracle",
                              i, size, spec.distribution_text(), block, threshold,
                              cfg.maxFileRounds));
    }
  }
  return pass(fmt::format("{} configs, {:.1f} MiB total, {} with deferrals, {} with fallback",
                          kConfigs, static_cast<double>(totalBytes) / kMiB, deferredRuns,
                          fallbackRuns));
}

Verdict cross_mode(const fs::path& work) {
  const std::uint64_t sizesMiB[] = {1, 2, 5, 8, 12, 16, 20, 30, 40, 50};
  const char* dists[] = {"uniform", "zipf:1.3", "dup:0.4", "sorted", "reversed"};
  for (int i = 0; i < 10; ++i) {
    const fs::path dir = work / fmt::format("x{}", i);
    fs::create_directories(dir);
    rs::DatasetSpec spec;
    spec.totalBytes = sizesMiB[i] * kMiB;
    spec.set_distribution(dists[i % 5]);
    spec.seed = 100 + i;
    rs::generate_dataset(spec, dir / "data");
    const std::uint64_t block = std::max<std::uint64_t>(256 * kKiB, spec.totalBytes / 8);
    auto cfg = config_in(dir / "p", block, block);
    const std::vector<fs::path> inputs{dir / "data"};
    rs::run_partition_sort(inputs, cfg);
    rs::assemble_result(cfg.resultDir, dir / "partition.txt");

    auto baseCfg = config_in(dir / "b", block, block);
    const auto base = rs::baseline_shuffle_sort(inputs, baseCfg, dir / "b" / "out");
    {
      rs::RecordWriter out(dir / "baseline.txt");
      for (const auto& part : base.outputs) rs::append_file(part, out);
      out.close();
    }
    const bool same = same_bytes(dir / "partition.txt", dir / "baseline.txt");
    fs::remove_all(dir);
    if (!same) return fail(fmt::format("dataset {} ({} MiB, {}) differs", i, sizesMiB[i], dists[i % 5]));
  }
  return pass("10 datasets, 1-50 MiB, byte-identical");
}

Verdict recursion(const fs::path& work) {
  const fs::path dir = work / "recursion";
  fs::create_directories(dir);
  t::make_dataset(dir / "data", 50 * kMiB, rs::Distribution::kZipf, 5, 1.5);
  const auto cfg = config_in(dir / "work", 2 * kMiB, 2 * kMiB);
  rs::SortReport report;
  const bool ok = sorts_like_oracle(dir / "data", cfg, dir, &report);
  const auto names = result_names(cfg.resultDir);
  const std::size_t depth2 = count_depth(names, 2);
  const std::size_t deferred1 = report.deferredPerRound.empty() ? 0 : report.deferredPerRound[0];
  fs::remove_all(dir);
  const auto detail = fmt::format("round-1 deferrals {}, {} i_j results of {}, rounds {}",
                                  deferred1, depth2, names.size(), report.roundsExecuted);
  if (!ok) return fail("output differs from oracle; " + detail);
  if (deferred1 < 1 || depth2 < 1) return fail(detail);
  return pass(detail);
}

// Two fixtures: a skewed dataset whose deferrals go straight to the
// fallback (maxFileRounds 1, names i_j), and a starved-sampling fixture
// that defers in both file rounds so the fallback names are i_j_k.
Verdict fallback(const fs::path& work) {
  const fs::path dir = work / "fallback";
  fs::create_directories(dir);

  t::make_dataset(dir / "skew", 20 * kMiB, rs::Distribution::kZipf, 6, 1.5);
  auto cfg = config_in(dir / "a", 2 * kMiB, 2 * kMiB);
  cfg.maxFileRounds = 1;
  rs::SortReport a;
  const bool okA = sorts_like_oracle(dir / "skew", cfg, dir, &a);
  const auto namesA = result_names(cfg.resultDir);

  // One 16-byte chunk per file samples a single record, so round 1 sees
  // one sample and round 2 one sample per intermediate file.
  t::make_dataset(dir / "starved", 4 * kMiB, rs::Distribution::kUniform, 7);
  auto cfgB = config_in(dir / "b", 32 * kKiB, 32 * kKiB);
  cfgB.samplingPlan = {1, 16};
  cfgB.splitBytes = 512 * kKiB;
  rs::SortReport b;
  const bool okB = sorts_like_oracle(dir / "starved", cfgB, dir, &b);
  const auto namesB = result_names(cfgB.resultDir);
  fs::remove_all(dir);

  const auto detail = fmt::format(
      "maxFileRounds=1: fallback {}, {} i_j files; maxFileRounds=2: fallback {}, {} i_j_k files",
      a.fallbackUsed, count_depth(namesA, 2), b.fallbackUsed, count_depth(namesB, 3));
  if (!okA || !okB) return fail("output differs from oracle; " + detail);
  if (!a.fallbackUsed || count_depth(namesA, 2) < 1 || !b.fallbackUsed ||
      count_depth(namesB, 3) < 1 || b.roundsExecuted != 3) {
    return fail(detail);
  }
  return pass(detail);
}

Verdict single_key_guard(const fs::path& work) {
  const fs::path dir = work / "guard";
  fs::create_directories(dir);
  {
    rs::RecordWriter out(dir / "data");
    for (std::uint64_t i = 0; i < 30 * kMiB / 11; ++i) out.write("0000004242");
    out.close();
  }
  const auto cfg = config_in(dir / "work", 5 * kMiB, 5 * kMiB);
  rs::SortReport report;
  const bool ok = sorts_like_oracle(dir / "data", cfg, dir, &report);
  fs::remove_all(dir);
  const auto detail = fmt::format("rounds {} (limit {}), guard hits {}, peak loaded {} bytes",
                                  report.roundsExecuted, cfg.maxFileRounds + 1, report.guardHits,
                                  report.peakLoadedBytes);
  if (!ok) return fail("output differs; " + detail);
  if (report.roundsExecuted > cfg.maxFileRounds + 1 || report.guardHits < 1) return fail(detail);
  return pass(detail);
}

Verdict load_balance(const fs::path& work) {
  int balanced = 0;
  std::vector<std::string> maxima;
  for (int seed = 1; seed <= 10; ++seed) {
    const fs::path dir = work / fmt::format("balance{}", seed);
    fs::create_directories(dir);
    t::make_dataset(dir / "data", 20 * kMiB, rs::Distribution::kUniform, seed);
    const auto cfg = config_in(dir / "work", 2 * kMiB, 2 * kMiB);
    const std::vector<fs::path> inputs{dir / "data"};
    const auto report = rs::run_partition_sort(inputs, cfg);
    const std::uint64_t largest = report.rounds.at(0).maxSegmentBytes;
    if (largest <= 4 * kMiB) ++balanced;
    maxima.push_back(fmt::format("{:.2f}", static_cast<double>(largest) / kMiB));
    fs::remove_all(dir);
  }
  const auto detail = fmt::format("{}/10 runs with max segment <= 4 MiB (max MiB: {})", balanced,
                                  fmt::join(maxima, " "));
  return balanced >= 9 ? pass(detail) : fail(detail);
}

Verdict shuffle_discipline(const fs::path& work) {
  const fs::path dir = work / "shuffle";
  fs::create_directories(dir);
  std::mt19937_64 rng(99);
  std::vector<rs::KeyValue> pairs;
  std::uint64_t framed = 0;
  std::uint64_t largest = 0;
  for (int i = 0; i < 100000; ++i) {
    rs::KeyValue kv;
    kv.key = fmt::format("{:x}", rng() % 50000);
    kv.value = std::string(rng() % 40, static_cast<char>('a' + rng() % 26));
    framed += rs::frame_bytes(kv.key, kv.value);
    largest = std::max(largest, rs::frame_bytes(kv.key, kv.value));
    pairs.push_back(std::move(kv));
  }
  const std::uint64_t budget = framed / 6;

  rs::ShuffleOptions options;
  options.memoryBudget = budget;
  options.scratchDir = dir;
  rs::ExternalSorter sorter(options);
  for (const auto& kv : pairs) sorter.add(kv.key, kv.value);
  auto stream = sorter.finish();
  std::vector<rs::KeyValue> merged;
  rs::KvView view;
  while (stream->next(view)) merged.push_back({std::string(view.key), std::string(view.value)});

  // Oracle: one in-memory sort by key. Values of equal keys may come in any
  // order, so keys must match in sequence and pairs as a multiset.
  auto oracle = pairs;
  std::stable_sort(oracle.begin(), oracle.end(),
                   [](const auto& a, const auto& b) { return a.key < b.key; });
  bool keysMatch = merged.size() == oracle.size();
  for (std::size_t i = 0; keysMatch && i < merged.size(); ++i) {
    keysMatch = merged[i].key == oracle[i].key;
  }
  const auto byPair = [](const rs::KeyValue& a, const rs::KeyValue& b) {
    return std::tie(a.key, a.value) < std::tie(b.key, b.value);
  };
  auto sortedMerged = merged;
  std::sort(sortedMerged.begin(), sortedMerged.end(), byPair);
  std::sort(oracle.begin(), oracle.end(), byPair);
  const bool pairsMatch = sortedMerged == oracle;
  const auto& stats = sorter.stats();

  // The same records through a full job with one reducer.
  {
    rs::RecordWriter in(dir / "records");
    for (const auto& kv : pairs) in.write(kv.key + "\t" + kv.value);
    in.close();
  }
  rs::JobSpec spec;
  spec.mapper = [](std::string_view record, rs::Emitter& out) {
    const auto tab = record.find('\t');
    out.emit(record.substr(0, tab), record.substr(tab + 1));
  };
  spec.reducer = [](std::string_view key, rs::ValueStream& values, rs::OutputWriter& out) {
    for (std::string_view v; values.next(v);) out.write(fmt::format("{}\t{}", key, v));
  };
  spec.partitioner = [](std::string_view, std::size_t) { return std::size_t{0}; };
  spec.memoryBudget = budget;
  spec.outputDir = dir / "job";
  spec.scratchDir = dir / "spill";
  const std::vector<fs::path> inputs{dir / "records"};
  const auto job = rs::run_job(spec, inputs);
  auto jobLines = t::read_lines(job.outputs[0]);
  bool jobKeysMatch = jobLines.size() == pairs.size();
  for (std::size_t i = 0; jobKeysMatch && i < jobLines.size(); ++i) {
    jobKeysMatch = jobLines[i].substr(0, jobLines[i].find('\t')) == merged[i].key;
  }
  fs::remove_all(dir);

  const auto detail = fmt::format(
      "sorter: {} runs, peak {} <= {} + {}; job: {} runs, peak {}", stats.sortedRuns,
      stats.peakBufferedBytes, budget, largest, job.stats.runsWritten,
      job.stats.peakBufferedBytes);
  if (!keysMatch || !pairsMatch || !jobKeysMatch) {
    return fail(fmt::format("merged output differs from oracle (keys {}, pairs {}, job {}); {}",
                            keysMatch, pairsMatch, jobKeysMatch, detail));
  }
  if (stats.sortedRuns < 5 || job.stats.runsWritten < 5 ||
      stats.peakBufferedBytes > budget + largest ||
      job.stats.peakBufferedBytes > budget + largest) {
    return fail(detail);
  }
  return pass(detail);
}

Verdict determinism(const fs::path& work) {
  const fs::path dir = work / "determinism";
  fs::create_directories(dir);
  t::make_dataset(dir / "data", 20 * kMiB, rs::Distribution::kZipf, 8, 1.3);
  std::map<std::string, std::string> trees[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path out = dir / fmt::format("run{}", run);
    const int code = shell(fmt::format(
        "{} sort {} --out {} --workers 1 --seed 7 --block-size 1M --keep-temp >/dev/null",
        RANGESORT_BINARY, (dir / "data").string(), out.string()));
    if (code != 0) return fail(fmt::format("sort exited {}", code));
    trees[run] = t::snapshot_tree(out);
  }
  std::size_t intermediates = 0;
  for (const auto& [name, contents] : trees[0]) {
    if (name.starts_with("middle/")) ++intermediates;
  }
  const bool same = trees[0] == trees[1];
  fs::remove_all(dir);
  const auto detail =
      fmt::format("{} files compared, {} under middle/", trees[0].size(), intermediates);
  return same && intermediates > 0 ? pass(detail) : fail("trees differ; " + detail);
}

Verdict bench_shape(const fs::path& work) {
  const fs::path dir = work / "bench";
  fs::create_directories(dir);
  const fs::path stdoutPath = dir / "stdout.txt";
  int code = shell(fmt::format("{} bench --sizes 30M,60M,100M --workers 1 --out {} >{} 2>&1",
                               RANGESORT_BINARY, (dir / "work").string(), stdoutPath.string()));
  const auto csv = t::read_lines(dir / "work" / "bench.csv");
  const std::string table = t::read_text(stdoutPath);
  std::vector<std::string> problems;
  if (code != 0) problems.push_back(fmt::format("bench exited {}", code));
  if (csv.empty() || csv[0] != "size,baseline_s,new_partition_s,rounds,verified") {
    problems.push_back("bad CSV header");
  }
  const std::regex row(R"((30M|60M|100M),\d+\.\d{3},\d+\.\d{3},\d+,true)");
  std::size_t goodRows = 0;
  for (std::size_t i = 1; i < csv.size(); ++i) goodRows += std::regex_match(csv[i], row);
  if (csv.size() != 4 || goodRows != 3) {
    problems.push_back(fmt::format("{} verified rows of {}", goodRows, csv.size() - 1));
  }

  // A baseline budget below one record forces the baseline column to fail.
  const fs::path failedOut = dir / "failed.txt";
  code = shell(fmt::format(
      "{} bench --sizes 1M --reps 1 --workers 1 --baseline-budget 8 --out {} >{} 2>/dev/null",
      RANGESORT_BINARY, (dir / "failed").string(), failedOut.string()));
  const auto failedCsv = t::read_lines(dir / "failed" / "bench.csv");
  const std::string failedTable = t::read_text(failedOut);
  const bool dashes = std::regex_search(failedTable, std::regex(R"(\n1M\s+---\s+\d+\.\d{3})"));
  if (code != 0 || failedCsv.size() != 2 || !failedCsv[1].starts_with("1M,FAILED,") || !dashes) {
    problems.push_back("forced failure not rendered as FAILED / ---");
  }
  fs::remove_all(dir);
  if (!problems.empty()) return fail(fmt::format("{}", fmt::join(problems, "; ")));
  std::string rows;
  for (std::size_t i = 1; i < csv.size(); ++i) rows += (i > 1 ? " | " : "") + csv[i];
  return pass(rows + "; forced failure renders ---");
}

}  // namespace

int main(int argc, char** argv) {
  // Optional filter: criterion numbers to run, e.g. `acceptance 3 5`.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));

  t::TempDir work;
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"division arithmetic", division_arithmetic},
      {"interval semantics", interval_semantics},
      {"end-to-end oracle equivalence", [&] { return end_to_end(work.path()); }},
      {"cross-mode equivalence", [&] { return cross_mode(work.path()); }},
      {"recursion exercise", [&] { return recursion(work.path()); }},
      {"fallback exercise", [&] { return fallback(work.path()); }},
      {"single-key guard", [&] { return single_key_guard(work.path()); }},
      {"load balance", [&] { return load_balance(work.path()); }},
      {"engine shuffle discipline", [&] { return shuffle_discipline(work.path()); }},
      {"determinism", [&] { return determinism(work.path()); }},
      {"bench report shape", [&] { return bench_shape(work.path()); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), number) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = fail(fmt::format("exception: {}", e.what()));
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!v.pass) ++failures;
    fmt::print("{} {:>2} {} ({:.1f}s): {}\n", v.pass ? "PASS" : "FAIL", number,
               criteria[i].first, seconds, v.detail);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
