#include "rangesort/job_config.hpp"

#include <fmt/format.h>

#include "rangesort/error.hpp"

namespace rangesort {

void JobConfig::use_work_dir(const fs::path& workDir) {
  middleDir = workDir / "middle";
  resultDir = workDir / "result";
  outputDir = workDir / "output";
  scratchDir = workDir / "scratch";
}

void JobConfig::validate() const {
  if (blockSize < 1) throw ValidationError("blockSize must be at least 1 byte");
  if (memoryThreshold < blockSize) {
    throw ValidationError(fmt::format(
        "memoryThreshold ({}) must be at least blockSize ({})", memoryThreshold, blockSize));
  }
  if (maxReducers < 1) throw ValidationError("maxReducers must be at least 1");
  if (maxFileRounds < 1) throw ValidationError("maxFileRounds must be at least 1");
  if (splitBytes < 1) throw ValidationError("split size must be at least 1 byte");
  if (maxRecordBytes < 1) throw ValidationError("maxRecordBytes must be at least 1");
  samplingPlan.validate();
}

}  // namespace rangesort
