#pragma once

#include "timecap/metrics.hpp"
#include "timecap/pipeline.hpp"

#include <filesystem>
#include <vector>

namespace timecap::eval {

struct AblationGrid {
  std::vector<pipeline::Sampler> samplers;
  std::vector<pipeline::Fusion> fusions;
};

struct AblationRow {
  pipeline::Sampler sampler;
  pipeline::Fusion fusion;
  MetricReport report;
};

/// One pipeline evaluation per (sampler, fusion) cell over the test set,
/// every row under the same seed. Missing artifacts for a requested variant
/// are an error.
std::vector<AblationRow> run_ablation(const std::vector<Sample>& test_samples,
                                      pipeline::Agents& agents,
                                      const pipeline::TimecapArtifacts& artifacts,
                                      const pipeline::PipelineConfig& base,
                                      const AblationGrid& grid);

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path,
                        const std::string& config_digest, std::uint64_t seed);

/// Plot-data companion: "index macro_f1 auroc" per row after '#' provenance
/// comments.
void write_ablation_plotdata(const std::vector<AblationRow>& rows,
                             const std::filesystem::path& path,
                             const std::string& config_digest = "", std::uint64_t seed = 0);

}  // namespace timecap::eval
