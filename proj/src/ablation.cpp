#include "timecap/ablation.hpp"

#include <fstream>

namespace timecap::eval {

std::vector<AblationRow> run_ablation(const std::vector<Sample>& test_samples,
                                      pipeline::Agents& agents,
                                      const pipeline::TimecapArtifacts& artifacts,
                                      const pipeline::PipelineConfig& base,
                                      const AblationGrid& grid) {
  if (test_samples.empty()) {
    fail(ErrorCode::invalid_input, "run_ablation: empty test set");
  }
  if (grid.samplers.empty() || grid.fusions.empty()) {
    fail(ErrorCode::invalid_input, "run_ablation: empty grid");
  }
  for (pipeline::Sampler sampler : grid.samplers) {
    if (sampler == pipeline::Sampler::time_only &&
        (!artifacts.sampler_params || !artifacts.sampler_store)) {
      fail(ErrorCode::missing_artifact, "run_ablation: time_only sampler artifacts missing");
    }
    if (sampler == pipeline::Sampler::random && !artifacts.train_samples) {
      fail(ErrorCode::missing_artifact, "run_ablation: random sampler needs train samples");
    }
  }

  std::vector<AblationRow> rows;
  for (pipeline::Sampler sampler : grid.samplers) {
    for (pipeline::Fusion fusion : grid.fusions) {
      pipeline::PipelineConfig config = base;
      config.sampler = sampler;
      config.fusion = fusion;

      std::vector<ClassLabel> predicted;
      std::vector<ClassLabel> actual;
      std::vector<Vector> scores;
      int abstentions = 0;
      for (const Sample& sample : test_samples) {
        const pipeline::FusedPrediction p =
            pipeline::timecap_predict(agents, sample, artifacts, config);
        predicted.push_back(p.final_label);
        actual.push_back(sample.label);
        scores.push_back(p.fused);
        abstentions += p.abstained ? 1 : 0;
      }

      AblationRow row{sampler, fusion, f1_scores(predicted, actual, *agents.schema)};
      row.report.abstentions = abstentions;
      int skipped = 0;
      try {
        row.report.auroc = auroc(scores, actual, agents.schema->num_classes(), &skipped);
      } catch (const Error&) {
        // degenerate test slice: leave AUROC as NaN
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path,
                        const std::string& config_digest, std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::internal, "cannot write " + path.string());
  out << "# timecap ablation v1\n";
  out << "# config_digest=" << config_digest << "\n";
  out << "# seed=" << seed << "\n";
  out << "sampler,fusion,macro_f1,auroc,abstentions\n";
  for (const AblationRow& row : rows) {
    out << pipeline::to_string(row.sampler) << ',' << pipeline::to_string(row.fusion) << ','
        << format_double(row.report.macro_f1, 6) << ','
        << (std::isnan(row.report.auroc) ? std::string("nan")
                                         : format_double(row.report.auroc, 6))
        << ',' << row.report.abstentions << '\n';
  }
}

void write_ablation_plotdata(const std::vector<AblationRow>& rows,
                             const std::filesystem::path& path,
                             const std::string& config_digest, std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::internal, "cannot write " + path.string());
  out << "# config_digest=" << config_digest << " seed=" << seed << '\n';
  out << "# index macro_f1 auroc\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << i << ' ' << format_double(rows[i].report.macro_f1, 6) << ' '
        << (std::isnan(rows[i].report.auroc) ? std::string("nan")
                                             : format_double(rows[i].report.auroc, 6))
        << '\n';
  }
}

}  // namespace timecap::eval
