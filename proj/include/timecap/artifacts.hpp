#pragma once

#include "timecap/core.hpp"
#include "timecap/ingest.hpp"
#include "timecap/pipeline.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace timecap::artifacts {

/// Windowed dataset on disk: one JSON header line (provenance, schema,
/// normalizer) followed by one JSON line per sample with its split tag.
struct WindowsFile {
  std::string config_digest;
  std::uint64_t seed = 0;
  std::string dataset_name;
  std::string domain_hint;
  std::vector<std::string> channels;
  Resolution resolution = Resolution::hourly;
  std::vector<std::string> class_names;
  bool normalized = false;
  Vector norm_mean;    // empty when not normalized
  Vector norm_stddev;
  std::optional<double> threshold_used;
  std::vector<Sample> samples;
  std::vector<std::string> split_of;  // "train" | "val" | "test", aligned with samples

  std::vector<Sample> split(const std::string& name) const;
  LabelSchema schema() const { return LabelSchema(class_names); }
};

void save_windows(const WindowsFile& file, const std::filesystem::path& path);
WindowsFile load_windows(const std::filesystem::path& path);

struct SummaryRecord {
  std::string id;
  std::string summary;
  std::string provider;
  std::string model;
};

struct SummariesFile {
  std::string config_digest;
  std::uint64_t seed = 0;
  std::vector<SummaryRecord> records;

  std::map<std::string, std::string> by_id() const;
};

void save_summaries(const SummariesFile& file, const std::filesystem::path& path);
SummariesFile load_summaries(const std::filesystem::path& path);

struct PredictionRecord {
  std::string id;
  std::string summary;
  std::vector<std::string> retrieved_ids;
  std::optional<int> llm_label;
  bool abstained = false;
  std::optional<Vector> encoder_dist;  // absent for TimeCP
  Vector fused;
  int final_label = 0;
  std::string rationale;
  std::optional<int> selected_example;
  std::optional<std::string> selected_id;
};

struct PredictionsFile {
  std::string config_digest;
  std::uint64_t seed = 0;
  std::string mode;  // "timecp" | "timecap"
  std::vector<PredictionRecord> records;
};

void save_predictions(const PredictionsFile& file, const std::filesystem::path& path);
PredictionsFile load_predictions(const std::filesystem::path& path);

/// Refuses with a missing-artifact error naming the file when the digest
/// embedded in an artifact does not match what the current config implies.
void require_digest(const std::string& actual, const std::string& expected,
                    const std::filesystem::path& file, const std::string& what);

}  // namespace timecap::artifacts
