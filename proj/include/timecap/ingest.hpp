#pragma once

#include "timecap/config.hpp"
#include "timecap/core.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace timecap::ingest {

struct RawSeries {
  Matrix values;  // T x C
  std::vector<std::int64_t> timestamps;
  std::vector<std::string> channel_names;
  std::vector<std::string> labels;  // empty, or one per row
  std::vector<char> gap_before;     // one per row; set where dropped rows precede
  Resolution resolution = Resolution::hourly;

  Eigen::Index rows() const { return values.rows(); }
  bool has_labels() const { return !labels.empty(); }
};

enum class LabelRule { from_column, finance_threshold, mean_threshold };
enum class ImputePolicy { drop, ffill };

LabelRule parse_label_rule(std::string_view s);
std::string to_string(LabelRule rule);

struct LoadOptions {
  ImputePolicy impute = ImputePolicy::drop;
  bool require_uniform_spacing = false;
};

struct WindowingSpec {
  int window_len = 24;
  int stride = 1;
  LabelRule rule = LabelRule::from_column;
  int target_channel = 0;              // channel the threshold rules read
  std::optional<double> threshold;     // fixed threshold; fitted on train when absent
  double finance_band = 0.01;          // +/- move that counts as increase/decrease
  double train_ratio = 0.6;            // portion used to fit a missing threshold

  void validate() const;
};

struct SplitSpec {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;

  void validate() const;
};

/// Samples plus the labeling metadata needed downstream.
struct WindowedDataset {
  std::vector<Sample> samples;
  std::optional<double> threshold_used;  // set for mean_threshold labeling
};

struct Splits {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};

/// Per-channel z-scoring, fitted on the training split only. Population
/// standard deviation. Raw values stay attached to each window so prompts
/// can show human-readable numbers.
class Normalizer {
 public:
  static Normalizer fit(const std::vector<Sample>& train);

  Sample apply(const Sample& sample) const;  // errors if already normalized

  const Vector& mean() const { return mean_; }
  const Vector& stddev() const { return std_; }

  Normalizer(Vector mean, Vector stddev);

 private:
  Vector mean_;
  Vector std_;
};

/// Delimited UTF-8 table, one header row, ISO-8601 timestamp column first;
/// a column named "label" (if present) becomes the label column.
RawSeries load_table(const std::filesystem::path& path,
                     const std::vector<std::string>& expected_channels, Resolution resolution,
                     const LoadOptions& options = {});

WindowedDataset make_windows(const RawSeries& raw, const WindowingSpec& spec,
                             const LabelSchema& schema, const std::string& id_prefix = "w");

/// Class order convention: {increase, decrease, stable}.
ClassLabel finance_label(double prev_close, double next_close, double band = 0.01);

/// Class order convention: {exceed, not-exceed}. Strict inequality.
ClassLabel mean_threshold_label(double value, double threshold);

Splits split_chronological(const std::vector<Sample>& samples, const SplitSpec& spec);

ClassLabel majority_label(const std::vector<Sample>& samples, int num_classes);

/// Dataset manifest: flat key=value file naming the raw table, domain,
/// schema, and windowing spec.
struct DatasetManifest {
  std::string name;
  std::filesystem::path data_path;  // resolved relative to the manifest file
  std::string domain_hint;
  Resolution resolution = Resolution::hourly;
  std::vector<std::string> channels;
  std::vector<std::string> class_names;
  WindowingSpec windowing;
  LoadOptions load;

  static DatasetManifest parse_file(const std::filesystem::path& path);
};

}  // namespace timecap::ingest
