#include "timecap/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace timecap::ingest {

LabelRule parse_label_rule(std::string_view s) {
  const std::string v = to_lower(trim(s));
  if (v == "from_column") return LabelRule::from_column;
  if (v == "finance_threshold") return LabelRule::finance_threshold;
  if (v == "mean_threshold") return LabelRule::mean_threshold;
  fail(ErrorCode::config, "unknown label rule: '" + std::string(s) + "'");
}

std::string to_string(LabelRule rule) {
  switch (rule) {
    case LabelRule::from_column: return "from_column";
    case LabelRule::finance_threshold: return "finance_threshold";
    case LabelRule::mean_threshold: return "mean_threshold";
  }
  fail(ErrorCode::internal, "unknown label rule");
}

void WindowingSpec::validate() const {
  if (window_len <= 0) fail(ErrorCode::config, "windowing: window_len must be > 0");
  if (stride < 1 || stride > window_len) {
    fail(ErrorCode::config, "windowing: stride must be in [1, window_len]");
  }
  if (finance_band <= 0) fail(ErrorCode::config, "windowing: finance_band must be > 0");
  if (train_ratio <= 0 || train_ratio >= 1) {
    fail(ErrorCode::config, "windowing: train_ratio must be in (0,1)");
  }
}

void SplitSpec::validate() const {
  if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9) {
    fail(ErrorCode::config, "split ratios must be non-negative and sum to 1");
  }
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream stream(line);
  while (std::getline(stream, cell, delim)) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == delim) cells.emplace_back();
  return cells;
}

bool cell_missing(const std::string& cell) {
  if (cell.empty()) return true;
  const std::string v = to_lower(cell);
  return v == "nan" || v == "na" || v == "null";
}

}  // namespace

RawSeries load_table(const std::filesystem::path& path,
                     const std::vector<std::string>& expected_channels, Resolution resolution,
                     const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) {
    fail(ErrorCode::missing_artifact, "cannot open data file: " + path.string());
  }

  std::string line;
  if (!std::getline(in, line)) {
    fail(ErrorCode::invalid_input, path.string() + ": empty file");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const char delim = line.find('\t') != std::string::npos ? '\t' : ',';
  const std::vector<std::string> header = split_line(line, delim);
  if (header.size() < 2) {
    fail(ErrorCode::invalid_input, path.string() + ": header needs timestamp plus channels");
  }

  // Column 0 is the timestamp. A column named "label" is the label column.
  std::map<std::string, std::size_t> column_of;
  std::optional<std::size_t> label_col;
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (to_lower(header[i]) == "label") {
      label_col = i;
    } else {
      column_of[header[i]] = i;
    }
  }

  std::vector<std::string> channels = expected_channels;
  if (channels.empty()) {
    for (std::size_t i = 1; i < header.size(); ++i) {
      if (!label_col || i != *label_col) channels.push_back(header[i]);
    }
  }
  std::vector<std::size_t> channel_cols;
  for (const auto& name : channels) {
    const auto it = column_of.find(name);
    if (it == column_of.end()) {
      fail(ErrorCode::invalid_input, path.string() + ": missing column '" + name + "'");
    }
    channel_cols.push_back(it->second);
  }

  const std::size_t C = channels.size();
  std::vector<std::int64_t> timestamps;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> labels;
  std::vector<char> gap_before;
  std::vector<double> last_good;
  bool have_last_good = false;
  bool pending_gap = false;
  int lineno = 1;

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_line(line, delim);
    if (cells.size() != header.size()) {
      fail(ErrorCode::invalid_input,
           path.string() + ":" + std::to_string(lineno) + ": expected " +
               std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
    }

    std::vector<double> row(C);
    bool missing = false;
    for (std::size_t c = 0; c < C; ++c) {
      const std::string& cell = cells[channel_cols[c]];
      if (cell_missing(cell)) {
        missing = true;
        continue;
      }
      try {
        std::size_t pos = 0;
        row[c] = std::stod(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        fail(ErrorCode::invalid_input, path.string() + ":" + std::to_string(lineno) +
                                           ": unparseable cell '" + cell + "'");
      }
    }

    if (missing) {
      if (options.impute == ImputePolicy::drop) {
        pending_gap = true;
        continue;
      }
      if (!have_last_good) {
        fail(ErrorCode::invalid_input,
             path.string() + ":" + std::to_string(lineno) + ": missing value with nothing to forward-fill");
      }
      for (std::size_t c = 0; c < C; ++c) {
        if (cell_missing(cells[channel_cols[c]])) row[c] = last_good[c];
      }
    }

    const std::int64_t ts = parse_timestamp(cells[0]);
    if (!timestamps.empty() && ts <= timestamps.back()) {
      fail(ErrorCode::invalid_input, path.string() + ":" + std::to_string(lineno) +
                                         ": non-monotonic timestamp " + cells[0]);
    }
    if (options.require_uniform_spacing && !timestamps.empty() &&
        ts - timestamps.back() != step_seconds(resolution)) {
      fail(ErrorCode::invalid_input, path.string() + ":" + std::to_string(lineno) +
                                         ": non-uniform spacing at " + cells[0]);
    }

    timestamps.push_back(ts);
    rows.push_back(row);
    gap_before.push_back(pending_gap ? 1 : 0);
    pending_gap = false;
    last_good = row;
    have_last_good = true;
    if (label_col) labels.push_back(cells[*label_col]);
  }

  if (rows.empty()) {
    fail(ErrorCode::invalid_input, path.string() + ": no rows");
  }

  RawSeries raw;
  raw.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(C));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      raw.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = rows[t][c];
    }
  }
  raw.timestamps = std::move(timestamps);
  raw.channel_names = channels;
  raw.labels = std::move(labels);
  raw.gap_before = std::move(gap_before);
  raw.resolution = resolution;
  return raw;
}

ClassLabel finance_label(double prev_close, double next_close, double band) {
  if (!(prev_close > 0)) {
    fail(ErrorCode::invalid_input, "finance_label: prev_close must be positive");
  }
  const double r = (next_close - prev_close) / prev_close;
  if (r > band) return ClassLabel{0};
  if (r < -band) return ClassLabel{1};
  return ClassLabel{2};
}

ClassLabel mean_threshold_label(double value, double threshold) {
  if (!std::isfinite(threshold)) {
    fail(ErrorCode::invalid_input, "mean_threshold_label: non-finite threshold");
  }
  return value > threshold ? ClassLabel{0} : ClassLabel{1};
}

namespace {

bool window_has_gap(const RawSeries& raw, int start, int len) {
  for (int t = start + 1; t < start + len; ++t) {
    if (raw.gap_before[static_cast<std::size_t>(t)]) return true;
  }
  return false;
}

}  // namespace

WindowedDataset make_windows(const RawSeries& raw, const WindowingSpec& spec,
                             const LabelSchema& schema, const std::string& id_prefix) {
  spec.validate();
  const int T = static_cast<int>(raw.rows());
  const int L = spec.window_len;
  if (L > T) {
    fail(ErrorCode::invalid_input, "make_windows: window length exceeds series length");
  }
  if (spec.rule == LabelRule::from_column && !raw.has_labels()) {
    fail(ErrorCode::invalid_input, "make_windows: from_column rule but table has no label column");
  }
  if (spec.rule != LabelRule::from_column &&
      (spec.target_channel < 0 || spec.target_channel >= raw.values.cols())) {
    fail(ErrorCode::invalid_input, "make_windows: target_channel out of range");
  }

  // Candidate start offsets; future-referencing rules drop windows whose
  // label row would fall past the end.
  const bool needs_future_row = spec.rule != LabelRule::from_column;
  const int rows_needed = needs_future_row ? L + 1 : L;
  std::vector<int> starts;
  for (int start = 0; start + rows_needed <= T; start += spec.stride) {
    starts.push_back(start);
  }
  if (starts.empty()) {
    fail(ErrorCode::invalid_input,
         "make_windows: series too short (" + std::to_string(T) + " rows) for window length " +
             std::to_string(L) + (needs_future_row ? " plus its label row" : ""));
  }

  std::optional<double> threshold = spec.threshold;
  if (spec.rule == LabelRule::mean_threshold && !threshold) {
    // Fitted over the label rows of the chronological training portion only.
    const int n_train = static_cast<int>(std::floor(spec.train_ratio * static_cast<double>(starts.size())));
    if (n_train <= 0) {
      fail(ErrorCode::invalid_input, "make_windows: too few samples to fit mean threshold");
    }
    double sum = 0.0;
    for (int i = 0; i < n_train; ++i) {
      sum += raw.values(starts[static_cast<std::size_t>(i)] + L, spec.target_channel);
    }
    threshold = sum / n_train;
  }

  WindowedDataset dataset;
  if (spec.rule == LabelRule::mean_threshold) dataset.threshold_used = threshold;

  int digits = 1;
  for (int n = T; n >= 10; n /= 10) ++digits;

  for (int start : starts) {
    // The label row must directly follow the window, so it joins the
    // gap check for future-referencing rules.
    if (window_has_gap(raw, start, rows_needed)) continue;

    ClassLabel label;
    switch (spec.rule) {
      case LabelRule::from_column: {
        // Label read from the window's final row; for event tasks the column
        // already describes the following period.
        const std::string& text = raw.labels[static_cast<std::size_t>(start + L - 1)];
        const auto index = schema.index_of(text);
        if (!index) {
          fail(ErrorCode::invalid_input,
               "make_windows: label '" + text + "' not in schema at row " + std::to_string(start + L - 1));
        }
        label = ClassLabel{*index};
        break;
      }
      case LabelRule::finance_threshold: {
        const double prev = raw.values(start + L - 1, spec.target_channel);
        const double next = raw.values(start + L, spec.target_channel);
        label = finance_label(prev, next, spec.finance_band);
        break;
      }
      case LabelRule::mean_threshold: {
        const double next = raw.values(start + L, spec.target_channel);
        label = mean_threshold_label(next, *threshold);
        break;
      }
    }
    if (label.index >= schema.num_classes()) {
      fail(ErrorCode::invalid_input, "make_windows: label rule produced index outside schema");
    }

    Sample sample;
    sample.window.values = raw.values.middleRows(start, L);
    sample.window.channel_names = raw.channel_names;
    sample.window.start_epoch_s = raw.timestamps[static_cast<std::size_t>(start)];
    sample.window.resolution = raw.resolution;
    sample.window.validate();
    sample.label = label;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%0*d", id_prefix.c_str(), digits, start);
    sample.id = buf;
    dataset.samples.push_back(std::move(sample));
  }

  return dataset;
}

Splits split_chronological(const std::vector<Sample>& samples, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = samples.size();
  if (n < 3) {
    fail(ErrorCode::invalid_input, "split_chronological: need at least 3 samples");
  }
  const auto n_train = static_cast<std::size_t>(std::floor(spec.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::floor(spec.val * static_cast<double>(n)));

  Splits splits;
  splits.train.assign(samples.begin(), samples.begin() + n_train);
  splits.val.assign(samples.begin() + n_train, samples.begin() + n_train + n_val);
  splits.test.assign(samples.begin() + n_train + n_val, samples.end());
  return splits;
}

Normalizer::Normalizer(Vector mean, Vector stddev)
    : mean_(std::move(mean)), std_(std::move(stddev)) {
  if (mean_.size() != std_.size() || mean_.size() == 0) {
    fail(ErrorCode::invalid_input, "Normalizer: bad statistics shape");
  }
}

Normalizer Normalizer::fit(const std::vector<Sample>& train) {
  if (train.empty()) {
    fail(ErrorCode::invalid_input, "Normalizer::fit: empty training set");
  }
  const Eigen::Index C = train.front().window.channels();
  Vector sum = Vector::Zero(C);
  Vector sum_sq = Vector::Zero(C);
  std::int64_t count = 0;
  for (const Sample& s : train) {
    if (s.window.normalized) {
      fail(ErrorCode::invalid_input, "Normalizer::fit: sample already normalized");
    }
    if (s.window.channels() != C) {
      fail(ErrorCode::invalid_input, "Normalizer::fit: inconsistent channel count");
    }
    sum += s.window.values.colwise().sum().transpose();
    sum_sq += s.window.values.array().square().colwise().sum().matrix().transpose();
    count += s.window.length();
  }
  const Vector mean = sum / static_cast<double>(count);
  Vector var = sum_sq / static_cast<double>(count) - mean.array().square().matrix();
  var = var.cwiseMax(0.0);
  Vector stddev = var.array().sqrt();
  for (Eigen::Index c = 0; c < C; ++c) {
    if (!(stddev(c) > 0)) {
      fail(ErrorCode::invalid_input, "Normalizer::fit: zero-variance channel '" +
                                         train.front().window.channel_names[static_cast<std::size_t>(c)] +
                                         "'");
    }
  }
  return Normalizer(mean, stddev);
}

Sample Normalizer::apply(const Sample& sample) const {
  if (sample.window.normalized) {
    fail(ErrorCode::invalid_input, "Normalizer::apply: sample already normalized");
  }
  if (sample.window.channels() != mean_.size()) {
    fail(ErrorCode::invalid_input, "Normalizer::apply: channel count mismatch");
  }
  Sample out = sample;
  out.window.raw_values = sample.window.values;
  out.window.values =
      (sample.window.values.rowwise() - mean_.transpose()).array().rowwise() /
      std_.transpose().array();
  out.window.normalized = true;
  return out;
}

ClassLabel majority_label(const std::vector<Sample>& samples, int num_classes) {
  if (samples.empty()) {
    fail(ErrorCode::invalid_input, "majority_label: empty sample set");
  }
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (const Sample& s : samples) {
    if (s.label.index < 0 || s.label.index >= num_classes) {
      fail(ErrorCode::invalid_input, "majority_label: label outside schema");
    }
    ++counts[static_cast<std::size_t>(s.label.index)];
  }
  int best = 0;
  for (int k = 1; k < num_classes; ++k) {
    if (counts[static_cast<std::size_t>(k)] > counts[static_cast<std::size_t>(best)]) best = k;
  }
  return ClassLabel{best};
}

DatasetManifest DatasetManifest::parse_file(const std::filesystem::path& path) {
  const KeyValueConfig kv = KeyValueConfig::parse_file(path);
  DatasetManifest m;
  m.name = kv.get_string("name");
  m.data_path = path.parent_path() / kv.get_string("path");
  m.domain_hint = kv.get_string("domain_hint");
  m.resolution = parse_resolution(kv.get_string("resolution"));
  m.channels = kv.get_list("channels");
  m.class_names = kv.get_list("class_names");
  m.windowing.window_len = static_cast<int>(kv.get_int("window_len"));
  m.windowing.stride = static_cast<int>(kv.get_int("stride", 1));
  m.windowing.rule = parse_label_rule(kv.get_string("label_rule"));
  m.windowing.target_channel = static_cast<int>(kv.get_int("target_channel", 0));
  if (kv.has("threshold")) m.windowing.threshold = kv.get_double("threshold", 0.0);
  m.windowing.finance_band = kv.get_double("finance_band", 0.01);
  m.windowing.train_ratio = kv.get_double("train_ratio", 0.6);
  const std::string impute = kv.get_string("impute", "drop");
  if (impute == "drop") {
    m.load.impute = ImputePolicy::drop;
  } else if (impute == "ffill") {
    m.load.impute = ImputePolicy::ffill;
  } else {
    fail(ErrorCode::config, "manifest impute must be drop or ffill");
  }
  m.load.require_uniform_spacing = kv.get_bool("require_uniform_spacing", false);
  m.windowing.validate();
  return m;
}

}  // namespace timecap::ingest
