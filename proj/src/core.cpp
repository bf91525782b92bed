#include "timecap/core.hpp"

#include <set>

namespace timecap {

std::int64_t step_seconds(Resolution r) {
  switch (r) {
    case Resolution::hourly: return 3600;
    case Resolution::daily: return 86400;
    case Resolution::weekly: return 604800;
  }
  fail(ErrorCode::internal, "unknown resolution");
}

std::string to_string(Resolution r) {
  switch (r) {
    case Resolution::hourly: return "hourly";
    case Resolution::daily: return "daily";
    case Resolution::weekly: return "weekly";
  }
  fail(ErrorCode::internal, "unknown resolution");
}

Resolution parse_resolution(std::string_view s) {
  const std::string v = to_lower(trim(s));
  if (v == "hourly") return Resolution::hourly;
  if (v == "daily") return Resolution::daily;
  if (v == "weekly") return Resolution::weekly;
  fail(ErrorCode::config, "unknown resolution: '" + std::string(s) + "'");
}

LabelSchema::LabelSchema(std::vector<std::string> class_names)
    : names_(std::move(class_names)) {
  if (names_.size() < 2) {
    fail(ErrorCode::invalid_input, "LabelSchema needs at least 2 classes");
  }
  std::set<std::string> seen;
  for (const auto& name : names_) {
    if (trim(name).empty()) {
      fail(ErrorCode::invalid_input, "LabelSchema: empty class name");
    }
    if (!seen.insert(to_lower(name)).second) {
      fail(ErrorCode::invalid_input, "LabelSchema: duplicate class name '" + name + "'");
    }
  }
}

const std::string& LabelSchema::name_of(int index) const {
  if (index < 0 || index >= num_classes()) {
    fail(ErrorCode::invalid_input, "class index out of range");
  }
  return names_[static_cast<std::size_t>(index)];
}

std::optional<int> LabelSchema::index_of(std::string_view name) const {
  const std::string needle = to_lower(trim(name));
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (to_lower(names_[i]) == needle) return static_cast<int>(i);
  }
  return std::nullopt;
}

PredictionDistribution::PredictionDistribution(Vector probs) : probs_(std::move(probs)) {
  if (probs_.size() == 0) {
    fail(ErrorCode::invalid_input, "PredictionDistribution: empty");
  }
  if (!probs_.allFinite() || probs_.minCoeff() < -1e-12 || probs_.maxCoeff() > 1.0 + 1e-12) {
    fail(ErrorCode::invalid_input, "PredictionDistribution: entries outside [0,1]");
  }
  if (std::abs(probs_.sum() - 1.0) > 1e-9) {
    fail(ErrorCode::invalid_input, "PredictionDistribution: does not sum to 1");
  }
}

void TimeSeriesWindow::validate() const {
  if (values.rows() == 0 || values.cols() == 0) {
    fail(ErrorCode::invalid_input, "TimeSeriesWindow: empty values");
  }
  if (!values.allFinite()) {
    fail(ErrorCode::invalid_input, "TimeSeriesWindow: non-finite values");
  }
  if (static_cast<Eigen::Index>(channel_names.size()) != values.cols()) {
    fail(ErrorCode::invalid_input, "TimeSeriesWindow: channel_names length mismatch");
  }
  if (normalized && !raw_values) {
    fail(ErrorCode::invalid_input, "TimeSeriesWindow: normalized without raw values");
  }
}

PredictionDistribution softmax(const Vector& logits) {
  return PredictionDistribution(softmax_vector(logits));
}

Vector one_hot(ClassLabel label, int num_classes) {
  if (label.index < 0 || label.index >= num_classes) {
    fail(ErrorCode::invalid_input, "one_hot: index out of range");
  }
  Vector v = Vector::Zero(num_classes);
  v(label.index) = 1.0;
  return v;
}

ClassLabel argmax_with_tiebreak(const PredictionDistribution& dist) {
  return argmax_with_tiebreak(dist.probs());
}

}  // namespace timecap
