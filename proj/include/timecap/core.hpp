#pragma once

#include "timecap/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace timecap {

enum class Resolution { hourly, daily, weekly };

std::int64_t step_seconds(Resolution r);
std::string to_string(Resolution r);
Resolution parse_resolution(std::string_view s);

/// Ordered K-class label vocabulary. Class index is position in `class_names`.
class LabelSchema {
 public:
  explicit LabelSchema(std::vector<std::string> class_names);

  int num_classes() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& class_names() const { return names_; }
  const std::string& name_of(int index) const;

  /// Case-insensitive exact match; nullopt when `name` is not in the schema.
  std::optional<int> index_of(std::string_view name) const;

 private:
  std::vector<std::string> names_;
};

struct ClassLabel {
  int index = 0;

  friend bool operator==(const ClassLabel&, const ClassLabel&) = default;
};

/// Point on the K-simplex; validated at construction.
class PredictionDistribution {
 public:
  explicit PredictionDistribution(Vector probs);

  const Vector& probs() const { return probs_; }
  int num_classes() const { return static_cast<int>(probs_.size()); }

 private:
  Vector probs_;
};

struct TimeSeriesWindow {
  Matrix values;  // L x C; z-scored when `normalized` is set
  std::vector<std::string> channel_names;
  std::int64_t start_epoch_s = 0;
  Resolution resolution = Resolution::hourly;
  bool normalized = false;
  std::optional<Matrix> raw_values;  // original values, kept for prompts

  Eigen::Index length() const { return values.rows(); }
  Eigen::Index channels() const { return values.cols(); }

  /// Unnormalized view regardless of normalization state.
  const Matrix& raw() const { return normalized ? *raw_values : values; }

  std::int64_t timestamp_at(Eigen::Index row) const {
    return start_epoch_s + static_cast<std::int64_t>(row) * step_seconds(resolution);
  }

  void validate() const;
};

enum class SummarySource { llm, mock, cached };

struct TextSummary {
  std::string text;
  SummarySource source = SummarySource::llm;
};

struct Sample {
  TimeSeriesWindow window;
  std::optional<TextSummary> summary;
  ClassLabel label;
  std::string id;
};

/// Numerically stable softmax (max-subtraction). Order-preserving.
template <typename Derived>
Vector softmax_vector(const Eigen::MatrixBase<Derived>& logits) {
  if (logits.size() == 0) {
    fail(ErrorCode::invalid_input, "softmax: empty input");
  }
  if (!logits.allFinite()) {
    fail(ErrorCode::invalid_input, "softmax: non-finite input");
  }
  Vector v = logits.template cast<double>();
  const double m = v.maxCoeff();
  Vector e = (v.array() - m).exp();
  return e / e.sum();
}

PredictionDistribution softmax(const Vector& logits);

Vector one_hot(ClassLabel label, int num_classes);

/// Lowest index among maxima; deterministic tie-break.
template <typename Derived>
ClassLabel argmax_with_tiebreak(const Eigen::MatrixBase<Derived>& v) {
  if (v.size() == 0) {
    fail(ErrorCode::invalid_input, "argmax: empty input");
  }
  if (!v.allFinite()) {
    fail(ErrorCode::invalid_input, "argmax: non-finite input");
  }
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return ClassLabel{best};
}

ClassLabel argmax_with_tiebreak(const PredictionDistribution& dist);

}  // namespace timecap
