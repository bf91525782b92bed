#include "timecap/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace timecap::eval {

MetricReport f1_scores(const std::vector<ClassLabel>& predicted,
                       const std::vector<ClassLabel>& actual, const LabelSchema& schema) {
  if (predicted.size() != actual.size() || predicted.empty()) {
    fail(ErrorCode::invalid_input, "f1_scores: prediction/label length mismatch or empty");
  }
  const int K = schema.num_classes();

  MetricReport report;
  report.confusion = Eigen::MatrixXi::Zero(K, K);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const int p = predicted[i].index;
    const int a = actual[i].index;
    if (p < 0 || p >= K || a < 0 || a >= K) {
      fail(ErrorCode::invalid_input, "f1_scores: label outside schema");
    }
    report.confusion(a, p) += 1;
  }

  report.precision = Vector::Zero(K);
  report.recall = Vector::Zero(K);
  report.f1 = Vector::Zero(K);
  for (int k = 0; k < K; ++k) {
    const double tp = report.confusion(k, k);
    const double predicted_k = report.confusion.col(k).sum();
    const double actual_k = report.confusion.row(k).sum();
    const double precision = predicted_k > 0 ? tp / predicted_k : 0.0;
    const double recall = actual_k > 0 ? tp / actual_k : 0.0;
    report.precision(k) = precision;
    report.recall(k) = recall;
    report.f1(k) = (precision + recall) > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  report.macro_f1 = report.f1.mean();
  return report;
}

double macro_f1(const std::vector<ClassLabel>& predicted, const std::vector<ClassLabel>& actual,
                int num_classes) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(num_classes));
  for (int k = 0; k < num_classes; ++k) names.push_back("class" + std::to_string(k));
  return f1_scores(predicted, actual, LabelSchema(names)).macro_f1;
}

double auroc_binary(const std::vector<double>& scores, const std::vector<int>& positive) {
  if (scores.size() != positive.size() || scores.empty()) {
    fail(ErrorCode::invalid_input, "auroc: score/label length mismatch or empty");
  }
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int p : positive) n_pos += (p != 0);
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    fail(ErrorCode::invalid_input, "auroc: need at least one positive and one negative");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average ranks over tie groups, then U = sum of positive ranks.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (positive[order[t]]) rank_sum_pos += avg_rank;
    }
    i = j + 1;
  }

  const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auroc(const std::vector<Vector>& class_scores, const std::vector<ClassLabel>& actual,
             int num_classes, int* skipped_classes) {
  if (class_scores.size() != actual.size() || class_scores.empty()) {
    fail(ErrorCode::invalid_input, "auroc: score/label length mismatch or empty");
  }
  double total = 0.0;
  int used = 0;
  int skipped = 0;
  for (int k = 0; k < num_classes; ++k) {
    std::vector<double> scores;
    std::vector<int> positive;
    scores.reserve(class_scores.size());
    positive.reserve(class_scores.size());
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < class_scores.size(); ++i) {
      if (class_scores[i].size() != num_classes) {
        fail(ErrorCode::invalid_input, "auroc: score vector has wrong dimension");
      }
      scores.push_back(class_scores[i](k));
      const int is_pos = actual[i].index == k ? 1 : 0;
      positive.push_back(is_pos);
      n_pos += static_cast<std::size_t>(is_pos);
    }
    if (n_pos == 0 || n_pos == scores.size()) {
      ++skipped;
      continue;
    }
    total += auroc_binary(scores, positive);
    ++used;
  }
  if (skipped_classes) *skipped_classes = skipped;
  if (used == 0) {
    fail(ErrorCode::invalid_input, "auroc: every class is degenerate");
  }
  return total / used;
}

}  // namespace timecap::eval
