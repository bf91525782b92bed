#pragma once

#include "timecap/core.hpp"

#include <limits>
#include <vector>

namespace timecap::eval {

struct MetricReport {
  Vector precision;  // per class
  Vector recall;
  Vector f1;
  double macro_f1 = 0.0;
  double auroc = std::numeric_limits<double>::quiet_NaN();
  int abstentions = 0;
  Eigen::MatrixXi confusion;  // rows = actual, cols = predicted

  int sample_count() const { return static_cast<int>(confusion.sum()); }
};

/// Per-class precision/recall/F1 with the 0-when-undefined convention,
/// plus the unweighted (macro) mean.
MetricReport f1_scores(const std::vector<ClassLabel>& predicted,
                       const std::vector<ClassLabel>& actual, const LabelSchema& schema);

double macro_f1(const std::vector<ClassLabel>& predicted, const std::vector<ClassLabel>& actual,
                int num_classes);

/// Rank-based AUROC (normalized Mann-Whitney U, ties counted 1/2).
/// `positive` holds 0/1 per sample.
double auroc_binary(const std::vector<double>& scores, const std::vector<int>& positive);

/// One-vs-rest macro AUROC over per-class scores. Classes that are all
/// positive or all negative are skipped; all-degenerate input is an error.
double auroc(const std::vector<Vector>& class_scores, const std::vector<ClassLabel>& actual,
             int num_classes, int* skipped_classes = nullptr);

}  // namespace timecap::eval
