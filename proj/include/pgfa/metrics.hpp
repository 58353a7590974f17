#pragma once

#include "pgfa/core.hpp"

#include <optional>
#include <vector>

namespace pgfa {

double accuracy(const std::vector<int>& truth, const std::vector<int>& predicted);

/// counts(t, p) is the number of samples of true class t predicted as p.
struct ConfusionMatrix {
  Eigen::MatrixXi counts;

  long total() const { return counts.sum(); }
};

ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& predicted, int k);

/// Per-class recall; classes with no samples have no value.
std::vector<std::optional<double>> per_class_accuracy(const ConfusionMatrix& cm);

struct FdrResult {
  double fdr = 0.0;
  double ridge_lambda = 0.0;
};

/// tr((S_w + lambda I)^-1 S_b) with lambda = 1e-8 tr(S_w) / d, solved through
/// a Cholesky factorization.
FdrResult fisher_discrimination_ratio(const Matrix& features, const std::vector<int>& labels);

/// Mean silhouette under cosine distance; singleton clusters score 0.
double silhouette_cosine(const Matrix& features, const std::vector<int>& labels);

struct EvalReport {
  double accuracy = 0.0;
  std::vector<std::optional<double>> per_class;
  ConfusionMatrix confusion;
  std::optional<double> fdr;
  std::optional<double> silhouette;
  std::optional<double> ridge_lambda;
};

/// Accuracy and confusion always; FDR and silhouette when `features` is
/// non-empty and the metric is defined for it.
EvalReport evaluate(const std::vector<int>& truth, const std::vector<int>& predicted, int k,
                    const Matrix& features);

}  // namespace pgfa
