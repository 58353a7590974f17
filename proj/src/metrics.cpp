#include "pgfa/metrics.hpp"

#include <algorithm>
#include <limits>
#include <map>

namespace pgfa {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorCode::kLengthMismatch,
                "label vectors of length " + std::to_string(a) + " and " + std::to_string(b));
  }
}

}  // namespace

double accuracy(const std::vector<int>& truth, const std::vector<int>& predicted) {
  check_lengths(truth.size(), predicted.size());
  if (truth.empty()) throw Error(ErrorCode::kEmptyDataset, "accuracy of no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == predicted[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& predicted, int k) {
  check_lengths(truth.size(), predicted.size());
  ConfusionMatrix cm{Eigen::MatrixXi::Zero(k, k)};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i];
    const int p = predicted[i];
    if (t < 0 || t >= k || p < 0 || p >= k) {
      throw Error(ErrorCode::kOutOfRangeLabel, "sample " + std::to_string(i) + " has labels (" +
                                                   std::to_string(t) + ", " + std::to_string(p) +
                                                   ") outside [0, " + std::to_string(k) + ")");
    }
    ++cm.counts(t, p);
  }
  return cm;
}

std::vector<std::optional<double>> per_class_accuracy(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> out;
  for (Eigen::Index t = 0; t < cm.counts.rows(); ++t) {
    const long row = cm.counts.row(t).sum();
    if (row == 0) {
      out.emplace_back();
    } else {
      out.emplace_back(static_cast<double>(cm.counts(t, t)) / static_cast<double>(row));
    }
  }
  return out;
}

FdrResult fisher_discrimination_ratio(const Matrix& features, const std::vector<int>& labels) {
  check_lengths(static_cast<std::size_t>(features.rows()), labels.size());
  std::map<int, std::vector<Eigen::Index>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    groups[labels[i]].push_back(static_cast<Eigen::Index>(i));
  }
  if (groups.size() < 2) throw Error(ErrorCode::kSingleCluster, "FDR needs at least two classes");

  const auto d = features.cols();
  const Vector global_mean = features.colwise().mean().transpose();
  Matrix sw = Matrix::Zero(d, d);
  Matrix sb = Matrix::Zero(d, d);
  for (const auto& [label, rows] : groups) {
    Vector mean = Vector::Zero(d);
    for (auto r : rows) mean += features.row(r).transpose();
    mean /= static_cast<double>(rows.size());
    for (auto r : rows) {
      const Vector diff = features.row(r).transpose() - mean;
      sw.noalias() += diff * diff.transpose();
    }
    const Vector between = mean - global_mean;
    sb.noalias() += static_cast<double>(rows.size()) * between * between.transpose();
  }

  const double trace = sw.trace();
  if (!(trace > 0.0)) {
    throw Error(ErrorCode::kSingularScatter, "within-class scatter is zero");
  }
  FdrResult result;
  result.ridge_lambda = 1e-8 * trace / static_cast<double>(d);
  const Eigen::LLT<Matrix> llt(sw + result.ridge_lambda * Matrix::Identity(d, d));
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kSingularScatter, "regularized within-class scatter is not positive definite");
  }
  result.fdr = llt.solve(sb).trace();
  return result;
}

double silhouette_cosine(const Matrix& features, const std::vector<int>& labels) {
  check_lengths(static_cast<std::size_t>(features.rows()), labels.size());
  std::vector<int> classes(labels);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw Error(ErrorCode::kSingleCluster, "silhouette needs two clusters");

  const auto n = features.rows();
  const Matrix dist = Matrix::Ones(n, n) - similarity_matrix(features, features);
  std::vector<std::size_t> slot(labels.size());
  std::vector<double> sizes(classes.size(), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    slot[i] = static_cast<std::size_t>(
        std::lower_bound(classes.begin(), classes.end(), labels[i]) - classes.begin());
    sizes[slot[i]] += 1.0;
  }

  double total = 0.0;
  std::vector<double> sums(classes.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) sums[slot[static_cast<std::size_t>(j)]] += dist(i, j);
    }
    const std::size_t own = slot[static_cast<std::size_t>(i)];
    if (sizes[own] <= 1.0) continue;
    const double a = sums[own] / (sizes[own] - 1.0);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes.size(); ++c) {
      if (c != own) b = std::min(b, sums[c] / sizes[c]);
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

EvalReport evaluate(const std::vector<int>& truth, const std::vector<int>& predicted, int k,
                    const Matrix& features) {
  EvalReport report;
  report.accuracy = accuracy(truth, predicted);
  report.confusion = confusion(truth, predicted, k);
  report.per_class = per_class_accuracy(report.confusion);
  if (features.rows() > 0) {
    try {
      const FdrResult fdr = fisher_discrimination_ratio(features, truth);
      report.fdr = fdr.fdr;
      report.ridge_lambda = fdr.ridge_lambda;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kSingularScatter && e.code() != ErrorCode::kSingleCluster) throw;
    }
    try {
      report.silhouette = silhouette_cosine(features, truth);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kSingleCluster) throw;
    }
  }
  return report;
}

}  // namespace pgfa
