#include "pgfa/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pgfa {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kStaleCache: return "StaleCache";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kBadDimension: return "BadDimension";
    case ErrorCode::kSingularScatter: return "SingularScatter";
    case ErrorCode::kSingleCluster: return "SingleCluster";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kOutOfRangeLabel: return "OutOfRangeLabel";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kUnassignedLabel: return "UnassignedLabel";
    case ErrorCode::kMissingClass: return "MissingClass";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

void EmbeddingTable::validate() const {
  const auto n = static_cast<std::size_t>(features.rows());
  if (ids.size() != n || labels.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch,
                "table has " + std::to_string(n) + " feature rows but " +
                    std::to_string(ids.size()) + " ids and " + std::to_string(labels.size()) +
                    " labels");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes.size()) {
      throw Error(ErrorCode::kOutOfRangeLabel,
                  "row " + std::to_string(i) + " has label " + std::to_string(labels[i]));
    }
  }
}

EmbeddingTable EmbeddingTable::from_matrix(Matrix features, std::vector<int> labels) {
  EmbeddingTable t;
  t.features = std::move(features);
  t.labels = std::move(labels);
  t.ids.reserve(t.labels.size());
  for (std::size_t i = 0; i < t.labels.size(); ++i) t.ids.push_back("r" + std::to_string(i));
  int k = 0;
  for (int l : t.labels) k = std::max(k, l + 1);
  for (int c = 0; c < k; ++c) t.classes.push_back("c" + std::to_string(c));
  t.validate();
  return t;
}

Vector l2_normalize(const Vector& v, double eps) {
  const double norm = v.norm();
  if (!(norm > eps)) {
    throw Error(ErrorCode::kZeroVector, "vector norm " + std::to_string(norm) + " <= " +
                                            std::to_string(eps));
  }
  return v / norm;
}

double cosine_sim(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "cosine_sim of sizes " + std::to_string(a.size()) + " and " +
                    std::to_string(b.size()));
  }
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > kNormEpsilon) || !(nb > kNormEpsilon)) {
    throw Error(ErrorCode::kZeroVector, "cosine_sim of a zero vector");
  }
  return a.dot(b) / (na * nb);
}

Vector softmax(const Vector& scores, double temperature) {
  if (!(temperature > 0.0)) {
    throw Error(ErrorCode::kNonPositiveTemperature,
                "temperature " + std::to_string(temperature));
  }
  if (scores.size() == 0) throw Error(ErrorCode::kBadDimension, "softmax of empty scores");
  if (!scores.allFinite()) throw Error(ErrorCode::kNonFinite, "softmax scores");
  const Vector shifted = (scores.array() - scores.maxCoeff()) / temperature;
  Vector e = shifted.array().exp();
  return e / e.sum();
}

double shannon_entropy(const Vector& p) {
  double h = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) h -= p[k] * std::log(p[k]);
  }
  return std::max(h, 0.0);
}

double kl_divergence(const Vector& target, const Vector& pred) {
  if (target.size() != pred.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "kl_divergence of sizes " + std::to_string(target.size()) + " and " +
                    std::to_string(pred.size()));
  }
  double kl = 0.0;
  for (Eigen::Index k = 0; k < target.size(); ++k) {
    if (target[k] > 0.0) kl += target[k] * std::log(target[k] / pred[k]);
  }
  return kl;
}

Matrix normalize_rows(const Matrix& x, const char* what) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double norm = x.row(i).norm();
    if (!(norm > kNormEpsilon)) {
      throw Error(ErrorCode::kZeroVector, std::string(what) + " " + std::to_string(i) +
                                              " has norm " + std::to_string(norm));
    }
    out.row(i) = x.row(i) / norm;
  }
  return out;
}

Matrix similarity_matrix(const Matrix& x, const Matrix& y) {
  if (x.cols() != y.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "similarity_matrix of widths " + std::to_string(x.cols()) + " and " +
                    std::to_string(y.cols()));
  }
  const Matrix xn = normalize_rows(x, "left row");
  const Matrix yn = normalize_rows(y, "right row");
  return xn * yn.transpose();
}

Eigen::Index argmax(const Vector& v) {
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) best = k;
  }
  return best;
}

}  // namespace pgfa
