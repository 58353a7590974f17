#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pgfa {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ErrorCode {
  kZeroVector,
  kDimensionMismatch,
  kNonPositiveTemperature,
  kNonFinite,
  kStaleCache,
  kEmptyDataset,
  kBadDimension,
  kSingularScatter,
  kSingleCluster,
  kLengthMismatch,
  kOutOfRangeLabel,
  kParseError,
  kUnassignedLabel,
  kMissingClass,
  kInvalidArgument,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so the
/// CLI can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline constexpr double kNormEpsilon = 1e-12;

/// Dense row-major feature carrier. Row i has id `ids[i]` and class label
/// `labels[i]`, an index into `classes`.
struct EmbeddingTable {
  Matrix features;                  // N x d
  std::vector<std::string> ids;     // N
  std::vector<int> labels;          // N, each in [0, classes.size())
  std::vector<std::string> classes;

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  /// Throws DimensionMismatch / OutOfRangeLabel when the parallel arrays
  /// disagree.
  void validate() const;

  /// Table with generated ids "r<i>" and class names "c<k>".
  static EmbeddingTable from_matrix(Matrix features, std::vector<int> labels);
};

Vector l2_normalize(const Vector& v, double eps = kNormEpsilon);

double cosine_sim(const Vector& a, const Vector& b);

/// Tempered softmax with max subtraction.
Vector softmax(const Vector& scores, double temperature = 1.0);

/// Entropy in nats, 0 ln 0 = 0.
double shannon_entropy(const Vector& p);

/// KL(target || pred) in nats.
double kl_divergence(const Vector& target, const Vector& pred);

/// Entry (i, j) is cosine_sim(x.row(i), y.row(j)).
Matrix similarity_matrix(const Matrix& x, const Matrix& y);

/// Rows scaled to unit norm; ZeroVector names the offending row.
Matrix normalize_rows(const Matrix& x, const char* what = "row");

/// Index of the first maximum, so ties go to the lowest index.
Eigen::Index argmax(const Vector& v);

}  // namespace pgfa
