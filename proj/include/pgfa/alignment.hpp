#pragma once

#include "pgfa/core.hpp"

#include <string>
#include <vector>

namespace pgfa {

enum class AnchorKind { kText, kPrototype, kExemplar };
enum class PseudoLabelStrategy { kArgmax, kWeighted };

const char* to_string(AnchorKind kind);
const char* to_string(PseudoLabelStrategy strategy);
PseudoLabelStrategy parse_strategy(const std::string& name);

/// One reference vector per class. Row k of `anchors` belongs to
/// `class_ids[k]`.
struct AnchorSet {
  Matrix anchors;              // K x d
  std::vector<int> class_ids;  // K, unique
  AnchorKind kind = AnchorKind::kText;

  Eigen::Index size() const { return anchors.rows(); }
  void validate() const;
};

struct PseudoLabeledSet {
  std::vector<int> pseudo_labels;  // class ids
  Matrix probs;                    // N x K, column order follows the anchors
  Vector entropies;                // N
  Matrix normalized;               // N x d, rows of the input scaled to unit norm
  std::vector<int> class_ids;      // K
};

struct SupportMember {
  Eigen::Index row = 0;
  double entropy = 0.0;
};

/// Per-class membership, in anchor order. Members are kept sorted by row so
/// downstream sums run in a fixed order; their unit vectors live in
/// `normalized`.
struct SupportSet {
  std::vector<int> class_ids;
  std::vector<std::vector<SupportMember>> members;
  Matrix normalized;

  std::size_t total() const;
};

struct AlignmentConfig {
  double alpha = 1.0;
  PseudoLabelStrategy strategy = PseudoLabelStrategy::kArgmax;

  void validate() const;
};

/// Softmax at temperature 1 over cosine similarity to each anchor; the label
/// is the argmax, ties resolved to the smallest class id.
PseudoLabeledSet classify_with_anchors(const Matrix& features, const AnchorSet& anchors);

SupportSet build_support_sets(const PseudoLabeledSet& pl);

/// Keeps the floor(alpha * |S^k|) lowest-entropy members of each class, ties
/// going to the smaller row index.
SupportSet entropy_filter(const SupportSet& support, double alpha);

struct PrototypeResult {
  AnchorSet prototypes;
  std::vector<bool> used_fallback;
};

/// Centroid of each filtered set (not renormalized); empty classes fall back
/// to their text anchor.
PrototypeResult compute_prototypes(const SupportSet& filtered, const AnchorSet& fallback);

/// sum_i P_i^k z_i / sum_i P_i^k over every row.
AnchorSet weighted_prototypes(const PseudoLabeledSet& pl);

std::vector<int> reclassify(const Matrix& features, const AnchorSet& prototypes);

struct PrototypeReport {
  AlignmentConfig config;
  std::vector<int> class_ids;
  std::vector<std::size_t> support_sizes;
  std::vector<std::size_t> filtered_sizes;
  std::vector<bool> used_fallback;
  std::vector<int> pseudo_labels;
  std::vector<int> final_labels;
  Vector entropies;
};

struct AlignmentResult {
  std::vector<int> final_labels;
  AnchorSet prototypes;
  PrototypeReport report;
};

AlignmentResult align_and_classify(const Matrix& features, const AnchorSet& text_anchors,
                                   const AlignmentConfig& config);

/// Normalized mean of each class's exemplar rows; class ids are the table's
/// label indices. Throws MissingClass if a class has no row.
AnchorSet prototypes_from_exemplars(const EmbeddingTable& exemplars);

}  // namespace pgfa
