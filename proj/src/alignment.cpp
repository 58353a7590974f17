#include "pgfa/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace pgfa {

const char* to_string(AnchorKind kind) {
  switch (kind) {
    case AnchorKind::kText: return "text";
    case AnchorKind::kPrototype: return "prototype";
    case AnchorKind::kExemplar: return "exemplar";
  }
  return "text";
}

const char* to_string(PseudoLabelStrategy strategy) {
  return strategy == PseudoLabelStrategy::kWeighted ? "weighted" : "argmax";
}

PseudoLabelStrategy parse_strategy(const std::string& name) {
  if (name == "argmax") return PseudoLabelStrategy::kArgmax;
  if (name == "weighted") return PseudoLabelStrategy::kWeighted;
  throw Error(ErrorCode::kInvalidArgument, "unknown strategy '" + name + "'");
}

void AnchorSet::validate() const {
  if (anchors.rows() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "need at least two anchors, got " +
                                                 std::to_string(anchors.rows()));
  }
  if (static_cast<Eigen::Index>(class_ids.size()) != anchors.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "anchor rows and class ids differ in count");
  }
  if (std::set<int>(class_ids.begin(), class_ids.end()).size() != class_ids.size()) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate anchor class id");
  }
  for (Eigen::Index k = 0; k < anchors.rows(); ++k) {
    if (!(anchors.row(k).norm() > kNormEpsilon)) {
      throw Error(ErrorCode::kZeroVector, "anchor " + std::to_string(class_ids[k]) + " is zero");
    }
  }
}

void AlignmentConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "alpha must lie in [0, 1], got " +
                                                 std::to_string(alpha));
  }
}

std::size_t SupportSet::total() const {
  std::size_t n = 0;
  for (const auto& m : members) n += m.size();
  return n;
}

PseudoLabeledSet classify_with_anchors(const Matrix& features, const AnchorSet& anchors) {
  anchors.validate();
  if (features.cols() != anchors.anchors.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "feature width " + std::to_string(features.cols()) + " but anchors have width " +
                    std::to_string(anchors.anchors.cols()));
  }
  PseudoLabeledSet pl;
  pl.class_ids = anchors.class_ids;
  pl.normalized = normalize_rows(features, "feature row");
  const Matrix sims = pl.normalized * normalize_rows(anchors.anchors, "anchor").transpose();

  const auto n = features.rows();
  const auto k = anchors.size();
  pl.probs.resize(n, k);
  pl.entropies.resize(n);
  pl.pseudo_labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector p = softmax(sims.row(i).transpose(), 1.0);
    pl.probs.row(i) = p.transpose();
    pl.entropies[i] = shannon_entropy(p);
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < k; ++j) {
      if (sims(i, j) > sims(i, best) ||
          (sims(i, j) == sims(i, best) && anchors.class_ids[j] < anchors.class_ids[best])) {
        best = j;
      }
    }
    pl.pseudo_labels[static_cast<std::size_t>(i)] = anchors.class_ids[best];
  }
  return pl;
}

SupportSet build_support_sets(const PseudoLabeledSet& pl) {
  SupportSet s;
  s.class_ids = pl.class_ids;
  s.members.resize(pl.class_ids.size());
  s.normalized = pl.normalized;
  for (std::size_t i = 0; i < pl.pseudo_labels.size(); ++i) {
    const auto it = std::find(pl.class_ids.begin(), pl.class_ids.end(), pl.pseudo_labels[i]);
    if (it == pl.class_ids.end()) {
      throw Error(ErrorCode::kOutOfRangeLabel,
                  "pseudo label " + std::to_string(pl.pseudo_labels[i]) + " has no anchor");
    }
    const auto row = static_cast<Eigen::Index>(i);
    s.members[static_cast<std::size_t>(it - pl.class_ids.begin())].push_back(
        SupportMember{row, pl.entropies[row]});
  }
  return s;
}

SupportSet entropy_filter(const SupportSet& support, double alpha) {
  AlignmentConfig{alpha}.validate();
  SupportSet z = support;
  for (auto& members : z.members) {
    const auto keep = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(members.size())));
    std::sort(members.begin(), members.end(), [](const SupportMember& a, const SupportMember& b) {
      return a.entropy < b.entropy || (a.entropy == b.entropy && a.row < b.row);
    });
    members.resize(keep);
    std::sort(members.begin(), members.end(),
              [](const SupportMember& a, const SupportMember& b) { return a.row < b.row; });
  }
  return z;
}

PrototypeResult compute_prototypes(const SupportSet& filtered, const AnchorSet& fallback) {
  if (fallback.class_ids != filtered.class_ids) {
    throw Error(ErrorCode::kMissingClass, "fallback anchors do not match support classes");
  }
  PrototypeResult out;
  out.prototypes.class_ids = fallback.class_ids;
  out.prototypes.kind = AnchorKind::kPrototype;
  out.prototypes.anchors.resize(fallback.anchors.rows(), fallback.anchors.cols());
  for (std::size_t k = 0; k < filtered.members.size(); ++k) {
    const auto& members = filtered.members[k];
    const auto row = static_cast<Eigen::Index>(k);
    if (members.empty()) {
      out.prototypes.anchors.row(row) = fallback.anchors.row(row);
      out.used_fallback.push_back(true);
      continue;
    }
    Vector sum = Vector::Zero(filtered.normalized.cols());
    for (const auto& m : members) sum += filtered.normalized.row(m.row).transpose();
    out.prototypes.anchors.row(row) = (sum / static_cast<double>(members.size())).transpose();
    out.used_fallback.push_back(false);
  }
  return out;
}

AnchorSet weighted_prototypes(const PseudoLabeledSet& pl) {
  if (pl.normalized.rows() == 0) throw Error(ErrorCode::kEmptyDataset, "no rows to weight");
  AnchorSet out;
  out.class_ids = pl.class_ids;
  out.kind = AnchorKind::kPrototype;
  const Vector mass = pl.probs.colwise().sum().transpose();
  out.anchors = pl.probs.transpose() * pl.normalized;
  for (Eigen::Index k = 0; k < out.anchors.rows(); ++k) out.anchors.row(k) /= mass[k];
  return out;
}

std::vector<int> reclassify(const Matrix& features, const AnchorSet& prototypes) {
  return classify_with_anchors(features, prototypes).pseudo_labels;
}

AlignmentResult align_and_classify(const Matrix& features, const AnchorSet& text_anchors,
                                   const AlignmentConfig& config) {
  config.validate();
  const PseudoLabeledSet pl = classify_with_anchors(features, text_anchors);
  const SupportSet support = build_support_sets(pl);

  AlignmentResult result;
  PrototypeReport& report = result.report;
  report.config = config;
  report.class_ids = text_anchors.class_ids;
  report.pseudo_labels = pl.pseudo_labels;
  report.entropies = pl.entropies;
  for (const auto& m : support.members) report.support_sizes.push_back(m.size());

  if (config.strategy == PseudoLabelStrategy::kWeighted) {
    result.prototypes = weighted_prototypes(pl);
    report.filtered_sizes = report.support_sizes;
    report.used_fallback.assign(report.class_ids.size(), false);
  } else {
    const SupportSet filtered = entropy_filter(support, config.alpha);
    for (const auto& m : filtered.members) report.filtered_sizes.push_back(m.size());
    PrototypeResult protos = compute_prototypes(filtered, text_anchors);
    result.prototypes = std::move(protos.prototypes);
    report.used_fallback = std::move(protos.used_fallback);
  }

  result.final_labels = reclassify(features, result.prototypes);
  report.final_labels = result.final_labels;
  return result;
}

AnchorSet prototypes_from_exemplars(const EmbeddingTable& exemplars) {
  exemplars.validate();
  AnchorSet out;
  out.kind = AnchorKind::kExemplar;
  const auto k = static_cast<Eigen::Index>(exemplars.classes.size());
  out.anchors = Matrix::Zero(k, exemplars.dim());
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < exemplars.rows(); ++i) {
    const int label = exemplars.labels[static_cast<std::size_t>(i)];
    out.anchors.row(label) += exemplars.features.row(i);
    ++counts[static_cast<std::size_t>(label)];
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      throw Error(ErrorCode::kMissingClass,
                  "class '" + exemplars.classes[static_cast<std::size_t>(c)] + "' has no exemplar");
    }
    const Vector mean = out.anchors.row(c).transpose() / counts[static_cast<std::size_t>(c)];
    out.anchors.row(c) = l2_normalize(mean).transpose();
    out.class_ids.push_back(static_cast<int>(c));
  }
  return out;
}

}  // namespace pgfa
