#pragma once

#include "pgfa/alignment.hpp"
#include "pgfa/core.hpp"
#include "pgfa/metrics.hpp"
#include "pgfa/trainer.hpp"
#include "pgfa/vmf.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace pgfa::io {

inline constexpr const char* kTableMagic = "PGFA-EMB1";
inline constexpr const char* kCheckpointMagic = "PGFA-CKPT1";

/// Shortest representation that parses back to the same double.
std::string format_shortest(double x);

/// "%.17g", used for every report value.
std::string format17(double x);

// Embedding table files:
//   PGFA-EMB1 d=<d> n=<N>
//   id,label,x1,...,xd
// Labels are mapped to class indices in order of first appearance.
EmbeddingTable parse_embedding_table(std::istream& in, const std::string& source);
EmbeddingTable read_embedding_table(const std::filesystem::path& path);
void write_embedding_table(std::ostream& out, const EmbeddingTable& table);
void write_embedding_table(const std::filesystem::path& path, const EmbeddingTable& table);

struct SplitManifest {
  int fold = 0;
  std::vector<std::string> seen;
  std::vector<std::string> unseen;

  void validate() const;
};

/// JSON: {"fold": 0, "seen": [...], "unseen": [...]}
SplitManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const SplitManifest& manifest);

/// Partition by class. The seen table's classes follow `manifest.seen`, the
/// unseen table's follow `manifest.unseen`.
std::pair<EmbeddingTable, EmbeddingTable> apply_split(const EmbeddingTable& table,
                                                      const SplitManifest& manifest);

/// Anchors for `classes`, looked up by name in an anchor table whose labels
/// are class names. Class ids are positions in `classes`.
AnchorSet anchors_for(const EmbeddingTable& anchor_table, const std::vector<std::string>& classes);

/// Text feature row for every row of `table`, taken from its class anchor.
EmbeddingTable text_rows_for(const EmbeddingTable& table, const EmbeddingTable& anchor_table);

// Checkpoint: magic line, "key=value" header lines up to "end", then every
// parameter array as little-endian float64 in row-major order: encoder
// layers (weight, bias), projection (weight, bias), log_tau.
void write_checkpoint(std::ostream& out, const TrainerState& state);
void write_checkpoint(const std::filesystem::path& path, const TrainerState& state);
TrainerState read_checkpoint(std::istream& in, const std::string& source);
TrainerState read_checkpoint(const std::filesystem::path& path);

/// epoch,mean_loss
void write_loss_trace(const std::filesystem::path& path, const std::vector<double>& losses);

struct LabelRecord {
  std::string row_id;
  std::string pseudo_label;
  std::string final_label;
  double entropy = 0.0;
};

/// row_id,pseudo_label,final_label,entropy
void write_labels_csv(const std::filesystem::path& path, const std::vector<LabelRecord>& rows);
std::vector<LabelRecord> read_labels_csv(const std::filesystem::path& path);

std::vector<LabelRecord> label_records(const EmbeddingTable& table,
                                       const std::vector<std::string>& class_names,
                                       const std::vector<int>& pseudo, const std::vector<int>& final,
                                       const Vector& entropies);

void write_prototype_report(const std::filesystem::path& path, const PrototypeReport& report,
                            const std::vector<std::string>& class_names);

/// JSON keys: accuracy, per_class, fdr, silhouette, ridge_lambda.
std::string eval_report_json(const EvalReport& report, const std::vector<std::string>& class_names);
void write_eval_report(const std::filesystem::path& path, const EvalReport& report,
                       const std::vector<std::string>& class_names);

/// Header row and first column carry class names.
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm,
                         const std::vector<std::string>& class_names);

/// n,trial,agreement,mean_resultant_length,a_d_reference
void write_theorem_csv(const std::filesystem::path& path, const TheoremReport& report);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace pgfa::io
