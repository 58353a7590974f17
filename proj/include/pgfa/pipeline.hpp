#pragma once

#include "pgfa/alignment.hpp"
#include "pgfa/io.hpp"
#include "pgfa/metrics.hpp"
#include "pgfa/trainer.hpp"
#include "pgfa/vmf.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pgfa::pipeline {

namespace fs = std::filesystem;

struct ExperimentConfig {
  fs::path features;
  fs::path anchors;
  std::optional<fs::path> manifest;
  std::optional<fs::path> checkpoint;  // load instead of training when set
  fs::path out;
  std::vector<int> encoder_widths{64, 32};  // widths after the input layer
  Activation activation = Activation::kRelu;
  FitConfig fit;
  AlignmentConfig align;

  /// Throws when a referenced input file is missing or a setting is out of range.
  void validate() const;
};

struct TrainOutcome {
  TrainerState state;
  std::vector<double> epoch_loss;
};

/// Trains on the seen split (every row when there is no manifest). Writes
/// model.ckpt and loss_trace.csv under `config.out`.
TrainOutcome train(const ExperimentConfig& config);

struct AlignOutcome {
  EmbeddingTable embedded;           // unseen rows after the encoder
  std::vector<std::string> classes;  // unseen class names, id order
  std::vector<int> baseline_labels;
  AlignmentResult aligned;
  Vector entropies;
};

/// Embeds the unseen split (with `state` when given) and runs both the plain
/// text-anchor classifier and prototype alignment. Writes nothing.
AlignOutcome align(const ExperimentConfig& config, const std::optional<TrainerState>& state);

/// Scores `labels_csv` (final_label column) against the true labels in the
/// feature file. Writes eval.json and confusion.csv under `out`.
EvalReport eval(const fs::path& features, const fs::path& labels_csv,
                const std::optional<fs::path>& manifest, const std::optional<fs::path>& checkpoint,
                const fs::path& out);

struct RunSummary {
  std::vector<double> epoch_loss;
  EvalReport baseline;
  EvalReport aligned;
  PrototypeReport prototype_report;
};

/// Train (or load), embed the unseen split, classify with and without
/// prototype alignment, and write every artifact:
///   model.ckpt, loss_trace.csv,
///   baseline/{labels.csv,eval.json,confusion.csv},
///   aligned/{labels.csv,eval.json,confusion.csv,prototype_report.txt}
RunSummary run_zero_shot(const ExperimentConfig& config);

/// verify_theorem1 plus theorem.csv under `out`.
TheoremReport run_simulation(const TheoremConfig& config, const fs::path& out);

struct GradcheckConfig {
  int configs = 20;
  std::uint64_t seed = 0;
  double step = 1e-5;
  double tolerance = 1e-5;
  double absolute_floor = 1e-8;
  /// Test hook: perturb the analytic gradient of this parameter group.
  std::optional<std::string> corrupt;
};

struct GroupError {
  std::string name;
  double max_error = 0.0;
  int config = 0;
  Eigen::Index index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradcheckReport {
  std::vector<GroupError> groups;  // sorted by name
  GroupError worst;
  int configs = 0;
  Eigen::Index coordinates = 0;
  bool passed = false;
};

/// Error of one coordinate: |a - n| / max(|a|, |n|, floor / tolerance), so
/// differences below the absolute floor always pass.
double gradient_error(double analytic, double numeric, const GradcheckConfig& config);

GradcheckReport run_gradcheck(const GradcheckConfig& config);
std::string format_gradcheck(const GradcheckReport& report);

struct SynthConfig {
  int dim = 32;
  int seen_classes = 5;
  int unseen_classes = 5;
  double kappa = 30.0;
  Eigen::Index samples_per_class = 200;
  double bias_angle = 25.0 * M_PI / 180.0;
  double spread = 30.0 * M_PI / 180.0;
  std::uint64_t seed = 0;
};

/// Writes features.emb, anchors.emb and manifest.json for a seen/unseen vMF
/// mixture whose anchors are rotated away from the class means. Class means
/// share an attribute subspace of rank seen - 1, and the feature rows are a
/// fixed seeded rotation of the anchor space.
void synthesize(const SynthConfig& config, const fs::path& out);

}  // namespace pgfa::pipeline
