#include "pgfa/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <sstream>

namespace pgfa::pipeline {

namespace {

void require_file(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(what) + " file '" + path.string() + "' does not exist");
  }
}

struct Splits {
  EmbeddingTable seen;
  EmbeddingTable unseen;
};

Splits load_splits(const fs::path& features, const std::optional<fs::path>& manifest) {
  EmbeddingTable table = io::read_embedding_table(features);
  if (!manifest) return Splits{table, table};
  auto [seen, unseen] = io::apply_split(table, io::read_manifest(*manifest));
  return Splits{std::move(seen), std::move(unseen)};
}

void write_outputs(const fs::path& dir, const EmbeddingTable& table,
                   const std::vector<std::string>& classes, const std::vector<int>& pseudo,
                   const std::vector<int>& final, const Vector& entropies, const EvalReport& report) {
  io::write_labels_csv(dir / "labels.csv", io::label_records(table, classes, pseudo, final, entropies));
  io::write_eval_report(dir / "eval.json", report, classes);
  io::write_confusion_csv(dir / "confusion.csv", report.confusion, classes);
}

// Re-raises any library error with the pipeline stage prepended.
template <typename Fn>
auto in_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("[") + stage + "] " + e.what());
  }
}

// Visits every scalar parameter with a stable group name and flat index.
using ParamVisitor = std::function<void(const std::string&, Eigen::Index, double&, double&)>;

void visit_matrix(const std::string& name, Matrix& param, Matrix& grad, const ParamVisitor& fn) {
  for (Eigen::Index i = 0; i < param.size(); ++i) fn(name, i, param.data()[i], grad.data()[i]);
}

void visit_vector(const std::string& name, Vector& param, Vector& grad, const ParamVisitor& fn) {
  for (Eigen::Index i = 0; i < param.size(); ++i) fn(name, i, param[i], grad[i]);
}

void visit_params(TrainerState& state, Gradients& grads, const ParamVisitor& fn) {
  for (std::size_t l = 0; l < state.encoder.size(); ++l) {
    const std::string prefix = "encoder." + std::to_string(l);
    visit_matrix(prefix + ".weight", state.encoder[l].weight, grads.encoder[l].weight, fn);
    visit_vector(prefix + ".bias", state.encoder[l].bias, grads.encoder[l].bias, fn);
  }
  visit_matrix("projection.weight", state.projection.weight, grads.projection.weight, fn);
  visit_vector("projection.bias", state.projection.bias, grads.projection.bias, fn);
  fn("log_tau", 0, state.log_tau, grads.log_tau);
}

struct RandomProblem {
  TrainerState state;
  Batch batch;
};

RandomProblem random_problem(std::mt19937_64& rng, int index) {
  std::uniform_int_distribution<int> batch_size(2, 4);
  std::uniform_int_distribution<int> width(1, 6);
  std::uniform_int_distribution<int> text_width(2, 6);
  std::uniform_int_distribution<int> hidden_layers(0, 2);
  std::uniform_real_distribution<double> log_tau(std::log(0.1), std::log(1.0));
  std::normal_distribution<double> normal(0.0, 1.0);

  EncoderSpec spec;
  spec.activation = static_cast<Activation>(index % 3);
  const int layers = hidden_layers(rng) + 1;
  for (int l = 0; l <= layers; ++l) spec.layer_widths.push_back(width(rng));
  const int d_text = text_width(rng);

  RandomProblem p;
  p.state = TrainerState::initialize(spec, d_text, rng());
  for (auto& layer : p.state.encoder) {
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = 0.1 * normal(rng);
  }
  for (Eigen::Index i = 0; i < p.state.projection.bias.size(); ++i) {
    p.state.projection.bias[i] = 0.1 * normal(rng);
  }
  p.state.log_tau = log_tau(rng);

  const int b = batch_size(rng);
  std::uniform_int_distribution<int> label(0, b - 1);
  p.batch.skeleton.resize(b, spec.input_dim());
  p.batch.text.resize(b, d_text);
  for (Eigen::Index i = 0; i < p.batch.skeleton.size(); ++i) p.batch.skeleton.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < p.batch.text.size(); ++i) p.batch.text.data()[i] = normal(rng);
  for (int i = 0; i < b; ++i) p.batch.labels.push_back(label(rng));
  return p;
}

}  // namespace

void ExperimentConfig::validate() const {
  require_file(features, "features");
  require_file(anchors, "anchors");
  if (manifest) require_file(*manifest, "manifest");
  if (checkpoint) require_file(*checkpoint, "checkpoint");
  align.validate();
  if (fit.epochs < 0 || fit.batch_size < 1 || !(fit.lr > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 0, batch >= 1 and lr > 0");
  }
  for (int w : encoder_widths) {
    if (w < 1) throw Error(ErrorCode::kInvalidArgument, "encoder widths must be >= 1");
  }
  if (encoder_widths.empty()) throw Error(ErrorCode::kInvalidArgument, "encoder needs a layer");
}

TrainOutcome train(const ExperimentConfig& config) {
  config.validate();
  const Splits splits = load_splits(config.features, config.manifest);
  const EmbeddingTable anchor_table = io::read_embedding_table(config.anchors);
  const EmbeddingTable text = io::text_rows_for(splits.seen, anchor_table);

  EncoderSpec spec;
  spec.layer_widths.push_back(static_cast<int>(splits.seen.dim()));
  spec.layer_widths.insert(spec.layer_widths.end(), config.encoder_widths.begin(),
                           config.encoder_widths.end());
  spec.activation = config.activation;
  const TrainerState initial =
      TrainerState::initialize(spec, static_cast<int>(anchor_table.dim()), config.fit.seed);
  FitResult fitted = fit(initial, splits.seen, text, config.fit);

  io::write_checkpoint(config.out / "model.ckpt", fitted.state);
  io::write_loss_trace(config.out / "loss_trace.csv", fitted.epoch_loss);
  return TrainOutcome{std::move(fitted.state), std::move(fitted.epoch_loss)};
}

AlignOutcome align(const ExperimentConfig& config, const std::optional<TrainerState>& state) {
  config.align.validate();
  const Splits splits = load_splits(config.features, config.manifest);
  const EmbeddingTable anchor_table = io::read_embedding_table(config.anchors);

  AlignOutcome out;
  out.embedded = state ? embed(*state, splits.unseen) : splits.unseen;
  out.classes = splits.unseen.classes;
  const AnchorSet anchors = io::anchors_for(anchor_table, out.classes);
  const PseudoLabeledSet baseline = classify_with_anchors(out.embedded.features, anchors);
  out.baseline_labels = baseline.pseudo_labels;
  out.entropies = baseline.entropies;
  out.aligned = align_and_classify(out.embedded.features, anchors, config.align);
  return out;
}

EvalReport eval(const fs::path& features, const fs::path& labels_csv,
                const std::optional<fs::path>& manifest, const std::optional<fs::path>& checkpoint,
                const fs::path& out) {
  const Splits splits = load_splits(features, manifest);
  EmbeddingTable table = splits.unseen;
  if (checkpoint) table = embed(io::read_checkpoint(*checkpoint), table);

  std::map<std::string, int> class_index;
  for (std::size_t k = 0; k < table.classes.size(); ++k) class_index[table.classes[k]] = static_cast<int>(k);
  std::map<std::string, int> predicted_by_id;
  for (const auto& rec : io::read_labels_csv(labels_csv)) {
    const auto it = class_index.find(rec.final_label);
    if (it == class_index.end()) {
      throw Error(ErrorCode::kOutOfRangeLabel,
                  "row '" + rec.row_id + "' predicts unknown class '" + rec.final_label + "'");
    }
    predicted_by_id[rec.row_id] = it->second;
  }
  std::vector<int> predicted;
  for (const auto& id : table.ids) {
    const auto it = predicted_by_id.find(id);
    if (it == predicted_by_id.end()) {
      throw Error(ErrorCode::kLengthMismatch, "no prediction for row '" + id + "'");
    }
    predicted.push_back(it->second);
  }
  const EvalReport report =
      evaluate(table.labels, predicted, static_cast<int>(table.classes.size()), table.features);
  io::write_eval_report(out / "eval.json", report, table.classes);
  io::write_confusion_csv(out / "confusion.csv", report.confusion, table.classes);
  return report;
}

RunSummary run_zero_shot(const ExperimentConfig& config) {
  in_stage("config", [&] { config.validate(); });
  RunSummary summary;
  TrainerState state;
  if (config.checkpoint) {
    state = in_stage("load", [&] { return io::read_checkpoint(*config.checkpoint); });
    io::write_checkpoint(config.out / "model.ckpt", state);
    io::write_loss_trace(config.out / "loss_trace.csv", {});
  } else {
    TrainOutcome trained = in_stage("train", [&] { return train(config); });
    state = std::move(trained.state);
    summary.epoch_loss = std::move(trained.epoch_loss);
  }

  const AlignOutcome aligned = in_stage("align", [&] { return align(config, state); });
  const auto k = static_cast<int>(aligned.classes.size());
  const auto& truth = aligned.embedded.labels;

  in_stage("eval", [&] {
    summary.baseline = evaluate(truth, aligned.baseline_labels, k, aligned.embedded.features);
    summary.aligned = evaluate(truth, aligned.aligned.final_labels, k, aligned.embedded.features);
  });
  summary.prototype_report = aligned.aligned.report;

  in_stage("write", [&] {
    write_outputs(config.out / "baseline", aligned.embedded, aligned.classes,
                  aligned.baseline_labels, aligned.baseline_labels, aligned.entropies,
                  summary.baseline);
    write_outputs(config.out / "aligned", aligned.embedded, aligned.classes,
                  aligned.aligned.report.pseudo_labels, aligned.aligned.final_labels,
                  aligned.entropies, summary.aligned);
    io::write_prototype_report(config.out / "aligned" / "prototype_report.txt",
                               aligned.aligned.report, aligned.classes);
  });
  return summary;
}

TheoremReport run_simulation(const TheoremConfig& config, const fs::path& out) {
  TheoremReport report = verify_theorem1(config);
  io::write_theorem_csv(out / "theorem.csv", report);
  return report;
}

double gradient_error(double analytic, double numeric, const GradcheckConfig& config) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric),
                                 config.absolute_floor / config.tolerance});
  return std::abs(analytic - numeric) / scale;
}

GradcheckReport run_gradcheck(const GradcheckConfig& config) {
  std::mt19937_64 rng(config.seed);
  std::map<std::string, GroupError> groups;
  GradcheckReport report;
  bool corrupted = false;
  report.configs = config.configs;

  for (int c = 0; c < config.configs; ++c) {
    RandomProblem p = random_problem(rng, c);
    const ForwardResult fr = forward(p.state, p.batch);
    Gradients analytic = backward(p.state, fr.cache);
    if (config.corrupt) {
      visit_params(p.state, analytic, [&](const std::string& name, Eigen::Index i, double&, double& g) {
        if (name == *config.corrupt && i == 0) {
          g += 1e-3 * (1.0 + std::abs(g));
          corrupted = true;
        }
      });
    }

    TrainerState probe = p.state;
    visit_params(probe, analytic, [&](const std::string& name, Eigen::Index i, double& param, double& g) {
      const double saved = param;
      param = saved + config.step;
      const double up = forward(probe, p.batch).loss;
      param = saved - config.step;
      const double down = forward(probe, p.batch).loss;
      param = saved;
      const double numeric = (up - down) / (2.0 * config.step);
      const double err = gradient_error(g, numeric, config);
      ++report.coordinates;
      auto& group = groups[name];
      group.name = name;
      if (err >= group.max_error) {
        group = GroupError{name, err, c, i, g, numeric};
      }
    });
  }
  if (config.corrupt && !corrupted) {
    throw Error(ErrorCode::kInvalidArgument, "no parameter group named '" + *config.corrupt + "'");
  }

  report.passed = true;
  for (auto& [name, group] : groups) {
    report.groups.push_back(group);
    if (group.max_error >= report.worst.max_error) report.worst = group;
    if (!(group.max_error < config.tolerance)) report.passed = false;
  }
  return report;
}

std::string format_gradcheck(const GradcheckReport& report) {
  std::ostringstream out;
  out << "configs=" << report.configs << " coordinates=" << report.coordinates << '\n';
  out << "group,max_error,config,index,analytic,numeric\n";
  for (const auto& g : report.groups) {
    out << g.name << ',' << io::format17(g.max_error) << ',' << g.config << ',' << g.index << ','
        << io::format17(g.analytic) << ',' << io::format17(g.numeric) << '\n';
  }
  out << "max_error=" << io::format17(report.worst.max_error) << " worst=" << report.worst.name
      << " config=" << report.worst.config << " index=" << report.worst.index << '\n';
  out << (report.passed ? "PASS" : "FAIL") << '\n';
  return out.str();
}

void synthesize(const SynthConfig& config, const fs::path& out) {
  const int total = config.seen_classes + config.unseen_classes;
  const int rank = std::max(1, std::min(config.seen_classes - 1, config.dim - 1));
  if (config.seen_classes < 1 || config.unseen_classes < 2 || config.dim < 2) {
    throw Error(ErrorCode::kInvalidArgument, "synthesize needs >= 1 seen class, >= 2 unseen and dim >= 2");
  }

  std::vector<Vector> means;
  for (int c = 0; c < total; ++c) {
    auto rng = make_stream(config.seed, {2, static_cast<std::uint64_t>(c)});
    Vector attribute = Vector::Zero(config.dim);
    attribute.segment(1, rank) = random_unit(rank, rng);
    Vector mu = std::cos(config.spread) * Vector::Unit(config.dim, 0) + std::sin(config.spread) * attribute;
    means.push_back(mu / mu.norm());
  }
  Mixture mix = make_mixture(
      equal_kappa_mixture(means, config.kappa, config.samples_per_class, config.bias_angle),
      config.seed);

  auto rotation_rng = make_stream(config.seed, {3});
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix gauss(config.dim, config.dim);
  for (Eigen::Index i = 0; i < gauss.size(); ++i) gauss.data()[i] = normal(rotation_rng);
  const Matrix rotation = Eigen::HouseholderQR<Matrix>(gauss).householderQ();
  mix.data.features = mix.data.features * rotation;

  io::SplitManifest manifest;
  std::vector<std::string> names;
  for (int c = 0; c < total; ++c) {
    const bool seen = c < config.seen_classes;
    const std::string name =
        seen ? "seen_" + std::to_string(c) : "unseen_" + std::to_string(c - config.seen_classes);
    names.push_back(name);
    (seen ? manifest.seen : manifest.unseen).push_back(name);
  }

  EmbeddingTable features = mix.data;
  features.classes = names;
  for (std::size_t i = 0; i < features.ids.size(); ++i) {
    features.ids[i] = names[static_cast<std::size_t>(features.labels[i])] + "_" +
                      std::to_string(i % static_cast<std::size_t>(config.samples_per_class));
  }

  EmbeddingTable anchors;
  anchors.features = mix.biased_anchors.anchors;
  anchors.classes = names;
  for (int c = 0; c < total; ++c) {
    anchors.ids.push_back("text_" + names[static_cast<std::size_t>(c)]);
    anchors.labels.push_back(c);
  }

  io::write_embedding_table(out / "features.emb", features);
  io::write_embedding_table(out / "anchors.emb", anchors);
  io::write_manifest(out / "manifest.json", manifest);
}

}  // namespace pgfa::pipeline
