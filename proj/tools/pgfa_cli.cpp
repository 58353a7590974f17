// pgfa: train / align / eval / simulate-vmf / gradcheck / run / synthesize.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include "pgfa/pipeline.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <iostream>

namespace {

namespace fs = std::filesystem;
using pgfa::ErrorCode;

constexpr int kUsageError = 1;
constexpr int kDataError = 2;
constexpr int kNumericalError = 3;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return kUsageError;
    case ErrorCode::kNonFinite:
    case ErrorCode::kSingularScatter:
    case ErrorCode::kStaleCache:
    case ErrorCode::kNonPositiveTemperature:
      return kNumericalError;
    default:
      return kDataError;
  }
}

struct Options {
  std::string features;
  std::string anchors;
  std::string manifest;
  std::string checkpoint;
  std::string labels;
  std::string out = "pgfa_out";
  double alpha = 0.9;
  std::string strategy = "argmax";
  int epochs = 20;
  int batch = 32;
  double lr = 5e-2;
  std::uint64_t seed = 0;
  std::vector<int> hidden{64, 32};
  std::string activation = "relu";

  pgfa::pipeline::ExperimentConfig experiment() const {
    pgfa::pipeline::ExperimentConfig c;
    c.features = features;
    c.anchors = anchors;
    if (!manifest.empty()) c.manifest = manifest;
    if (!checkpoint.empty()) c.checkpoint = checkpoint;
    c.out = out;
    c.encoder_widths = hidden;
    c.activation = pgfa::parse_activation(activation);
    c.fit = pgfa::FitConfig{epochs, batch, lr, seed};
    c.align = pgfa::AlignmentConfig{alpha, pgfa::parse_strategy(strategy)};
    return c;
  }
};

void add_data_flags(CLI::App* cmd, Options& o, bool anchors_required = true) {
  cmd->add_option("--features", o.features, "Embedding table (PGFA-EMB1)")->required();
  auto* anchors = cmd->add_option("--anchors", o.anchors, "Per-class text anchors (PGFA-EMB1)");
  if (anchors_required) anchors->required();
  cmd->add_option("--manifest", o.manifest, "Seen/unseen split manifest (JSON)");
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
}

void add_train_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--epochs", o.epochs)->capture_default_str();
  cmd->add_option("--batch", o.batch)->capture_default_str();
  cmd->add_option("--lr", o.lr)->capture_default_str();
  cmd->add_option("--hidden", o.hidden, "Encoder widths after the input layer")
      ->delimiter(',')
      ->capture_default_str();
  cmd->add_option("--activation", o.activation)
      ->check(CLI::IsMember({"relu", "tanh", "identity"}))
      ->capture_default_str();
}

void add_align_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--alpha", o.alpha, "Tolerance margin in [0,1]")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--strategy", o.strategy)
      ->check(CLI::IsMember({"argmax", "weighted"}))
      ->capture_default_str();
}

void print_eval(const char* name, const pgfa::EvalReport& r) {
  std::cout << name << " accuracy=" << pgfa::io::format17(r.accuracy);
  if (r.fdr) std::cout << " fdr=" << pgfa::io::format17(*r.fdr);
  if (r.silhouette) std::cout << " silhouette=" << pgfa::io::format17(*r.silhouette);
  std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prototype-guided zero-shot alignment on embedding vectors"};
  app.require_subcommand(1);

  Options o;
  app.add_option("--seed", o.seed, "Seed for every random draw")->capture_default_str();

  auto* train = app.add_subcommand("train", "Train the encoder and projection on the seen split");
  add_data_flags(train, o);
  add_train_flags(train, o);

  auto* align = app.add_subcommand("align", "Pseudo-label, build prototypes and reclassify");
  add_data_flags(align, o);
  add_align_flags(align, o);
  align->add_option("--checkpoint", o.checkpoint, "Embed features with this model first");

  auto* eval = app.add_subcommand("eval", "Score a labels CSV against the feature file");
  add_data_flags(eval, o, false);
  eval->add_option("--labels", o.labels, "labels.csv from align or run")->required();
  eval->add_option("--checkpoint", o.checkpoint, "Embed features before FDR / silhouette");

  pgfa::TheoremConfig sim;
  auto* simulate = app.add_subcommand("simulate-vmf", "Monte-Carlo prototype vs Bayes agreement");
  simulate->add_option("--dim", sim.dim)->capture_default_str();
  simulate->add_option("--classes", sim.classes)->capture_default_str();
  simulate->add_option("--kappa", sim.kappa)->capture_default_str();
  simulate->add_option("--n-list", sim.n_list)->delimiter(',')->capture_default_str();
  simulate->add_option("--trials", sim.trials)->capture_default_str();
  simulate->add_option("--eval-per-class", sim.eval_per_class)->capture_default_str();
  simulate->add_option("--out", o.out)->capture_default_str();

  pgfa::pipeline::GradcheckConfig gc;
  std::string corrupt;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the loss gradients");
  gradcheck->add_option("--configs", gc.configs)->capture_default_str();
  gradcheck->add_option("--corrupt", corrupt, "Test hook: perturb one gradient group");

  auto* run = app.add_subcommand("run", "Full pipeline: train, align, evaluate");
  add_data_flags(run, o);
  add_train_flags(run, o);
  add_align_flags(run, o);
  run->add_option("--checkpoint", o.checkpoint, "Skip training and load this model");

  pgfa::pipeline::SynthConfig synth;
  double bias_deg = 25.0;
  double spread_deg = 30.0;
  auto* synthesize = app.add_subcommand("synthesize", "Write a synthetic vMF seen/unseen dataset");
  synthesize->add_option("--dim", synth.dim)->capture_default_str();
  synthesize->add_option("--seen", synth.seen_classes)->capture_default_str();
  synthesize->add_option("--unseen", synth.unseen_classes)->capture_default_str();
  synthesize->add_option("--kappa", synth.kappa)->capture_default_str();
  synthesize->add_option("--per-class", synth.samples_per_class)->capture_default_str();
  synthesize->add_option("--bias-deg", bias_deg)->capture_default_str();
  synthesize->add_option("--spread-deg", spread_deg)->capture_default_str();
  synthesize->add_option("--out", o.out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*train) {
      const auto outcome = pgfa::pipeline::train(o.experiment());
      if (!outcome.epoch_loss.empty()) {
        std::cout << "epochs=" << outcome.epoch_loss.size()
                  << " first_loss=" << pgfa::io::format17(outcome.epoch_loss.front())
                  << " last_loss=" << pgfa::io::format17(outcome.epoch_loss.back()) << '\n';
      }
    } else if (*align) {
      const auto config = o.experiment();
      std::optional<pgfa::TrainerState> state;
      if (config.checkpoint) state = pgfa::io::read_checkpoint(*config.checkpoint);
      const auto outcome = pgfa::pipeline::align(config, state);
      const fs::path out = config.out;
      pgfa::io::write_labels_csv(
          out / "labels.csv",
          pgfa::io::label_records(outcome.embedded, outcome.classes,
                                  outcome.aligned.report.pseudo_labels,
                                  outcome.aligned.final_labels, outcome.entropies));
      pgfa::io::write_prototype_report(out / "prototype_report.txt", outcome.aligned.report,
                                       outcome.classes);
    } else if (*eval) {
      std::optional<fs::path> manifest;
      std::optional<fs::path> checkpoint;
      if (!o.manifest.empty()) manifest = o.manifest;
      if (!o.checkpoint.empty()) checkpoint = o.checkpoint;
      print_eval("eval", pgfa::pipeline::eval(o.features, o.labels, manifest, checkpoint, o.out));
    } else if (*simulate) {
      sim.seed = o.seed;
      const auto report = pgfa::pipeline::run_simulation(sim, o.out);
      const auto agreement = report.mean_agreement(sim.n_list);
      for (std::size_t i = 0; i < sim.n_list.size(); ++i) {
        std::cout << "n=" << sim.n_list[i] << " mean_agreement=" << pgfa::io::format17(agreement[i])
                  << '\n';
      }
    } else if (*gradcheck) {
      gc.seed = o.seed;
      if (!corrupt.empty()) gc.corrupt = corrupt;
      const auto report = pgfa::pipeline::run_gradcheck(gc);
      std::cout << pgfa::pipeline::format_gradcheck(report);
      return report.passed ? 0 : kNumericalError;
    } else if (*run) {
      const auto summary = pgfa::pipeline::run_zero_shot(o.experiment());
      print_eval("baseline", summary.baseline);
      print_eval("aligned", summary.aligned);
    } else if (*synthesize) {
      synth.seed = o.seed;
      synth.bias_angle = bias_deg * M_PI / 180.0;
      synth.spread = spread_deg * M_PI / 180.0;
      pgfa::pipeline::synthesize(synth, o.out);
    }
  } catch (const pgfa::Error& e) {
    std::cerr << "pgfa " << (app.get_subcommands().empty() ? "" : app.get_subcommands()[0]->get_name())
              << ": " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "pgfa: " << e.what() << '\n';
    return kDataError;
  }
  return 0;
}
