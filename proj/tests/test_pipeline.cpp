#include "doctest.h"
#include "support.hpp"

#include "pgfa/pipeline.hpp"

#include <cstdlib>
#include <map>
#include <sys/wait.h>

using namespace pgfa;
using namespace pgfa::testing;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return files;
}

pipeline::SynthConfig small_synth(std::uint64_t seed) {
  pipeline::SynthConfig s;
  s.dim = 12;
  s.seen_classes = 4;
  s.unseen_classes = 3;
  s.samples_per_class = 40;
  s.seed = seed;
  return s;
}

pipeline::ExperimentConfig experiment(const fs::path& data, const fs::path& out, double alpha) {
  pipeline::ExperimentConfig c;
  c.features = data / "features.emb";
  c.anchors = data / "anchors.emb";
  c.manifest = data / "manifest.json";
  c.out = out;
  c.encoder_widths = {16, 12};
  c.fit = FitConfig{4, 16, 5e-2, 3};
  c.align = AlignmentConfig{alpha};
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PGFA_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("synthesize writes a consistent dataset") {
  const auto dir = scratch_dir("pl_synth");
  pipeline::synthesize(small_synth(1), dir);
  const auto table = io::read_embedding_table(dir / "features.emb");
  const auto anchors = io::read_embedding_table(dir / "anchors.emb");
  const auto manifest = io::read_manifest(dir / "manifest.json");
  CHECK(table.rows() == 7 * 40);
  CHECK(anchors.rows() == 7);
  CHECK(manifest.seen.size() == 4);
  CHECK(manifest.unseen.size() == 3);
  const auto [seen, unseen] = io::apply_split(table, manifest);
  CHECK(seen.rows() == 160);
  CHECK(unseen.rows() == 120);

  const auto again = scratch_dir("pl_synth2");
  pipeline::synthesize(small_synth(1), again);
  CHECK(snapshot(dir) == snapshot(again));
}

TEST_CASE("run_zero_shot") {
  const auto data = scratch_dir("pl_data");
  pipeline::synthesize(small_synth(2), data);

  SUBCASE("writes every artifact, byte-identically on rerun") {
    const auto a = scratch_dir("pl_run_a");
    const auto b = scratch_dir("pl_run_b");
    const auto summary = pipeline::run_zero_shot(experiment(data, a, 0.9));
    pipeline::run_zero_shot(experiment(data, b, 0.9));
    const auto files = snapshot(a);
    for (const char* f : {"model.ckpt", "loss_trace.csv", "baseline/labels.csv", "baseline/eval.json",
                          "baseline/confusion.csv", "aligned/labels.csv", "aligned/eval.json",
                          "aligned/confusion.csv", "aligned/prototype_report.txt"}) {
      CHECK_MESSAGE(files.count(f) == 1, f);
    }
    CHECK(files == snapshot(b));
    CHECK(summary.epoch_loss.size() == 4);
    CHECK(io::read_labels_csv(a / "aligned" / "labels.csv").size() == 120);
  }

  SUBCASE("alpha = 0 reproduces the baseline labels") {
    const auto out = scratch_dir("pl_alpha0");
    const auto summary = pipeline::run_zero_shot(experiment(data, out, 0.0));
    CHECK(slurp(out / "aligned" / "labels.csv") == slurp(out / "baseline" / "labels.csv"));
    CHECK(summary.aligned.accuracy == summary.baseline.accuracy);
    for (std::size_t f : summary.prototype_report.filtered_sizes) CHECK(f == 0);
  }

  SUBCASE("alpha = 1 keeps every support member") {
    const auto out = scratch_dir("pl_alpha1");
    const auto summary = pipeline::run_zero_shot(experiment(data, out, 1.0));
    CHECK(summary.prototype_report.filtered_sizes == summary.prototype_report.support_sizes);
  }

  SUBCASE("checkpoint reuse skips training") {
    const auto first = scratch_dir("pl_ckpt_a");
    pipeline::run_zero_shot(experiment(data, first, 0.9));
    auto cfg = experiment(data, scratch_dir("pl_ckpt_b"), 0.9);
    cfg.checkpoint = first / "model.ckpt";
    const auto summary = pipeline::run_zero_shot(cfg);
    CHECK(summary.epoch_loss.empty());
    CHECK(slurp(cfg.out / "aligned" / "labels.csv") == slurp(first / "aligned" / "labels.csv"));
  }

  SUBCASE("eval rescoring matches the run") {
    const auto out = scratch_dir("pl_eval");
    const auto summary = pipeline::run_zero_shot(experiment(data, out, 0.9));
    const auto rescored = pipeline::eval(data / "features.emb", out / "aligned" / "labels.csv",
                                         data / "manifest.json", out / "model.ckpt", out / "rescore");
    CHECK(rescored.accuracy == summary.aligned.accuracy);
    CHECK(slurp(out / "rescore" / "eval.json") == slurp(out / "aligned" / "eval.json"));
  }

  SUBCASE("stage-tagged errors") {
    auto cfg = experiment(data, scratch_dir("pl_err"), 0.9);
    cfg.features = data / "missing.emb";
    try {
      pipeline::run_zero_shot(cfg);
      FAIL("expected failure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInvalidArgument);
      CHECK(std::string(e.what()).find("[config]") != std::string::npos);
    }
    spit(cfg.out / "bad.emb", "PGFA-EMB1 d=12 n=1\nx,seen_0,1\n");
    cfg.features = cfg.out / "bad.emb";
    try {
      pipeline::run_zero_shot(cfg);
      FAIL("expected failure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kParseError);
      CHECK(std::string(e.what()).find("[train]") != std::string::npos);
    }
  }
}

TEST_CASE("aligned accuracy is at least the baseline on synthetic biased anchors") {
  double baseline = 0, aligned = 0;
  const int seeds = 4;
  for (int seed = 0; seed < seeds; ++seed) {
    const auto data = scratch_dir("pl_bias_data");
    pipeline::SynthConfig synth;
    synth.seed = static_cast<std::uint64_t>(seed);
    pipeline::synthesize(synth, data);
    auto cfg = experiment(data, scratch_dir("pl_bias_run"), 0.9);
    cfg.encoder_widths = {64, 32};
    cfg.fit = FitConfig{20, 32, 5e-3, static_cast<std::uint64_t>(seed)};
    const auto summary = pipeline::run_zero_shot(cfg);
    CHECK(summary.baseline.accuracy > 0.3);
    baseline += summary.baseline.accuracy / seeds;
    aligned += summary.aligned.accuracy / seeds;
  }
  CHECK(aligned >= baseline);
}

TEST_CASE("run_simulation writes the theorem CSV") {
  TheoremConfig cfg;
  cfg.dim = 6;
  cfg.classes = 3;
  cfg.n_list = {5, 50};
  cfg.trials = 3;
  cfg.eval_per_class = 50;
  const auto a = scratch_dir("pl_sim_a");
  const auto b = scratch_dir("pl_sim_b");
  pipeline::run_simulation(cfg, a);
  cfg.seed = 99;
  pipeline::run_simulation(cfg, b);
  const auto text = slurp(a / "theorem.csv");
  CHECK(text.rfind("n,trial,agreement,mean_resultant_length,a_d_reference\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 6);
  const auto other = slurp(b / "theorem.csv");
  CHECK(other != text);
  CHECK(other.substr(0, other.find('\n')) == text.substr(0, text.find('\n')));
}

TEST_CASE("gradcheck harness") {
  pipeline::GradcheckConfig cfg;
  const auto report = pipeline::run_gradcheck(cfg);
  CHECK(report.passed);
  CHECK(report.configs == 20);
  CHECK(report.worst.max_error < 1e-5);
  CHECK(std::is_sorted(report.groups.begin(), report.groups.end(),
                       [](const auto& a, const auto& b) { return a.name < b.name; }));
  CHECK(pipeline::format_gradcheck(report).find("PASS") != std::string::npos);

  cfg.corrupt = "projection.bias";
  const auto broken = pipeline::run_gradcheck(cfg);
  CHECK_FALSE(broken.passed);
  CHECK(broken.worst.name == "projection.bias");
  CHECK(pipeline::format_gradcheck(broken).find("worst=projection.bias") != std::string::npos);

  cfg.corrupt = "no.such.tensor";
  CHECK(error_code_of([&] { pipeline::run_gradcheck(cfg); }) == ErrorCode::kInvalidArgument);

  CHECK(pipeline::gradient_error(1e-12, 3e-12, pipeline::GradcheckConfig{}) < 1e-5);
  CHECK(pipeline::gradient_error(1.0, 1.0 + 1e-4, pipeline::GradcheckConfig{}) > 1e-5);
}

TEST_CASE("command line") {
  const auto data = scratch_dir("cli_data");
  const auto d = data.string();
  CHECK(run_cli("--seed 4 synthesize --dim 10 --seen 3 --unseen 3 --per-class 20 --out " + d) == 0);

  const std::string inputs = " --features " + d + "/features.emb --anchors " + d +
                             "/anchors.emb --manifest " + d + "/manifest.json";
  const auto out_a = scratch_dir("cli_run_a").string();
  const auto out_b = scratch_dir("cli_run_b").string();
  CHECK(run_cli("--seed 5 run --epochs 3 --hidden 8" + inputs + " --out " + out_a) == 0);
  CHECK(run_cli("--seed 5 run --epochs 3 --hidden 8" + inputs + " --out " + out_b) == 0);
  CHECK(snapshot(out_a) == snapshot(out_b));

  const auto staged = scratch_dir("cli_staged").string();
  CHECK(run_cli("--seed 5 train --epochs 3 --hidden 8" + inputs + " --out " + staged) == 0);
  CHECK(slurp(staged + "/model.ckpt") == slurp(out_a + "/model.ckpt"));
  CHECK(run_cli("align" + inputs + " --checkpoint " + staged + "/model.ckpt --out " + staged) == 0);
  CHECK(slurp(staged + "/labels.csv") == slurp(out_a + "/aligned/labels.csv"));
  CHECK(run_cli("eval --features " + d + "/features.emb --manifest " + d + "/manifest.json --labels " +
                staged + "/labels.csv --checkpoint " + staged + "/model.ckpt --out " + staged) == 0);
  CHECK(slurp(staged + "/eval.json") == slurp(out_a + "/aligned/eval.json"));

  const auto a0 = scratch_dir("cli_alpha0").string();
  CHECK(run_cli("--seed 5 run --epochs 3 --hidden 8 --alpha 0" + inputs + " --out " + a0) == 0);
  CHECK(slurp(a0 + "/aligned/labels.csv") == slurp(a0 + "/baseline/labels.csv"));

  const auto sim = scratch_dir("cli_sim").string();
  CHECK(run_cli("simulate-vmf --dim 5 --classes 3 --n-list 5,10 --trials 2 --eval-per-class 20 --out " +
                sim) == 0);
  CHECK(slurp(sim + "/theorem.csv").rfind("n,trial,agreement", 0) == 0);

  SUBCASE("exit codes") {
    CHECK(run_cli("") == 1);
    CHECK(run_cli("run --features") == 1);
    CHECK(run_cli("align --alpha 2" + inputs) == 1);
    CHECK(run_cli("bogus") == 1);
    CHECK(run_cli("run" + inputs + " --features " + d + "/nope.emb --out " + out_a) == 1);
    spit(data / "broken.emb", "PGFA-EMB1 d=10 n=2\na,b,1\n");
    CHECK(run_cli("align --features " + d + "/broken.emb --anchors " + d + "/anchors.emb") == 2);
    CHECK(run_cli("gradcheck --configs 3") == 0);
    CHECK(run_cli("gradcheck --configs 3 --corrupt log_tau") == 3);
    CHECK(run_cli("gradcheck --corrupt nothing") == 1);
  }
}
