#include "pgfa/pipeline.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace pgfa;

namespace {

EmbeddingTable table_from(const Matrix& features, const std::vector<int>& labels) {
  return EmbeddingTable::from_matrix(features, labels);
}

AnchorSet anchor_set(const Matrix& anchors, std::optional<std::vector<int>> class_ids) {
  AnchorSet a;
  a.anchors = anchors;
  if (class_ids) {
    a.class_ids = *class_ids;
  } else {
    for (Eigen::Index k = 0; k < anchors.rows(); ++k) a.class_ids.push_back(static_cast<int>(k));
  }
  return a;
}

py::dict report_dict(const PrototypeReport& r) {
  py::dict d;
  d["alpha"] = r.config.alpha;
  d["strategy"] = to_string(r.config.strategy);
  d["class_ids"] = r.class_ids;
  d["support_sizes"] = r.support_sizes;
  d["filtered_sizes"] = r.filtered_sizes;
  d["used_fallback"] = r.used_fallback;
  d["pseudo_labels"] = r.pseudo_labels;
  d["final_labels"] = r.final_labels;
  d["entropies"] = r.entropies;
  return d;
}

py::dict eval_dict(const EvalReport& r) {
  py::dict d;
  d["accuracy"] = r.accuracy;
  d["per_class"] = r.per_class;
  d["confusion"] = Eigen::MatrixXi(r.confusion.counts);
  d["fdr"] = r.fdr;
  d["silhouette"] = r.silhouette;
  d["ridge_lambda"] = r.ridge_lambda;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Prototype-guided zero-shot alignment on embedding vectors";

  static py::exception<Error> error(m, "PgfaError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetObject(error.ptr(), py::make_tuple(e.what(), to_string(e.code())).ptr());
    }
  });

  // primitives
  m.def("l2_normalize", [](const Vector& v) { return l2_normalize(v); }, py::arg("v"));
  m.def("cosine_sim", &cosine_sim, py::arg("a"), py::arg("b"));
  m.def("softmax", &softmax, py::arg("scores"), py::arg("temperature") = 1.0);
  m.def("shannon_entropy", &shannon_entropy, py::arg("p"));
  m.def("kl_divergence", &kl_divergence, py::arg("target"), py::arg("pred"));
  m.def("similarity_matrix", &similarity_matrix, py::arg("x"), py::arg("y"));

  // trainer
  py::enum_<Activation>(m, "Activation")
      .value("relu", Activation::kRelu)
      .value("tanh", Activation::kTanh)
      .value("identity", Activation::kIdentity);

  py::class_<TrainerState>(m, "TrainerState")
      .def_static(
          "initialize",
          [](std::vector<int> widths, Activation act, int text_dim, std::uint64_t seed) {
            return TrainerState::initialize(EncoderSpec{std::move(widths), act}, text_dim, seed);
          },
          py::arg("layer_widths"), py::arg("activation") = Activation::kRelu, py::arg("text_dim"),
          py::arg("seed") = 0)
      .def_property_readonly("tau", &TrainerState::tau)
      .def_property_readonly("text_dim", &TrainerState::text_dim)
      .def_property_readonly("layer_widths", [](const TrainerState& s) { return s.spec.layer_widths; })
      .def_readwrite("log_tau", &TrainerState::log_tau)
      .def("fingerprint", &TrainerState::fingerprint)
      .def("save", [](const TrainerState& s, const std::filesystem::path& p) { io::write_checkpoint(p, s); })
      .def_static("load", [](const std::filesystem::path& p) { return io::read_checkpoint(p); })
      .def("__eq__", &TrainerState::operator==);

  m.def("build_target_matrix", &build_target_matrix, py::arg("labels"));
  m.def(
      "contrastive_loss",
      [](const TrainerState& s, const Matrix& skeleton, const Matrix& text, std::vector<int> labels) {
        return forward(s, Batch{skeleton, text, std::move(labels)}).loss;
      },
      py::arg("state"), py::arg("skeleton"), py::arg("text"), py::arg("labels"));
  m.def(
      "fit",
      [](const TrainerState& init, const Matrix& skeleton, const Matrix& text,
         const std::vector<int>& labels, int epochs, int batch_size, double lr, std::uint64_t seed) {
        FitResult r = fit(init, table_from(skeleton, labels), table_from(text, labels),
                          FitConfig{epochs, batch_size, lr, seed});
        return py::make_tuple(r.state, r.epoch_loss);
      },
      py::arg("state"), py::arg("skeleton"), py::arg("text"), py::arg("labels"), py::arg("epochs") = 20,
      py::arg("batch_size") = 32, py::arg("lr") = 5e-2, py::arg("seed") = 0);
  m.def(
      "embed",
      [](const TrainerState& s, const Matrix& x) {
        return embed(s, table_from(x, std::vector<int>(static_cast<std::size_t>(x.rows()), 0))).features;
      },
      py::arg("state"), py::arg("features"));

  // alignment
  m.def(
      "classify_with_anchors",
      [](const Matrix& features, const Matrix& anchors, std::optional<std::vector<int>> ids) {
        const PseudoLabeledSet pl = classify_with_anchors(features, anchor_set(anchors, std::move(ids)));
        py::dict d;
        d["pseudo_labels"] = pl.pseudo_labels;
        d["probs"] = pl.probs;
        d["entropies"] = pl.entropies;
        return d;
      },
      py::arg("features"), py::arg("anchors"), py::arg("class_ids") = py::none());
  m.def(
      "align_and_classify",
      [](const Matrix& features, const Matrix& anchors, double alpha, const std::string& strategy,
         std::optional<std::vector<int>> ids) {
        const AlignmentResult r = align_and_classify(features, anchor_set(anchors, std::move(ids)),
                                                     AlignmentConfig{alpha, parse_strategy(strategy)});
        py::dict d = report_dict(r.report);
        d["prototypes"] = r.prototypes.anchors;
        return d;
      },
      py::arg("features"), py::arg("anchors"), py::arg("alpha") = 0.9, py::arg("strategy") = "argmax",
      py::arg("class_ids") = py::none());
  m.def(
      "prototypes_from_exemplars",
      [](const Matrix& features, const std::vector<int>& labels) {
        return prototypes_from_exemplars(table_from(features, labels)).anchors;
      },
      py::arg("features"), py::arg("labels"));

  // vMF lab
  m.def(
      "sample_vmf",
      [](const Vector& mu, double kappa, Eigen::Index n, std::uint64_t seed) {
        return sample_vmf(VmfParams{mu, kappa}, n, seed).features;
      },
      py::arg("mu"), py::arg("kappa"), py::arg("n"), py::arg("seed") = 0);
  m.def("a_d", &a_d, py::arg("kappa"), py::arg("d"));
  m.def(
      "make_mixture",
      [](const std::vector<Vector>& means, double kappa, Eigen::Index n, double bias, std::uint64_t seed) {
        const Mixture mix = make_mixture(equal_kappa_mixture(means, kappa, n, bias), seed);
        py::dict d;
        d["features"] = mix.data.features;
        d["labels"] = mix.data.labels;
        d["true_anchors"] = mix.true_anchors.anchors;
        d["biased_anchors"] = mix.biased_anchors.anchors;
        return d;
      },
      py::arg("means"), py::arg("kappa"), py::arg("samples_per_class"), py::arg("bias_angle"),
      py::arg("seed") = 0);
  m.def("clustered_means", &clustered_means, py::arg("d"), py::arg("k"), py::arg("spread"));
  m.def(
      "verify_theorem1",
      [](int dim, int classes, double kappa, std::vector<Eigen::Index> n_list, int trials,
         Eigen::Index eval_per_class, std::uint64_t seed) {
        TheoremConfig cfg{dim, classes, kappa, n_list, trials, eval_per_class, seed};
        const TheoremReport r = verify_theorem1(cfg);
        py::list rows;
        for (const auto& row : r.rows) {
          py::dict d;
          d["n"] = row.n;
          d["trial"] = row.trial;
          d["agreement"] = row.agreement;
          d["mean_resultant_length"] = row.mean_resultant_length;
          d["a_d_reference"] = row.a_d_reference;
          rows.append(d);
        }
        return rows;
      },
      py::arg("dim") = 16, py::arg("classes") = 5, py::arg("kappa") = 20.0,
      py::arg("n_list") = std::vector<Eigen::Index>{10, 100, 1000, 10000}, py::arg("trials") = 20,
      py::arg("eval_per_class") = 1000, py::arg("seed") = 0);

  // metrics
  m.def("accuracy", &accuracy, py::arg("truth"), py::arg("predicted"));
  m.def(
      "confusion",
      [](const std::vector<int>& t, const std::vector<int>& p, int k) {
        return Eigen::MatrixXi(confusion(t, p, k).counts);
      },
      py::arg("truth"), py::arg("predicted"), py::arg("k"));
  m.def(
      "fisher_discrimination_ratio",
      [](const Matrix& x, const std::vector<int>& labels) {
        return fisher_discrimination_ratio(x, labels).fdr;
      },
      py::arg("features"), py::arg("labels"));
  m.def("silhouette_cosine", &silhouette_cosine, py::arg("features"), py::arg("labels"));
  m.def(
      "evaluate",
      [](const std::vector<int>& t, const std::vector<int>& p, int k, const Matrix& x) {
        return eval_dict(evaluate(t, p, k, x));
      },
      py::arg("truth"), py::arg("predicted"), py::arg("k"), py::arg("features") = Matrix());

  // pipeline
  m.def(
      "gradcheck",
      [](int configs, std::uint64_t seed, std::optional<std::string> corrupt) {
        pipeline::GradcheckConfig cfg;
        cfg.configs = configs;
        cfg.seed = seed;
        cfg.corrupt = std::move(corrupt);
        const auto r = pipeline::run_gradcheck(cfg);
        py::dict d;
        d["passed"] = r.passed;
        d["max_error"] = r.worst.max_error;
        d["worst"] = r.worst.name;
        py::dict groups;
        for (const auto& g : r.groups) groups[py::str(g.name)] = g.max_error;
        d["groups"] = groups;
        return d;
      },
      py::arg("configs") = 20, py::arg("seed") = 0, py::arg("corrupt") = py::none());
}
