#include "pgfa/vmf.hpp"

#include <cmath>
#include <limits>

namespace pgfa {

void VmfParams::validate() const {
  if (mu.size() < 2) {
    throw Error(ErrorCode::kBadDimension, "vMF needs d >= 2, got " + std::to_string(mu.size()));
  }
  if (std::abs(mu.norm() - 1.0) > 1e-12) {
    throw Error(ErrorCode::kInvalidArgument, "vMF mean direction must be unit norm");
  }
  if (!std::isfinite(kappa) || kappa < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "kappa must be finite and >= 0");
  }
}

std::mt19937_64 make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
  std::vector<std::uint32_t> words;
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto s : stream) push(s);
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

Vector random_unit(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(d);
  do {
    for (int i = 0; i < d; ++i) v[i] = normal(rng);
  } while (!(v.norm() > kNormEpsilon));
  return v / v.norm();
}

Vector random_orthogonal(const Vector& mu, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(mu.size());
  for (;;) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
    v -= mu.dot(v) * mu;
    const double norm = v.norm();
    if (norm > 1e-8) return v / norm;
  }
}

Matrix sample_vmf(const VmfParams& params, Eigen::Index n, std::mt19937_64& rng) {
  params.validate();
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "sample count must be >= 1");
  const auto d = static_cast<int>(params.mu.size());
  const double kappa = params.kappa;
  const double dm1 = d - 1.0;

  const double b = dm1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + dm1 * dm1));
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + dm1 * std::log(1.0 - x0 * x0);

  std::gamma_distribution<double> gamma(dm1 / 2.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  Matrix out(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    double w = 0.0;
    for (;;) {
      const double g1 = gamma(rng);
      const double g2 = gamma(rng);
      const double z = g1 / (g1 + g2);
      w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
      const double u = uniform(rng);
      if (kappa * w + dm1 * std::log(1.0 - x0 * w) - c >= std::log(u)) break;
    }
    const Vector tangent = random_orthogonal(params.mu, rng);
    const double s = std::sqrt(std::max(0.0, 1.0 - w * w));
    Vector v = w * params.mu + s * tangent;
    out.row(r) = (v / v.norm()).transpose();
  }
  return out;
}

EmbeddingTable sample_vmf(const VmfParams& params, Eigen::Index n, std::uint64_t seed) {
  auto rng = make_stream(seed, {});
  Matrix rows = sample_vmf(params, n, rng);
  return EmbeddingTable::from_matrix(std::move(rows),
                                     std::vector<int>(static_cast<std::size_t>(n), 0));
}

double a_d(double kappa, int d) {
  if (d < 2) throw Error(ErrorCode::kBadDimension, "a_d needs d >= 2");
  if (!(kappa >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "kappa must be >= 0");
  const double nu = d / 2.0;
  if (kappa < 1e-6) {
    // I_nu / I_{nu-1} ~ x / (2 nu) (1 - x^2 / (2 nu (2 nu + 2)))
    return kappa / (2.0 * nu) * (1.0 - kappa * kappa / (2.0 * nu * (2.0 * nu + 2.0)));
  }
  // Modified Lentz on 1 / (b0 + 1 / (b1 + 1 / (b2 + ...))), b_j = 2 (nu + j) / kappa.
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-12;
  double f = 2.0 * nu / kappa;
  double c = f;
  double dd = 0.0;
  for (int j = 1; j < 10'000'000; ++j) {
    const double bj = 2.0 * (nu + j) / kappa;
    dd = bj + dd;
    if (dd == 0.0) dd = tiny;
    c = bj + 1.0 / c;
    if (c == 0.0) c = tiny;
    dd = 1.0 / dd;
    const double delta = c * dd;
    f *= delta;
    if (std::abs(delta - 1.0) < eps) break;
  }
  return 1.0 / f;
}

void MixtureSpec::validate() const {
  if (components.size() < 2) throw Error(ErrorCode::kInvalidArgument, "mixture needs K >= 2");
  if (samples_per_class < 1) throw Error(ErrorCode::kInvalidArgument, "mixture needs n >= 1");
  if (!(anchor_bias_angle >= 0.0 && anchor_bias_angle <= M_PI)) {
    throw Error(ErrorCode::kInvalidArgument, "bias angle must lie in [0, pi]");
  }
  const auto d = components.front().params.mu.size();
  for (const auto& c : components) {
    c.params.validate();
    if (c.params.mu.size() != d) {
      throw Error(ErrorCode::kDimensionMismatch, "mixture components differ in dimension");
    }
  }
}

Mixture make_mixture(const MixtureSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto k = static_cast<Eigen::Index>(spec.components.size());
  const auto d = spec.components.front().params.mu.size();
  const auto n = spec.samples_per_class;

  Mixture mix;
  mix.data.features.resize(k * n, d);
  mix.true_anchors.anchors.resize(k, d);
  mix.true_anchors.kind = AnchorKind::kText;
  mix.biased_anchors.anchors.resize(k, d);
  mix.biased_anchors.kind = AnchorKind::kText;

  for (Eigen::Index c = 0; c < k; ++c) {
    const auto& comp = spec.components[static_cast<std::size_t>(c)];
    mix.data.classes.push_back("c" + std::to_string(comp.class_id));
    auto sample_rng = make_stream(seed, {0, static_cast<std::uint64_t>(c)});
    mix.data.features.middleRows(c * n, n) = sample_vmf(comp.params, n, sample_rng);
    for (Eigen::Index i = 0; i < n; ++i) {
      mix.data.ids.push_back("c" + std::to_string(comp.class_id) + "_" + std::to_string(i));
      mix.data.labels.push_back(static_cast<int>(c));
    }

    auto plane_rng = make_stream(seed, {1, static_cast<std::uint64_t>(c)});
    const Vector u = random_orthogonal(comp.params.mu, plane_rng);
    const double theta = spec.anchor_bias_angle;
    mix.true_anchors.anchors.row(c) = comp.params.mu.transpose();
    const Vector biased =
        theta == 0.0 ? comp.params.mu : Vector(std::cos(theta) * comp.params.mu + std::sin(theta) * u);
    mix.biased_anchors.anchors.row(c) = biased.transpose();
    mix.true_anchors.class_ids.push_back(static_cast<int>(c));
    mix.biased_anchors.class_ids.push_back(static_cast<int>(c));
  }
  return mix;
}

std::vector<Vector> clustered_means(int d, int k, double spread) {
  if (d < k + 1) {
    throw Error(ErrorCode::kBadDimension, "clustered means need d >= K + 1");
  }
  std::vector<Vector> means;
  for (int c = 0; c < k; ++c) {
    Vector mu = Vector::Zero(d);
    mu[0] = std::cos(spread);
    mu[c + 1] = std::sin(spread);
    means.push_back(mu / mu.norm());
  }
  return means;
}

std::vector<Vector> random_means(int d, int k, std::mt19937_64& rng) {
  std::vector<Vector> means;
  for (int c = 0; c < k; ++c) means.push_back(random_unit(d, rng));
  return means;
}

MixtureSpec equal_kappa_mixture(const std::vector<Vector>& means, double kappa,
                                Eigen::Index samples_per_class, double bias_angle) {
  MixtureSpec spec;
  for (std::size_t c = 0; c < means.size(); ++c) {
    spec.components.push_back(MixtureComponent{VmfParams{means[c], kappa}, static_cast<int>(c)});
  }
  spec.samples_per_class = samples_per_class;
  spec.anchor_bias_angle = bias_angle;
  return spec;
}

namespace {

std::vector<double> average_by_n(const TheoremReport& report,
                                 const std::vector<Eigen::Index>& n_list,
                                 double TheoremRow::*field) {
  std::vector<double> out;
  for (auto n : n_list) {
    double sum = 0.0;
    int count = 0;
    for (const auto& row : report.rows) {
      if (row.n == n) {
        sum += row.*field;
        ++count;
      }
    }
    out.push_back(count ? sum / count : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

}  // namespace

std::vector<double> TheoremReport::mean_agreement(const std::vector<Eigen::Index>& n_list) const {
  return average_by_n(*this, n_list, &TheoremRow::agreement);
}

std::vector<double> TheoremReport::mean_resultant(const std::vector<Eigen::Index>& n_list) const {
  return average_by_n(*this, n_list, &TheoremRow::mean_resultant_length);
}

TheoremReport verify_theorem1(const TheoremConfig& config) {
  if (config.classes < 2) throw Error(ErrorCode::kInvalidArgument, "need K >= 2");
  if (!(config.kappa > 0.0)) throw Error(ErrorCode::kInvalidArgument, "need kappa > 0");
  if (config.dim < 2) throw Error(ErrorCode::kBadDimension, "need d >= 2");
  if (config.trials < 1 || config.eval_per_class < 1) {
    throw Error(ErrorCode::kInvalidArgument, "need trials >= 1 and eval_per_class >= 1");
  }
  for (auto n : config.n_list) {
    if (n < 1) throw Error(ErrorCode::kInvalidArgument, "every n must be >= 1");
  }

  const double reference = a_d(config.kappa, config.dim);
  const auto k = config.classes;
  TheoremReport report;
  for (int trial = 0; trial < config.trials; ++trial) {
    const auto t = static_cast<std::uint64_t>(trial);
    auto mean_rng = make_stream(config.seed, {0, t});
    const auto means = random_means(config.dim, k, mean_rng);

    Matrix true_means(k, config.dim);
    for (int c = 0; c < k; ++c) true_means.row(c) = means[static_cast<std::size_t>(c)].transpose();

    Matrix held_out(k * config.eval_per_class, config.dim);
    for (int c = 0; c < k; ++c) {
      auto rng = make_stream(config.seed, {1, t, static_cast<std::uint64_t>(c)});
      held_out.middleRows(c * config.eval_per_class, config.eval_per_class) =
          sample_vmf(VmfParams{means[static_cast<std::size_t>(c)], config.kappa},
                     config.eval_per_class, rng);
    }
    const Matrix bayes_scores = held_out * true_means.transpose();

    for (auto n : config.n_list) {
      Matrix prototypes(k, config.dim);
      double resultant = 0.0;
      for (int c = 0; c < k; ++c) {
        auto rng = make_stream(config.seed,
                               {2, t, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(n)});
        const Matrix s = sample_vmf(VmfParams{means[static_cast<std::size_t>(c)], config.kappa}, n, rng);
        const Vector centroid = s.colwise().mean().transpose();
        resultant += centroid.norm();
        prototypes.row(c) = l2_normalize(centroid).transpose();
      }
      const Matrix proto_scores = held_out * prototypes.transpose();
      Eigen::Index agree = 0;
      for (Eigen::Index i = 0; i < held_out.rows(); ++i) {
        agree += argmax(proto_scores.row(i).transpose()) == argmax(bayes_scores.row(i).transpose());
      }
      report.rows.push_back(TheoremRow{n, trial,
                                       static_cast<double>(agree) / static_cast<double>(held_out.rows()),
                                       resultant / k, reference});
    }
  }
  return report;
}

}  // namespace pgfa
