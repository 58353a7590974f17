#pragma once

#include "pgfa/alignment.hpp"
#include "pgfa/core.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace pgfa {

/// von Mises-Fisher parameters: unit mean direction and concentration.
struct VmfParams {
  Vector mu;
  double kappa = 0.0;

  void validate() const;
};

/// Independent engine for a (seed, stream...) tuple. Every random draw in the
/// lab goes through one of these, so results do not depend on call order
/// across classes or trials.
std::mt19937_64 make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);

/// Wood's rejection sampler. Rows are unit vectors; kappa = 0 gives the
/// uniform distribution on the sphere.
Matrix sample_vmf(const VmfParams& params, Eigen::Index n, std::mt19937_64& rng);
EmbeddingTable sample_vmf(const VmfParams& params, Eigen::Index n, std::uint64_t seed);

/// Uniform direction on S^{d-1}.
Vector random_unit(int d, std::mt19937_64& rng);

/// Uniform unit vector orthogonal to unit vector `mu`.
Vector random_orthogonal(const Vector& mu, std::mt19937_64& rng);

/// Mean resultant length A_d(kappa) = I_{d/2}(kappa) / I_{d/2-1}(kappa).
double a_d(double kappa, int d);

struct MixtureComponent {
  VmfParams params;
  int class_id = 0;
};

struct MixtureSpec {
  std::vector<MixtureComponent> components;
  Eigen::Index samples_per_class = 1;
  double anchor_bias_angle = 0.0;  // radians

  void validate() const;
};

struct Mixture {
  EmbeddingTable data;
  AnchorSet true_anchors;
  AnchorSet biased_anchors;
};

/// Samples every component and fabricates misaligned text anchors by
/// rotating each mean by the bias angle inside a seeded random 2-plane that
/// contains it.
Mixture make_mixture(const MixtureSpec& spec, std::uint64_t seed);

/// Means mu_k = cos(spread) e_0 + sin(spread) e_{k+1}; pairwise cosine is
/// cos^2(spread). Needs d >= K + 1.
std::vector<Vector> clustered_means(int d, int k, double spread);

/// K means drawn uniformly from the sphere.
std::vector<Vector> random_means(int d, int k, std::mt19937_64& rng);

/// Mixture with equal kappa over `means`, class ids 0..K-1.
MixtureSpec equal_kappa_mixture(const std::vector<Vector>& means, double kappa,
                                Eigen::Index samples_per_class, double bias_angle);

struct TheoremRow {
  Eigen::Index n = 0;
  int trial = 0;
  double agreement = 0.0;
  double mean_resultant_length = 0.0;
  double a_d_reference = 0.0;
};

struct TheoremReport {
  std::vector<TheoremRow> rows;

  /// Mean agreement for each n in `n_list` order.
  std::vector<double> mean_agreement(const std::vector<Eigen::Index>& n_list) const;
  std::vector<double> mean_resultant(const std::vector<Eigen::Index>& n_list) const;
};

struct TheoremConfig {
  int dim = 16;
  int classes = 5;
  double kappa = 20.0;
  std::vector<Eigen::Index> n_list{10, 100, 1000, 10000};
  int trials = 20;
  Eigen::Index eval_per_class = 1000;
  std::uint64_t seed = 0;
};

/// Monte-Carlo check that nearest-normalized-centroid classification agrees
/// with the equal-kappa Bayes rule argmax mu_k^T v as n grows. Held-out
/// samples are drawn fresh per trial and shared across n.
TheoremReport verify_theorem1(const TheoremConfig& config);

}  // namespace pgfa
