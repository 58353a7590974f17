#pragma once

#include "pgfa/core.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pgfa {

enum class Activation { kRelu, kTanh, kIdentity };

const char* to_string(Activation a);
Activation parse_activation(const std::string& name);

/// Encoder stand-in: a fully connected stack. `layer_widths` runs from the
/// input width to the encoder output width, so {d_in, h, d_enc} has two
/// layers. The activation follows every encoder layer; the projection after
/// it is linear.
struct EncoderSpec {
  std::vector<int> layer_widths;
  Activation activation = Activation::kRelu;

  int input_dim() const { return layer_widths.front(); }
  int output_dim() const { return layer_widths.back(); }
  std::size_t num_layers() const { return layer_widths.size() - 1; }
  void validate() const;
};

/// Affine map y = x W + b with W stored as (in x out).
struct Dense {
  Matrix weight;
  Vector bias;
};

inline constexpr double kTauInit = 0.07;
inline constexpr double kTauMin = 1e-3;
inline constexpr double kTauMax = 10.0;

struct TrainerState {
  EncoderSpec spec;
  std::vector<Dense> encoder;
  Dense projection;  // d_enc x d_text
  double log_tau = 0.0;

  double tau() const;
  int text_dim() const { return static_cast<int>(projection.weight.cols()); }

  /// Glorot-uniform weights, zero biases, tau = 0.07.
  static TrainerState initialize(const EncoderSpec& spec, int text_dim, std::uint64_t seed);

  /// Order-sensitive hash of every parameter bit; used to detect stale caches.
  std::uint64_t fingerprint() const;

  bool operator==(const TrainerState& other) const;
};

struct Gradients {
  std::vector<Dense> encoder;
  Dense projection;
  double log_tau = 0.0;

  /// Zeros with the same shapes as `state`.
  static Gradients zeros_like(const TrainerState& state);
};

struct Batch {
  Matrix skeleton;  // B x d_in
  Matrix text;      // B x d_text, row i is the text feature of sample i
  std::vector<int> labels;
};

/// Row i is uniform over the j with labels[j] == labels[i]. Symmetric, so it
/// serves both the skeleton-to-text rows and the text-to-skeleton columns.
Matrix build_target_matrix(const std::vector<int>& labels);

struct ForwardCache {
  std::uint64_t state_fingerprint = 0;
  std::vector<Matrix> pre_activations;   // per encoder layer, B x width
  std::vector<Matrix> layer_inputs;      // per encoder layer, B x in
  Matrix encoded;                        // B x d_enc
  Matrix projected;                      // B x d_text (v)
  Vector projected_norms;
  Matrix v_hat;
  Matrix w_hat;
  Matrix logits;                         // cos / tau
  Matrix row_probs;                      // skeleton->text, softmax over each row
  Matrix col_probs;                      // text->skeleton, softmax over each column
  Matrix targets;
};

struct ForwardResult {
  double loss = 0.0;
  ForwardCache cache;
};

/// Bidirectional KL contrastive loss, 1/2 sum_i [KL(m_i || p_x2t_i) + KL(m_i || p_t2x_i)].
ForwardResult forward(const TrainerState& state, const Batch& batch);

/// Exact reverse-mode gradients of forward()'s loss. Throws StaleCache when
/// `state` is not the state that produced `cache`.
Gradients backward(const TrainerState& state, const ForwardCache& cache);

/// Plain SGD; log_tau is clamped so tau stays in [kTauMin, kTauMax].
TrainerState sgd_step(const TrainerState& state, const Gradients& grads, double lr);

struct FitConfig {
  int epochs = 20;
  int batch_size = 32;
  double lr = 5e-2;
  std::uint64_t seed = 0;
};

struct FitResult {
  TrainerState state;
  std::vector<double> epoch_loss;  // mean batch loss per epoch
};

/// Seeded shuffled mini-batch SGD. `skeleton` and `text` are row-aligned;
/// labels come from `skeleton.labels`. A trailing batch of one row is merged
/// into the previous batch.
FitResult fit(const TrainerState& initial, const EmbeddingTable& skeleton,
              const EmbeddingTable& text, const FitConfig& config);

/// Rows are projection(encoder(x)); ids, labels and classes are carried over.
EmbeddingTable embed(const TrainerState& state, const EmbeddingTable& raw);

}  // namespace pgfa
