#include "pgfa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace pgfa {

namespace {

Matrix apply_activation(Activation a, const Matrix& z) {
  switch (a) {
    case Activation::kRelu: return z.cwiseMax(0.0);
    case Activation::kTanh: return z.array().tanh().matrix();
    case Activation::kIdentity: return z;
  }
  return z;
}

// Derivative evaluated from the pre-activation.
Matrix activation_grad(Activation a, const Matrix& z) {
  switch (a) {
    case Activation::kRelu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::kTanh: return (1.0 - z.array().tanh().square()).matrix();
    case Activation::kIdentity: return Matrix::Ones(z.rows(), z.cols());
  }
  return Matrix::Ones(z.rows(), z.cols());
}

Matrix affine(const Matrix& x, const Dense& layer) {
  return (x * layer.weight).rowwise() + layer.bias.transpose();
}

void check_finite(const Matrix& m, const char* stage) {
  if (!m.allFinite()) {
    throw Error(ErrorCode::kNonFinite, std::string("non-finite values at stage '") + stage + "'");
  }
}

void hash_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
}

void hash_matrix(std::uint64_t& h, const Matrix& m) {
  const Eigen::Index shape[2] = {m.rows(), m.cols()};
  hash_bytes(h, shape, sizeof(shape));
  hash_bytes(h, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}

void hash_vector(std::uint64_t& h, const Vector& v) {
  const Eigen::Index n = v.size();
  hash_bytes(h, &n, sizeof(n));
  hash_bytes(h, v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    out.row(i) = softmax(logits.row(i).transpose(), 1.0).transpose();
  }
  return out;
}

void check_batch(const TrainerState& state, const Batch& batch) {
  const auto b = batch.skeleton.rows();
  if (b < 1) throw Error(ErrorCode::kEmptyDataset, "empty batch");
  if (batch.text.rows() != b || static_cast<Eigen::Index>(batch.labels.size()) != b) {
    throw Error(ErrorCode::kDimensionMismatch, "batch has " + std::to_string(b) +
                                                   " skeleton rows, " +
                                                   std::to_string(batch.text.rows()) +
                                                   " text rows and " +
                                                   std::to_string(batch.labels.size()) +
                                                   " labels");
  }
  if (batch.skeleton.cols() != state.spec.input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "skeleton width " + std::to_string(batch.skeleton.cols()) +
                    " but encoder expects " + std::to_string(state.spec.input_dim()));
  }
  if (batch.text.cols() != state.text_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "text width " + std::to_string(batch.text.cols()) + " but projection emits " +
                    std::to_string(state.text_dim()));
  }
}

}  // namespace

const char* to_string(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  return "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  throw Error(ErrorCode::kInvalidArgument, "unknown activation '" + name + "'");
}

void EncoderSpec::validate() const {
  if (layer_widths.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "encoder needs an input width and at least one layer");
  }
  for (int w : layer_widths) {
    if (w < 1) throw Error(ErrorCode::kInvalidArgument, "layer width must be >= 1");
  }
}

double TrainerState::tau() const { return std::exp(log_tau); }

TrainerState TrainerState::initialize(const EncoderSpec& spec, int text_dim, std::uint64_t seed) {
  spec.validate();
  if (text_dim < 1) throw Error(ErrorCode::kInvalidArgument, "text_dim must be >= 1");
  std::mt19937_64 rng(seed);
  auto glorot = [&rng](int fan_in, int fan_out) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    Dense layer{Matrix(fan_in, fan_out), Vector::Zero(fan_out)};
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = dist(rng);
    }
    return layer;
  };
  TrainerState state;
  state.spec = spec;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    state.encoder.push_back(glorot(spec.layer_widths[l], spec.layer_widths[l + 1]));
  }
  state.projection = glorot(spec.output_dim(), text_dim);
  state.log_tau = std::log(kTauInit);
  return state;
}

std::uint64_t TrainerState::fingerprint() const {
  std::uint64_t h = 14695981039346656037ULL;
  for (int w : spec.layer_widths) hash_bytes(h, &w, sizeof(w));
  const int act = static_cast<int>(spec.activation);
  hash_bytes(h, &act, sizeof(act));
  for (const auto& layer : encoder) {
    hash_matrix(h, layer.weight);
    hash_vector(h, layer.bias);
  }
  hash_matrix(h, projection.weight);
  hash_vector(h, projection.bias);
  hash_bytes(h, &log_tau, sizeof(log_tau));
  return h;
}

bool TrainerState::operator==(const TrainerState& other) const {
  if (spec.layer_widths != other.spec.layer_widths || spec.activation != other.spec.activation ||
      encoder.size() != other.encoder.size() || log_tau != other.log_tau) {
    return false;
  }
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    if (encoder[l].weight != other.encoder[l].weight || encoder[l].bias != other.encoder[l].bias) {
      return false;
    }
  }
  return projection.weight == other.projection.weight && projection.bias == other.projection.bias;
}

Gradients Gradients::zeros_like(const TrainerState& state) {
  Gradients g;
  for (const auto& layer : state.encoder) {
    g.encoder.push_back(Dense{Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                              Vector::Zero(layer.bias.size())});
  }
  g.projection = Dense{Matrix::Zero(state.projection.weight.rows(), state.projection.weight.cols()),
                       Vector::Zero(state.projection.bias.size())};
  return g;
}

Matrix build_target_matrix(const std::vector<int>& labels) {
  const auto b = static_cast<Eigen::Index>(labels.size());
  Matrix m = Matrix::Zero(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    int positives = 0;
    for (Eigen::Index j = 0; j < b; ++j) positives += labels[i] == labels[j];
    for (Eigen::Index j = 0; j < b; ++j) {
      if (labels[i] == labels[j]) m(i, j) = 1.0 / positives;
    }
  }
  return m;
}

ForwardResult forward(const TrainerState& state, const Batch& batch) {
  check_batch(state, batch);
  ForwardResult result;
  ForwardCache& c = result.cache;
  c.state_fingerprint = state.fingerprint();

  Matrix h = batch.skeleton;
  for (std::size_t l = 0; l < state.encoder.size(); ++l) {
    c.layer_inputs.push_back(h);
    Matrix z = affine(h, state.encoder[l]);
    check_finite(z, "encoder");
    h = apply_activation(state.spec.activation, z);
    c.pre_activations.push_back(std::move(z));
  }
  c.encoded = h;
  c.projected = affine(c.encoded, state.projection);
  check_finite(c.projected, "projection");

  c.projected_norms = c.projected.rowwise().norm();
  c.v_hat = normalize_rows(c.projected, "projected skeleton row");
  c.w_hat = normalize_rows(batch.text, "text row");

  const double tau = state.tau();
  c.logits = (c.v_hat * c.w_hat.transpose()) / tau;
  check_finite(c.logits, "similarity");

  c.row_probs = softmax_rows(c.logits);
  c.col_probs = softmax_rows(c.logits.transpose()).transpose();
  c.targets = build_target_matrix(batch.labels);

  double loss = 0.0;
  const auto b = c.logits.rows();
  for (Eigen::Index i = 0; i < b; ++i) {
    loss += kl_divergence(c.targets.row(i).transpose(), c.row_probs.row(i).transpose());
    loss += kl_divergence(c.targets.row(i).transpose(), c.col_probs.col(i));
  }
  result.loss = 0.5 * loss;
  if (!std::isfinite(result.loss)) throw Error(ErrorCode::kNonFinite, "non-finite loss");
  return result;
}

Gradients backward(const TrainerState& state, const ForwardCache& c) {
  if (c.state_fingerprint != state.fingerprint()) {
    throw Error(ErrorCode::kStaleCache, "cache was produced by a different trainer state");
  }
  Gradients g = Gradients::zeros_like(state);

  // d loss / d logits: row direction plus column direction.
  const Matrix dlogits =
      0.5 * ((c.row_probs - c.targets) + (c.col_probs - c.targets.transpose()));
  g.log_tau = -(dlogits.cwiseProduct(c.logits)).sum();

  const Matrix dsim = dlogits / state.tau();
  const Matrix dv_hat = dsim * c.w_hat;
  Matrix dv(dv_hat.rows(), dv_hat.cols());
  for (Eigen::Index i = 0; i < dv.rows(); ++i) {
    const double radial = c.v_hat.row(i).dot(dv_hat.row(i));
    dv.row(i) = (dv_hat.row(i) - radial * c.v_hat.row(i)) / c.projected_norms[i];
  }

  g.projection.weight = c.encoded.transpose() * dv;
  g.projection.bias = dv.colwise().sum().transpose();
  Matrix dh = dv * state.projection.weight.transpose();

  for (std::size_t l = state.encoder.size(); l-- > 0;) {
    const Matrix dz =
        dh.cwiseProduct(activation_grad(state.spec.activation, c.pre_activations[l]));
    g.encoder[l].weight = c.layer_inputs[l].transpose() * dz;
    g.encoder[l].bias = dz.colwise().sum().transpose();
    if (l > 0) dh = dz * state.encoder[l].weight.transpose();
  }
  return g;
}

TrainerState sgd_step(const TrainerState& state, const Gradients& grads, double lr) {
  if (!(lr > 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning rate must be > 0");
  TrainerState next = state;
  for (std::size_t l = 0; l < next.encoder.size(); ++l) {
    next.encoder[l].weight -= lr * grads.encoder[l].weight;
    next.encoder[l].bias -= lr * grads.encoder[l].bias;
  }
  next.projection.weight -= lr * grads.projection.weight;
  next.projection.bias -= lr * grads.projection.bias;
  next.log_tau = std::clamp(state.log_tau - lr * grads.log_tau, std::log(kTauMin),
                            std::log(kTauMax));
  return next;
}

FitResult fit(const TrainerState& initial, const EmbeddingTable& skeleton,
              const EmbeddingTable& text, const FitConfig& config) {
  const auto n = skeleton.rows();
  if (n == 0) throw Error(ErrorCode::kEmptyDataset, "no training rows");
  if (text.rows() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "skeleton and text tables differ in row count");
  }
  if (config.batch_size < 1 || config.epochs < 0) {
    throw Error(ErrorCode::kInvalidArgument, "batch size must be >= 1 and epochs >= 0");
  }

  FitResult result{initial, {}};
  std::mt19937_64 rng(config.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));

  const Eigen::Index bs = config.batch_size;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::pair<Eigen::Index, Eigen::Index>> spans;
    for (Eigen::Index start = 0; start < n; start += bs) {
      spans.emplace_back(start, std::min(n, start + bs));
    }
    if (spans.size() > 1 && spans.back().second - spans.back().first == 1) {
      spans[spans.size() - 2].second = n;
      spans.pop_back();
    }

    double total = 0.0;
    for (const auto& [start, stop] : spans) {
      Batch batch;
      const auto b = stop - start;
      batch.skeleton.resize(b, skeleton.dim());
      batch.text.resize(b, text.dim());
      for (Eigen::Index r = 0; r < b; ++r) {
        const auto src = order[static_cast<std::size_t>(start + r)];
        batch.skeleton.row(r) = skeleton.features.row(src);
        batch.text.row(r) = text.features.row(src);
        batch.labels.push_back(skeleton.labels[static_cast<std::size_t>(src)]);
      }
      const ForwardResult fr = forward(result.state, batch);
      const Gradients g = backward(result.state, fr.cache);
      result.state = sgd_step(result.state, g, config.lr);
      total += fr.loss;
    }
    result.epoch_loss.push_back(total / static_cast<double>(spans.size()));
  }
  return result;
}

EmbeddingTable embed(const TrainerState& state, const EmbeddingTable& raw) {
  if (raw.dim() != state.spec.input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "input width " + std::to_string(raw.dim()) + " but encoder expects " +
                    std::to_string(state.spec.input_dim()));
  }
  EmbeddingTable out = raw;
  Matrix h = raw.features;
  for (const auto& layer : state.encoder) h = apply_activation(state.spec.activation, affine(h, layer));
  out.features = affine(h, state.projection);
  return out;
}

}  // namespace pgfa
