#include "dml/toytrain.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dml/distance.hpp"
#include "dml/losses.hpp"
#include "dml/mining.hpp"
#include "dml/objective.hpp"
#include "dml/rng.hpp"

namespace dml {

namespace {

constexpr int kTraceEvery = 20;

// Stream ids hung off the config seed; keeping the switch draws on their own
// per-iteration streams makes a p_switch=0 regularized run bit-identical to
// an unregularized one.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kBatchStream = 2;
constexpr std::uint64_t kEvalStream = 3;
constexpr std::uint64_t kSwitchStream = 1000;

}  // namespace

void ToyConfig::validate() const {
  if (hidden_width < 1 || hidden_layers < 1 || input_dim < 1 || output_dim < 2)
    throw std::invalid_argument("toy config: network dimensions out of range");
  if (iterations < 1 || batch_size < 2 || samples_per_line < 2)
    throw std::invalid_argument("toy config: iterations, batch size and samples per line "
                                "must be positive (batch >= 2, samples >= 2)");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("toy config: learning rate must be > 0");
  if (margin < 0.0) throw std::invalid_argument("toy config: margin must be >= 0");
  if (p_switch < 0.0 || p_switch > 1.0)
    throw std::invalid_argument("toy config: p_switch outside [0,1]");
}

ToyDataset generate_toy_lines(LineVariant variant, int samples_per_line, std::uint64_t seed) {
  if (samples_per_line < 2)
    throw std::invalid_argument("generate_toy_lines: needs >= 2 samples per line");
  const std::size_t spl = static_cast<std::size_t>(samples_per_line);
  const double line_pos[4] = {-1.5, -0.5, 0.5, 1.5};

  Rng rng(seed);
  // One shared coordinate sample for all four lines of a split, so the train
  // classes differ in x only and the test classes in y only.
  std::vector<double> train_off(spl), test_off(spl);
  for (double& v : train_off) v = -1.5 + 3.0 * rng.next_double();
  for (double& v : test_off) v = -1.5 + 3.0 * rng.next_double();

  ToyDataset data;
  data.train_points = Matrix(4 * spl, 2);
  data.test_points = Matrix(4 * spl, 2);
  const double c = variant == LineVariant::diagonal ? std::sqrt(0.5) : 1.0;
  const double s = variant == LineVariant::diagonal ? std::sqrt(0.5) : 0.0;
  auto put = [&](Matrix& m, std::size_t r, double x, double y) {
    m(r, 0) = c * x - s * y;
    m(r, 1) = s * x + c * y;
  };
  for (std::size_t line = 0; line < 4; ++line) {
    for (std::size_t j = 0; j < spl; ++j) {
      put(data.train_points, line * spl + j, line_pos[line], train_off[j]);
      put(data.test_points, line * spl + j, test_off[j], line_pos[line]);
      data.train_labels.push_back(static_cast<int>(line));
      data.test_labels.push_back(static_cast<int>(line));
    }
  }
  return data;
}

MlpState init_mlp(const ToyConfig& config, std::uint64_t seed) {
  config.validate();
  std::vector<std::size_t> dims;
  dims.push_back(static_cast<std::size_t>(config.input_dim));
  for (int l = 0; l < config.hidden_layers; ++l)
    dims.push_back(static_cast<std::size_t>(config.hidden_width));
  dims.push_back(static_cast<std::size_t>(config.output_dim));

  Rng rng(seed);
  MlpState state;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t fan_in = dims[l];
    const std::size_t fan_out = dims[l + 1];
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    Matrix w(fan_out, fan_in);
    for (std::size_t r = 0; r < fan_out; ++r)
      for (std::size_t cc = 0; cc < fan_in; ++cc)
        w(r, cc) = bound * (2.0 * rng.next_double() - 1.0);
    std::vector<double> b(fan_out);
    for (double& v : b) v = bound * (2.0 * rng.next_double() - 1.0);
    state.weights.push_back(std::move(w));
    state.biases.push_back(std::move(b));
  }
  return state;
}

MlpForward mlp_forward_cached(const MlpState& state, const Matrix& inputs) {
  const std::size_t layers = state.weights.size();
  if (layers == 0 || state.biases.size() != layers)
    throw std::invalid_argument("mlp_forward: inconsistent state");
  if (inputs.cols() != state.weights.front().cols())
    throw std::invalid_argument("mlp_forward: input width mismatch");

  MlpForward fwd;
  fwd.inputs = inputs;
  const Matrix* h = &inputs;
  for (std::size_t l = 0; l < layers; ++l) {
    const Matrix& w = state.weights[l];
    const auto& b = state.biases[l];
    Matrix pre(h->rows(), w.rows());
    for (std::size_t i = 0; i < h->rows(); ++i) {
      for (std::size_t o = 0; o < w.rows(); ++o) {
        double acc = b[o];
        for (std::size_t k = 0; k < w.cols(); ++k) acc += w(o, k) * (*h)(i, k);
        pre(i, o) = acc;
      }
    }
    Matrix post = pre;
    if (l + 1 < layers)
      for (std::size_t i = 0; i < post.rows(); ++i)
        for (std::size_t o = 0; o < post.cols(); ++o) post(i, o) = std::max(post(i, o), 0.0);
    fwd.pre.push_back(std::move(pre));
    fwd.post.push_back(std::move(post));
    h = &fwd.post.back();
  }
  fwd.embeddings = normalize_rows(fwd.post.back());
  return fwd;
}

EmbeddingMatrix mlp_forward(const MlpState& state, const Matrix& inputs) {
  return mlp_forward_cached(state, inputs).embeddings;
}

MlpGradients mlp_backward(const MlpState& state, const MlpForward& fwd,
                          const Matrix& grad_embeddings) {
  const std::size_t layers = state.weights.size();
  const std::size_t n = fwd.inputs.rows();
  const Matrix& z = fwd.post.back();  // pre-normalization outputs
  const Matrix& e = fwd.embeddings.values();
  if (grad_embeddings.rows() != n || grad_embeddings.cols() != z.cols())
    throw std::invalid_argument("mlp_backward: gradient shape mismatch");

  MlpGradients grads;
  for (std::size_t l = 0; l < layers; ++l) {
    grads.params.weights.emplace_back(state.weights[l].rows(), state.weights[l].cols());
    grads.params.biases.emplace_back(state.biases[l].size(), 0.0);
  }

  // through the unit normalization: d/dz [z/|z|] applied to g is
  // (g - (g.e)e)/|z|
  Matrix delta(n, z.cols());
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) norm += z(i, c) * z(i, c);
    norm = std::sqrt(norm);
    double ge = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) ge += grad_embeddings(i, c) * e(i, c);
    for (std::size_t c = 0; c < z.cols(); ++c)
      delta(i, c) = (grad_embeddings(i, c) - ge * e(i, c)) / norm;
  }

  for (std::size_t l = layers; l-- > 0;) {
    const Matrix& input = l == 0 ? fwd.inputs : fwd.post[l - 1];
    Matrix& gw = grads.params.weights[l];
    auto& gb = grads.params.biases[l];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t o = 0; o < gw.rows(); ++o) {
        const double d = delta(i, o);
        if (d == 0.0) continue;
        gb[o] += d;
        for (std::size_t k = 0; k < gw.cols(); ++k) gw(o, k) += d * input(i, k);
      }
    }
    Matrix prev(n, state.weights[l].cols());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < prev.cols(); ++k) {
        double acc = 0.0;
        for (std::size_t o = 0; o < state.weights[l].rows(); ++o)
          acc += state.weights[l](o, k) * delta(i, o);
        prev(i, k) = acc;
      }
    if (l > 0)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < prev.cols(); ++k)
          if (fwd.pre[l - 1](i, k) <= 0.0) prev(i, k) = 0.0;
    delta = std::move(prev);
  }
  grads.inputs = std::move(delta);
  return grads;
}

ToyResult train_toy(const ToyConfig& config, bool regularized) {
  config.validate();
  if (config.input_dim != 2)
    throw std::invalid_argument("train_toy: the line generators produce 2D inputs");

  ToyResult result;
  result.data = generate_toy_lines(config.variant, config.samples_per_line, config.seed);
  result.state = init_mlp(config, mix_seed(config.seed, kInitStream));

  const std::size_t n = result.data.train_points.rows();
  if (static_cast<std::size_t>(config.batch_size) > n)
    throw std::invalid_argument("train_toy: batch size exceeds the training set");

  ObjectiveSpec spec = ObjectiveSpec::defaults(LossKind::contrastive);
  spec.gamma = config.margin;

  Rng batch_rng(mix_seed(config.seed, kBatchStream));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  // Switch state for the regularized run lives on a standing tuple set of the
  // training split's same-class pairs, passed through rho_regularize_tuples
  // once per iteration. The pass toggles rather than redraws, so at a small
  // p_switch the rare switches accumulate over training instead of lasting a
  // single batch: a switched pair resolves to the negative role whenever its
  // endpoints share a batch, and that persistent same-class repulsion is what
  // keeps the trailing singular direction from closing. Cross-class pairs stay
  // out of the set; switching one would turn it into an attraction term that
  // drags two classes together and compresses the spectrum further.
  TupleSet switch_pool;
  std::vector<std::size_t> pool_slot;  // n*i + j -> pool index + 1, 0 = none
  if (regularized) {
    const TupleSet all = exhaustive_pairs(result.data.train_labels);
    switch_pool.kind = all.kind;
    switch_pool.provenance = all.provenance;
    pool_slot.assign(n * n, 0);
    for (std::size_t t = 0; t < all.size(); ++t) {
      const std::size_t i = all.items[t][0];
      const std::size_t j = all.items[t][1];
      if (result.data.train_labels[i] != result.data.train_labels[j]) continue;
      switch_pool.items.push_back(all.items[t]);
      switch_pool.switched.push_back(0);
      pool_slot[n * i + j] = switch_pool.size();
      pool_slot[n * j + i] = switch_pool.size();
    }
  }

  for (int it = 0; it < config.iterations; ++it) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(config.batch_size); ++i) {
      const std::size_t j = i + batch_rng.next_below(n - i);
      std::swap(order[i], order[j]);
    }
    Matrix inputs(static_cast<std::size_t>(config.batch_size), 2);
    LabelVector batch_labels(static_cast<std::size_t>(config.batch_size));
    for (std::size_t i = 0; i < inputs.rows(); ++i) {
      inputs(i, 0) = result.data.train_points(order[i], 0);
      inputs(i, 1) = result.data.train_points(order[i], 1);
      batch_labels[i] = result.data.train_labels[order[i]];
    }

    const MlpForward fwd = mlp_forward_cached(result.state, inputs);
    TupleSet pairs = exhaustive_pairs(batch_labels);
    if (regularized) {
      switch_pool = rho_regularize_tuples(switch_pool, result.data.train_labels, config.p_switch,
                                          mix_seed(config.seed, kSwitchStream + it));
      switch_pool.provenance = "exhaustive";  // keep the accumulated tag from growing unbounded
      for (std::size_t t = 0; t < pairs.size(); ++t) {
        const std::size_t slot = pool_slot[n * order[pairs.items[t][0]] + order[pairs.items[t][1]]];
        if (slot != 0) pairs.switched[t] = switch_pool.switched[slot - 1];
      }
    }
    const LossOutput loss = contrastive_loss(fwd.embeddings, batch_labels, pairs, spec);
    if (!std::isfinite(loss.value))
      throw std::runtime_error("train_toy: loss diverged at iteration " + std::to_string(it));

    const MlpGradients grads = mlp_backward(result.state, fwd, loss.grad_embeddings);
    for (std::size_t l = 0; l < result.state.weights.size(); ++l) {
      Matrix& w = result.state.weights[l];
      const Matrix& gw = grads.params.weights[l];
      for (std::size_t r = 0; r < w.rows(); ++r)
        for (std::size_t c = 0; c < w.cols(); ++c)
          w(r, c) -= config.learning_rate * gw(r, c);
      auto& b = result.state.biases[l];
      const auto& gb = grads.params.biases[l];
      for (std::size_t o = 0; o < b.size(); ++o) b[o] -= config.learning_rate * gb[o];
    }

    if ((it + 1) % kTraceEvery == 0) {
      const EmbeddingMatrix train_emb = mlp_forward(result.state, result.data.train_points);
      const SpectralReport sr = spectral_report(train_emb);
      result.trace.push_back({it + 1, loss.value, sr.rho});
      result.snapshots.emplace_back(it + 1, train_emb);
    }
  }

  result.train_embeddings = mlp_forward(result.state, result.data.train_points);
  result.test_embeddings = mlp_forward(result.state, result.data.test_points);
  result.train_spectral = spectral_report(result.train_embeddings);
  result.test_metrics = evaluate_all(result.test_embeddings, result.data.test_labels, {1, 2, 4},
                                     mix_seed(config.seed, kEvalStream));
  return result;
}

}  // namespace dml
