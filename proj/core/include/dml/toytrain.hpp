#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dml/evaluation.hpp"
#include "dml/matrix.hpp"
#include "dml/spectral.hpp"

namespace dml {

enum class LineVariant { diagonal, axis };

struct ToyConfig {
  LineVariant variant = LineVariant::diagonal;
  int hidden_width = 30;
  int hidden_layers = 2;
  int input_dim = 2;
  int output_dim = 2;
  int iterations = 200;
  int batch_size = 24;
  double learning_rate = 0.03;
  double margin = 0.1;
  double p_switch = 0.001;
  int samples_per_line = 15;
  std::uint64_t seed = 1;

  void validate() const;
};

struct ToyDataset {
  Matrix train_points;
  LabelVector train_labels;
  Matrix test_points;
  LabelVector test_labels;
};

// Four training lines and four test lines of samples_per_line 2D points each,
// one class per line. The axis variant trains on vertical segments that
// differ only in x (every line reuses the same sampled y offsets, so the y
// marginals are identical) and tests on horizontal segments that differ only
// in y; the diagonal variant is the same construction rotated 45 degrees.
ToyDataset generate_toy_lines(LineVariant variant, int samples_per_line, std::uint64_t seed);

// Fully-connected net: input -> hidden_layers x hidden_width (positive-part
// activations) -> output, with the output scaled onto the unit circle.
struct MlpState {
  std::vector<Matrix> weights;             // layer l: out x in
  std::vector<std::vector<double>> biases;
};

MlpState init_mlp(const ToyConfig& config, std::uint64_t seed);

struct MlpForward {
  std::vector<Matrix> pre;   // pre-activation per layer
  std::vector<Matrix> post;  // post-activation per layer (last: pre-normalization output)
  Matrix inputs;
  EmbeddingMatrix embeddings;
};

EmbeddingMatrix mlp_forward(const MlpState& state, const Matrix& inputs);
MlpForward mlp_forward_cached(const MlpState& state, const Matrix& inputs);

// Reverse pass from d(loss)/d(embeddings); returns parameter gradients in
// MlpState shape plus the gradient with respect to the inputs.
struct MlpGradients {
  MlpState params;
  Matrix inputs;
};
MlpGradients mlp_backward(const MlpState& state, const MlpForward& fwd,
                          const Matrix& grad_embeddings);

struct TraceRow {
  int iteration = 0;
  double loss = 0.0;
  double rho = 0.0;
};

struct ToyResult {
  MlpState state;
  std::vector<TraceRow> trace;                              // every 20 iterations
  std::vector<std::pair<int, EmbeddingMatrix>> snapshots;   // train embeddings
  EmbeddingMatrix train_embeddings;
  EmbeddingMatrix test_embeddings;
  SpectralReport train_spectral;
  MetricReport test_metrics;
  ToyDataset data;
};

// Minibatch gradient descent with the contrastive objective over all in-batch
// pairs. `regularized` turns on role switching: a standing set of the training
// split's same-class pairs goes through rho_regularize_tuples once per
// iteration, so switches drawn at config.p_switch persist and accumulate, and
// a switched pair contributes a repulsion term whenever both endpoints land in
// a batch. Bit-deterministic for a given config.
ToyResult train_toy(const ToyConfig& config, bool regularized);

}  // namespace dml
