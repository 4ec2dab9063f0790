#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "dml/losses.hpp"
#include "dml/mining.hpp"
#include "dml/toytrain.hpp"
#include "testutil.hpp"

using namespace dml;

namespace {

ToyConfig small_config() {
  ToyConfig c;
  c.variant = LineVariant::axis;
  c.hidden_width = 8;
  c.iterations = 40;
  c.batch_size = 12;
  c.samples_per_line = 4;
  c.seed = 5;
  return c;
}

// Max collinearity defect of one class line: cross products against the
// dominant direction.
double collinearity_defect(const Matrix& pts, const LabelVector& labels, int cls) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == cls) idx.push_back(i);
  double dx = 0.0, dy = 0.0;
  for (std::size_t k = 1; k < idx.size(); ++k) {
    const double ex = pts(idx[k], 0) - pts(idx[0], 0);
    const double ey = pts(idx[k], 1) - pts(idx[0], 1);
    if (ex * ex + ey * ey > dx * dx + dy * dy) {
      dx = ex;
      dy = ey;
    }
  }
  double worst = 0.0;
  for (std::size_t k = 1; k < idx.size(); ++k) {
    const double ex = pts(idx[k], 0) - pts(idx[0], 0);
    const double ey = pts(idx[k], 1) - pts(idx[0], 1);
    worst = std::max(worst, std::abs(ex * dy - ey * dx));
  }
  return worst;
}

std::vector<double> sorted_column(const Matrix& pts, const LabelVector& labels, int cls,
                                  std::size_t col) {
  std::vector<double> v;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == cls) v.push_back(pts(i, col));
  std::sort(v.begin(), v.end());
  return v;
}

// Contrastive loss over the whole training set as a function of parameters.
double full_batch_loss(const MlpState& state, const ToyDataset& data, double margin) {
  ObjectiveSpec spec = ObjectiveSpec::defaults(LossKind::contrastive);
  spec.gamma = margin;
  const EmbeddingMatrix emb = mlp_forward(state, data.train_points);
  return contrastive_loss(emb, data.train_labels, exhaustive_pairs(data.train_labels), spec)
      .value;
}

bool states_equal(const MlpState& a, const MlpState& b) {
  if (a.weights.size() != b.weights.size()) return false;
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    for (std::size_t r = 0; r < a.weights[l].rows(); ++r)
      for (std::size_t c = 0; c < a.weights[l].cols(); ++c)
        if (a.weights[l](r, c) != b.weights[l](r, c)) return false;
    if (a.biases[l] != b.biases[l]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("toy line generator geometry") {
  const ToyDataset axis = generate_toy_lines(LineVariant::axis, 15, 3);
  CHECK(axis.train_points.rows() == 60);
  CHECK(axis.test_points.rows() == 60);
  CHECK(class_count(axis.train_labels) == 4);
  CHECK(class_count(axis.test_labels) == 4);

  std::set<double> xs;
  for (int cls = 0; cls < 4; ++cls) {
    CHECK(collinearity_defect(axis.train_points, axis.train_labels, cls) <= 1e-9);
    CHECK(collinearity_defect(axis.test_points, axis.test_labels, cls) <= 1e-9);
    // vertical train lines: constant x per class, shared y multiset
    const auto x = sorted_column(axis.train_points, axis.train_labels, cls, 0);
    CHECK(x.front() == x.back());
    xs.insert(x.front());
    CHECK(sorted_column(axis.train_points, axis.train_labels, cls, 1) ==
          sorted_column(axis.train_points, axis.train_labels, 0, 1));
    // horizontal test lines: constant y per class, shared x multiset
    const auto y = sorted_column(axis.test_points, axis.test_labels, cls, 1);
    CHECK(y.front() == y.back());
    CHECK(sorted_column(axis.test_points, axis.test_labels, cls, 0) ==
          sorted_column(axis.test_points, axis.test_labels, 0, 0));
  }
  CHECK(xs.size() == 4);  // the four lines are distinct

  // the diagonal variant is the axis construction rotated by 45 degrees
  const ToyDataset diag = generate_toy_lines(LineVariant::diagonal, 15, 3);
  const double c = std::sqrt(0.5);
  for (std::size_t i = 0; i < 60; ++i) {
    CHECK(diag.train_points(i, 0) ==
          doctest::Approx(c * axis.train_points(i, 0) - c * axis.train_points(i, 1))
              .epsilon(1e-12));
    CHECK(diag.train_points(i, 1) ==
          doctest::Approx(c * axis.train_points(i, 0) + c * axis.train_points(i, 1))
              .epsilon(1e-12));
  }
  for (int cls = 0; cls < 4; ++cls)
    CHECK(collinearity_defect(diag.train_points, diag.train_labels, cls) <= 1e-9);

  // determinism and seed sensitivity
  const ToyDataset again = generate_toy_lines(LineVariant::axis, 15, 3);
  CHECK(again.train_points(7, 1) == axis.train_points(7, 1));
  const ToyDataset other = generate_toy_lines(LineVariant::axis, 15, 4);
  CHECK(other.train_points(7, 1) != axis.train_points(7, 1));

  CHECK_THROWS_AS(generate_toy_lines(LineVariant::axis, 1, 3), std::invalid_argument);
}

TEST_CASE("mlp forward lands on the unit circle") {
  ToyConfig cfg = small_config();
  const MlpState state = init_mlp(cfg, 77);
  const ToyDataset data = generate_toy_lines(cfg.variant, cfg.samples_per_line, cfg.seed);
  const EmbeddingMatrix emb = mlp_forward(state, data.train_points);
  CHECK(emb.normalized());
  for (std::size_t i = 0; i < emb.size(); ++i) {
    double norm = 0.0;
    for (std::size_t c = 0; c < emb.dim(); ++c) norm += emb.row(i)[c] * emb.row(i)[c];
    CHECK(std::abs(std::sqrt(norm) - 1.0) <= 1e-9);
  }

  // zero final weights with a nonzero bias: every output is the scaled bias
  MlpState frozen = state;
  Matrix& last = frozen.weights.back();
  for (std::size_t r = 0; r < last.rows(); ++r)
    for (std::size_t c = 0; c < last.cols(); ++c) last(r, c) = 0.0;
  frozen.biases.back() = {0.3, -0.4};
  const EmbeddingMatrix fixed = mlp_forward(frozen, data.train_points);
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    CHECK(fixed.row(i)[0] == doctest::Approx(0.6));
    CHECK(fixed.row(i)[1] == doctest::Approx(-0.8));
  }

  // an all-zero output vector cannot be normalized
  MlpState dead = frozen;
  dead.biases.back() = {0.0, 0.0};
  CHECK_THROWS_AS(mlp_forward(dead, data.train_points), std::invalid_argument);
}

TEST_CASE("mlp backward matches finite differences on every parameter") {
  ToyConfig cfg = small_config();
  cfg.hidden_width = 5;
  const MlpState state = init_mlp(cfg, 13);
  Rng rng(29);
  const Matrix inputs = testutil::random_points(rng, 6, 2);
  Matrix upstream = testutil::random_points(rng, 6, 2);

  const MlpForward fwd = mlp_forward_cached(state, inputs);
  const MlpGradients grads = mlp_backward(state, fwd, upstream);

  auto scalar = [&](const MlpState& s) {
    const EmbeddingMatrix e = mlp_forward(s, inputs);
    double total = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i)
      for (std::size_t c = 0; c < e.dim(); ++c) total += upstream(i, c) * e.row(i)[c];
    return total;
  };

  const double h = 1e-5;
  double worst_num = 0.0, worst_den = 0.0;
  auto track = [&](double analytic, double fd) {
    worst_num = std::max(worst_num, std::abs(analytic - fd));
    worst_den = std::max(worst_den, std::abs(fd));
  };
  for (std::size_t l = 0; l < state.weights.size(); ++l) {
    for (std::size_t r = 0; r < state.weights[l].rows(); ++r)
      for (std::size_t c = 0; c < state.weights[l].cols(); ++c) {
        MlpState up = state, down = state;
        up.weights[l](r, c) += h;
        down.weights[l](r, c) -= h;
        track(grads.params.weights[l](r, c), (scalar(up) - scalar(down)) / (2 * h));
      }
    for (std::size_t o = 0; o < state.biases[l].size(); ++o) {
      MlpState up = state, down = state;
      up.biases[l][o] += h;
      down.biases[l][o] -= h;
      track(grads.params.biases[l][o], (scalar(up) - scalar(down)) / (2 * h));
    }
  }
  CHECK(worst_num <= 1e-4 * std::max(worst_den, 1e-6));

  // input gradients through the same oracle
  double inum = 0.0, iden = 0.0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < 2; ++c) {
      Matrix up = inputs, down = inputs;
      up(i, c) += h;
      down(i, c) -= h;
      const double fd =
          [&](const Matrix& m) {
            MlpForward f = mlp_forward_cached(state, m);
            double total = 0.0;
            for (std::size_t r = 0; r < 6; ++r)
              for (std::size_t cc = 0; cc < 2; ++cc)
                total += upstream(r, cc) * f.embeddings.row(r)[cc];
            return total;
          }(up) -
          [&](const Matrix& m) {
            MlpForward f = mlp_forward_cached(state, m);
            double total = 0.0;
            for (std::size_t r = 0; r < 6; ++r)
              for (std::size_t cc = 0; cc < 2; ++cc)
                total += upstream(r, cc) * f.embeddings.row(r)[cc];
            return total;
          }(down);
      inum = std::max(inum, std::abs(grads.inputs(i, c) - fd / (2 * h)));
      iden = std::max(iden, std::abs(fd / (2 * h)));
    }
  CHECK(inum <= 1e-4 * std::max(iden, 1e-6));
}

TEST_CASE("one training step applies the analytic full-batch gradient") {
  ToyConfig cfg = small_config();
  cfg.samples_per_line = 3;
  cfg.batch_size = 12;  // the whole training set: pair losses ignore order
  cfg.hidden_width = 6;
  cfg.iterations = 1;
  cfg.learning_rate = 0.05;
  cfg.seed = 11;

  const ToyResult full = train_toy(cfg, false);
  ToyConfig half_cfg = cfg;
  half_cfg.learning_rate = 0.025;
  const ToyResult half = train_toy(half_cfg, false);

  // initialization depends only on the seed, so the two runs started from
  // the same parameters: init = 2*half - full, gradient = (half - full)*2/lr
  MlpState init = full.state;
  MlpState grad = full.state;
  for (std::size_t l = 0; l < init.weights.size(); ++l) {
    for (std::size_t r = 0; r < init.weights[l].rows(); ++r)
      for (std::size_t c = 0; c < init.weights[l].cols(); ++c) {
        const double f = full.state.weights[l](r, c);
        const double m = half.state.weights[l](r, c);
        init.weights[l](r, c) = 2.0 * m - f;
        grad.weights[l](r, c) = 2.0 * (m - f) / cfg.learning_rate;
      }
    for (std::size_t o = 0; o < init.biases[l].size(); ++o) {
      const double f = full.state.biases[l][o];
      const double m = half.state.biases[l][o];
      init.biases[l][o] = 2.0 * m - f;
      grad.biases[l][o] = 2.0 * (m - f) / cfg.learning_rate;
    }
  }

  const double h = 1e-5;
  double num = 0.0, den = 0.0;
  for (std::size_t l = 0; l < init.weights.size(); ++l) {
    for (std::size_t r = 0; r < init.weights[l].rows(); ++r)
      for (std::size_t c = 0; c < init.weights[l].cols(); ++c) {
        MlpState up = init, down = init;
        up.weights[l](r, c) += h;
        down.weights[l](r, c) -= h;
        const double fd = (full_batch_loss(up, full.data, cfg.margin) -
                           full_batch_loss(down, full.data, cfg.margin)) /
                          (2 * h);
        num = std::max(num, std::abs(grad.weights[l](r, c) - fd));
        den = std::max(den, std::abs(fd));
      }
    for (std::size_t o = 0; o < init.biases[l].size(); ++o) {
      MlpState up = init, down = init;
      up.biases[l][o] += h;
      down.biases[l][o] -= h;
      const double fd = (full_batch_loss(up, full.data, cfg.margin) -
                         full_batch_loss(down, full.data, cfg.margin)) /
                        (2 * h);
      num = std::max(num, std::abs(grad.biases[l][o] - fd));
      den = std::max(den, std::abs(fd));
    }
  }
  CHECK(num <= 1e-4 * std::max(den, 1e-6));
}

TEST_CASE("training trace, determinism, and the switch ablation identity") {
  const ToyConfig cfg = small_config();
  const ToyResult a = train_toy(cfg, false);
  REQUIRE(a.trace.size() == 2);  // 40 iterations, logged every 20
  CHECK(a.trace[0].iteration == 20);
  CHECK(a.trace[1].iteration == 40);
  for (const TraceRow& row : a.trace) {
    CHECK(std::isfinite(row.loss));
    CHECK(std::isfinite(row.rho));
  }
  REQUIRE(a.snapshots.size() == 2);
  CHECK(a.snapshots[0].first == 20);
  CHECK(a.snapshots[0].second.size() == 16);

  CHECK(a.train_embeddings.normalized());
  CHECK(a.test_embeddings.normalized());
  CHECK(a.test_metrics.recall_at.count(1) == 1);
  CHECK(a.test_metrics.recall_at.count(2) == 1);
  CHECK(a.test_metrics.recall_at.count(4) == 1);
  CHECK(a.train_spectral.singular_values.size() == 2);

  const ToyResult b = train_toy(cfg, false);
  CHECK(states_equal(a.state, b.state));
  CHECK(a.trace[1].loss == b.trace[1].loss);
  CHECK(a.trace[1].rho == b.trace[1].rho);

  // regularization with p_switch = 0 changes nothing, bit for bit
  ToyConfig zero = cfg;
  zero.p_switch = 0.0;
  const ToyResult reg = train_toy(zero, true);
  const ToyResult unreg = train_toy(zero, false);
  CHECK(states_equal(reg.state, unreg.state));
  CHECK(reg.trace[1].loss == unreg.trace[1].loss);

  // an active switch rate does change the run
  ToyConfig active = cfg;
  active.p_switch = 0.5;
  const ToyResult switched = train_toy(active, true);
  CHECK(!states_equal(switched.state, unreg.state));
}

TEST_CASE("toy config validation rejects bad values") {
  ToyConfig cfg = small_config();
  cfg.batch_size = 100;  // exceeds the 16-sample training set
  CHECK_THROWS_AS(train_toy(cfg, false), std::invalid_argument);
  cfg = small_config();
  cfg.input_dim = 3;
  CHECK_THROWS_AS(train_toy(cfg, false), std::invalid_argument);
  cfg = small_config();
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.p_switch = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.output_dim = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.iterations = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  ToyConfig defaults;
  CHECK(defaults.hidden_width == 30);
  CHECK(defaults.hidden_layers == 2);
  CHECK(defaults.iterations == 200);
  CHECK(defaults.batch_size == 24);
  CHECK(defaults.learning_rate == 0.03);
  CHECK(defaults.margin == 0.1);
  CHECK(defaults.p_switch == 0.001);
  CHECK(defaults.samples_per_line == 15);
  CHECK_NOTHROW(defaults.validate());
}
