#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "dml/matrix.hpp"

namespace dml {

enum class LossKind {
  contrastive,
  triplet,
  margin,
  generalized_lifted,
  npair,
  angular,
  arcface,
  histogram,
  multisimilarity,
  proxynca,
  quadruplet,
  snr,
  softtriple,
  normalized_softmax,
  mixup_triplet,
};

const char* loss_name(LossKind kind);
LossKind loss_from_name(const std::string& name);

// Loss identifier plus every hyperparameter any of the objectives reads.
// Construct via defaults(kind) to get the published value for each field.
struct ObjectiveSpec {
  LossKind kind = LossKind::triplet;

  double gamma = 0.2;        // primary margin
  double gamma2 = 0.5;       // second quadruplet margin
  double beta_init = 1.2;    // margin-loss boundary initial value
  double beta_lr = 0.0005;   // margin-loss boundary learning rate
  double nu = 0.005;         // squared-norm regularization (lifted / npair / angular)
  double alpha = 2.0;        // angular aperture (radians) or multisim pull strength
  double angular_lambda = 2.0;  // trade-off of the angular term vs the npair term
  double msim_beta = 40.0;
  double msim_lambda = 0.5;
  double msim_epsilon = 0.1;
  double snr_lambda = 0.005;  // zero-mean penalty weight
  double temperature = 0.05;
  double scale = 16.0;        // arcface logit scale
  int bins = 65;              // histogram nodes
  double st_tau = 0.2;        // softtriple regularizer weight
  double st_lambda = 8.0;     // softtriple logit scale
  double st_delta = 0.01;     // softtriple margin
  double st_gamma = 0.1;      // softtriple within-class softmax temperature
  int proxies_per_class = 1;
  double proxy_lr = 0.0005;
  double p_switch = 0.0;

  static ObjectiveSpec defaults(LossKind kind);
  void validate() const;
};

// Learned class representatives: per_class rows per class, grouped by class,
// so proxy k of class c lives in row c*per_class + k. Class ids for proxy
// losses must therefore be contiguous in [0, classes).
struct ProxyBank {
  Matrix proxies;
  std::size_t classes = 0;
  std::size_t per_class = 1;
  double learn_rate = 0.0005;

  std::size_t row_of(std::size_t c, std::size_t k) const { return c * per_class + k; }
  std::span<const double> proxy(std::size_t c, std::size_t k) const {
    return proxies.row(row_of(c, k));
  }
  std::size_t dim() const { return proxies.cols(); }
  void validate() const;
};

// Unit-normalized rows drawn from an isotropic Gaussian.
ProxyBank init_proxy_bank(std::size_t classes, std::size_t per_class, std::size_t dim,
                          std::uint64_t seed, double learn_rate = 0.0005);

struct LossOutput {
  double value = 0.0;
  Matrix grad_embeddings;  // n x D
  Matrix grad_proxies;     // empty unless the loss owns proxies
  double grad_beta = 0.0;  // margin-loss boundary gradient
};

}  // namespace dml
