#include "dml/objective.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dml/distance.hpp"
#include "dml/rng.hpp"

namespace dml {

const char* loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::contrastive: return "contrastive";
    case LossKind::triplet: return "triplet";
    case LossKind::margin: return "margin";
    case LossKind::generalized_lifted: return "genlifted";
    case LossKind::npair: return "npair";
    case LossKind::angular: return "angular";
    case LossKind::arcface: return "arcface";
    case LossKind::histogram: return "histogram";
    case LossKind::multisimilarity: return "multisimilarity";
    case LossKind::proxynca: return "proxynca";
    case LossKind::quadruplet: return "quadruplet";
    case LossKind::snr: return "snr";
    case LossKind::softtriple: return "softtriple";
    case LossKind::normalized_softmax: return "normsoftmax";
    case LossKind::mixup_triplet: return "mixup-triplet";
  }
  throw std::logic_error("loss_name: bad kind");
}

LossKind loss_from_name(const std::string& name) {
  for (int k = 0; k <= static_cast<int>(LossKind::mixup_triplet); ++k) {
    const auto kind = static_cast<LossKind>(k);
    if (name == loss_name(kind)) return kind;
  }
  throw std::invalid_argument("unknown loss: " + name);
}

ObjectiveSpec ObjectiveSpec::defaults(LossKind kind) {
  ObjectiveSpec s;
  s.kind = kind;
  switch (kind) {
    case LossKind::contrastive:
      s.gamma = 1.0;
      break;
    case LossKind::triplet:
    case LossKind::mixup_triplet:
      s.gamma = 0.2;
      break;
    case LossKind::margin:
      s.gamma = 0.2;
      s.beta_init = 1.2;  // 0.6 is the other published setting
      s.beta_lr = 0.0005;
      break;
    case LossKind::generalized_lifted:
      s.gamma = 1.0;
      s.nu = 0.005;
      break;
    case LossKind::npair:
      s.nu = 0.005;
      break;
    case LossKind::angular:
      s.alpha = std::numbers::pi / 4.0;
      s.angular_lambda = 2.0;
      s.nu = 0.005;
      break;
    case LossKind::arcface:
      s.gamma = 0.5;  // additive angular margin
      s.scale = 16.0;
      s.proxy_lr = 0.0005;
      break;
    case LossKind::histogram:
      s.bins = 65;  // 11 for the large-catalog setting
      break;
    case LossKind::multisimilarity:
      s.alpha = 2.0;
      s.msim_beta = 40.0;
      s.msim_lambda = 0.5;
      s.msim_epsilon = 0.1;
      break;
    case LossKind::proxynca:
      s.proxy_lr = 0.0005;
      break;
    case LossKind::quadruplet:
      s.gamma = 1.0;
      s.gamma2 = 0.5;
      break;
    case LossKind::snr:
      s.gamma = 0.2;
      s.snr_lambda = 0.005;
      break;
    case LossKind::softtriple:
      s.st_tau = 0.2;
      s.st_lambda = 8.0;
      s.st_delta = 0.01;
      s.st_gamma = 0.1;
      s.proxies_per_class = 2;
      s.proxy_lr = 0.00001;
      break;
    case LossKind::normalized_softmax:
      s.temperature = 0.05;
      s.proxy_lr = 0.00001;
      break;
  }
  return s;
}

void ObjectiveSpec::validate() const {
  if (gamma < 0 || gamma2 < 0) throw std::invalid_argument("ObjectiveSpec: negative margin");
  if (temperature <= 0) throw std::invalid_argument("ObjectiveSpec: temperature must be positive");
  if (bins < 2) throw std::invalid_argument("ObjectiveSpec: bins must be at least 2");
  if (p_switch < 0 || p_switch > 1) throw std::invalid_argument("ObjectiveSpec: p_switch outside [0,1]");
  if (proxies_per_class < 1) throw std::invalid_argument("ObjectiveSpec: proxies_per_class must be at least 1");
}

void ProxyBank::validate() const {
  if (classes == 0 || per_class == 0) throw std::invalid_argument("ProxyBank: empty");
  if (proxies.rows() != classes * per_class || proxies.cols() == 0)
    throw std::invalid_argument("ProxyBank: proxy matrix shape mismatch");
  if (!proxies.all_finite()) throw std::invalid_argument("ProxyBank: non-finite proxy");
}

ProxyBank init_proxy_bank(std::size_t classes, std::size_t per_class, std::size_t dim,
                          std::uint64_t seed, double learn_rate) {
  if (classes == 0 || per_class == 0 || dim == 0)
    throw std::invalid_argument("init_proxy_bank: empty shape");
  Matrix raw(classes * per_class, dim);
  Rng rng(seed);
  for (std::size_t r = 0; r < raw.rows(); ++r)
    for (std::size_t c = 0; c < dim; ++c) raw(r, c) = rng.next_gaussian();
  const EmbeddingMatrix unit = normalize_rows(raw);
  ProxyBank bank;
  bank.proxies = unit.values();
  bank.classes = classes;
  bank.per_class = per_class;
  bank.learn_rate = learn_rate;
  return bank;
}

}  // namespace dml
