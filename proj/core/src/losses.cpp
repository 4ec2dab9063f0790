#include "dml/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dml/distance.hpp"

namespace dml {

namespace {

LossOutput zeros_like(const EmbeddingMatrix& batch) {
  LossOutput out;
  out.grad_embeddings = Matrix(batch.size(), batch.dim());
  return out;
}

// d(i,j) and the convention that the (sub)gradient of ||a-b|| at a==b is zero.
void add_distance_grad(Matrix& grad, const Matrix& x, std::size_t i, std::size_t j, double d,
                       double scale) {
  if (d <= 0.0) return;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    const double u = (x(i, c) - x(j, c)) / d;
    grad(i, c) += scale * u;
    grad(j, c) -= scale * u;
  }
}

struct PairView {
  std::size_t i, j;
  bool positive;
};

std::vector<PairView> resolve_pairs(const TupleSet& tuples, const LabelVector& labels,
                                    std::size_t n) {
  if (tuples.kind != TupleKind::pairs)
    throw std::invalid_argument("expected a pair tuple set");
  tuples.validate(n);
  std::vector<PairView> out;
  out.reserve(tuples.size());
  for (std::size_t t = 0; t < tuples.size(); ++t) {
    const std::size_t i = tuples.items[t][0];
    const std::size_t j = tuples.items[t][1];
    const bool same = labels[i] == labels[j];
    out.push_back({i, j, same != tuples.is_switched(t)});
  }
  return out;
}

struct TripletView {
  std::size_t a, p, n;
};

std::vector<TripletView> resolve_triplets(const TupleSet& tuples, const LabelVector& labels,
                                          std::size_t n) {
  if (tuples.kind != TupleKind::triplets)
    throw std::invalid_argument("expected a triplet tuple set");
  tuples.validate(n);
  std::vector<TripletView> out;
  out.reserve(tuples.size());
  for (std::size_t t = 0; t < tuples.size(); ++t) {
    const auto& it = tuples.items[t];
    if (!tuples.is_switched(t)) {
      if (labels[it[0]] != labels[it[1]])
        throw std::invalid_argument("triplet " + std::to_string(t) + ": positive class mismatch");
      if (labels[it[0]] == labels[it[2]])
        throw std::invalid_argument("triplet " + std::to_string(t) + ": negative shares class");
    }
    out.push_back({it[0], it[1], it[2]});
  }
  return out;
}

// Accumulates the hinged triplet terms into grad with the given per-tuple
// weight; returns the weighted sum of active hinges.
double triplet_terms(const Matrix& x, const std::vector<TripletView>& triplets, double gamma,
                     double weight, Matrix& grad) {
  double value = 0.0;
  for (const auto& t : triplets) {
    const double dap = euclidean_distance(x.row(t.a), x.row(t.p));
    const double dan = euclidean_distance(x.row(t.a), x.row(t.n));
    const double h = dap - dan + gamma;
    if (h <= 0.0) continue;
    value += weight * h;
    add_distance_grad(grad, x, t.a, t.p, dap, weight);
    add_distance_grad(grad, x, t.a, t.n, dan, -weight);
  }
  return value;
}

std::set<int> present_classes(const LabelVector& labels) {
  return {labels.begin(), labels.end()};
}

void require_classes(const LabelVector& labels, std::size_t at_least, const char* who) {
  if (present_classes(labels).size() < at_least)
    throw std::invalid_argument(std::string(who) + ": batch needs at least " +
                                std::to_string(at_least) + " classes");
}

// log(sum exp(v)) and the softmax weights, computed with a max shift.
double log_sum_exp(const std::vector<double>& v, std::vector<double>* softmax = nullptr) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  if (softmax) {
    softmax->resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) (*softmax)[i] = std::exp(v[i] - m) / s;
  }
  return m + std::log(std::max(s, 1e-30));
}

void check_proxy_batch(const EmbeddingMatrix& batch, const LabelVector& labels,
                       const ProxyBank& bank, const char* who) {
  bank.validate();
  if (bank.dim() != batch.dim())
    throw std::invalid_argument(std::string(who) + ": proxy dimension mismatch");
  for (int y : labels)
    if (static_cast<std::size_t>(y) >= bank.classes)
      throw std::invalid_argument(std::string(who) + ": class " + std::to_string(y) +
                                  " has no proxy row");
}

double sum_squared_norms(const Matrix& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (double v : x.row(i)) s += v * v;
  return s;
}

}  // namespace

LossOutput contrastive_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                            const TupleSet& pairs, const ObjectiveSpec& spec) {
  spec.validate();
  validate_labels(labels, batch.size());
  LossOutput out = zeros_like(batch);
  const auto resolved = resolve_pairs(pairs, labels, batch.size());
  if (resolved.empty()) return out;

  const Matrix& x = batch.values();
  const double w = 1.0 / static_cast<double>(resolved.size());
  for (const auto& pr : resolved) {
    const double d = euclidean_distance(x.row(pr.i), x.row(pr.j));
    if (pr.positive) {
      out.value += w * d;
      add_distance_grad(out.grad_embeddings, x, pr.i, pr.j, d, w);
    } else if (spec.gamma - d > 0.0) {
      out.value += w * (spec.gamma - d);
      add_distance_grad(out.grad_embeddings, x, pr.i, pr.j, d, -w);
    }
  }
  return out;
}

LossOutput triplet_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                        const TupleSet& triplets, const ObjectiveSpec& spec) {
  spec.validate();
  validate_labels(labels, batch.size());
  LossOutput out = zeros_like(batch);
  const auto resolved = resolve_triplets(triplets, labels, batch.size());
  if (resolved.empty()) return out;
  out.value = triplet_terms(batch.values(), resolved, spec.gamma,
                            1.0 / static_cast<double>(resolved.size()), out.grad_embeddings);
  return out;
}

LossOutput margin_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                       const TupleSet& pairs, const ObjectiveSpec& spec, double beta) {
  spec.validate();
  validate_labels(labels, batch.size());
  LossOutput out = zeros_like(batch);
  const auto resolved = resolve_pairs(pairs, labels, batch.size());

  const Matrix& x = batch.values();
  for (const auto& pr : resolved) {
    const double d = euclidean_distance(x.row(pr.i), x.row(pr.j));
    // positive pairs push d below beta, negatives push it above, both with
    // slack gamma; summed, not averaged.
    const double sign = pr.positive ? 1.0 : -1.0;
    const double h = spec.gamma + sign * (d - beta);
    if (h <= 0.0) continue;
    out.value += h;
    add_distance_grad(out.grad_embeddings, x, pr.i, pr.j, d, sign);
    out.grad_beta -= sign;
  }
  return out;
}

LossOutput generalized_lifted_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                                   const ObjectiveSpec& spec) {
  spec.validate();
  validate_labels(labels, batch.size());
  require_classes(labels, 2, "generalized_lifted_loss");
  const Matrix& x = batch.values();
  const std::size_t n = batch.size();
  LossOutput out = zeros_like(batch);

  std::size_t anchors = 0;
  Matrix hinge_grad(n, batch.dim());
  double hinge_value = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == a) continue;
      (labels[i] == labels[a] ? pos : neg).push_back(i);
    }
    if (pos.empty()) continue;
    ++anchors;

    std::vector<double> pd(pos.size()), nd(neg.size());
    for (std::size_t k = 0; k < pos.size(); ++k)
      pd[k] = euclidean_distance(x.row(a), x.row(pos[k]));
    for (std::size_t k = 0; k < neg.size(); ++k)
      nd[k] = spec.gamma - euclidean_distance(x.row(a), x.row(neg[k]));

    std::vector<double> wp, wn;
    const double term = log_sum_exp(pd, &wp) + log_sum_exp(nd, &wn);
    if (term <= 0.0) continue;
    hinge_value += term;
    for (std::size_t k = 0; k < pos.size(); ++k)
      add_distance_grad(hinge_grad, x, a, pos[k], pd[k], wp[k]);
    for (std::size_t k = 0; k < neg.size(); ++k) {
      const double d = spec.gamma - nd[k];
      add_distance_grad(hinge_grad, x, a, neg[k], d, -wn[k]);
    }
  }

  const double wa = anchors > 0 ? 1.0 / static_cast<double>(anchors) : 0.0;
  out.value = wa * hinge_value;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < batch.dim(); ++c)
      out.grad_embeddings(i, c) = wa * hinge_grad(i, c) + spec.nu * 2.0 * x(i, c) / n;
  out.value += spec.nu * sum_squared_norms(x) / n;
  return out;
}

namespace {

// Shared skeleton of npair and angular: mean over ordered same-class pairs of
// log(1 + sum_n exp(score(a, p, n))), with per-negative softmax-style weights
// fed back through score gradients.
struct NpairPair {
  std::size_t a, p;
  std::vector<std::size_t> negs;
};

std::vector<NpairPair> npair_pairs(const LabelVector& labels) {
  const std::size_t n = labels.size();
  std::vector<NpairPair> pairs;
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<std::size_t> negs;
    for (std::size_t i = 0; i < n; ++i)
      if (labels[i] != labels[a]) negs.push_back(i);
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      pairs.push_back({a, p, negs});
    }
  }
  return pairs;
}

// log(1 + sum exp(f)) and weights exp(f_k) / (1 + sum exp(f)).
double log1p_sum_exp(const std::vector<double>& f, std::vector<double>& weights) {
  double m = 0.0;
  for (double v : f) m = std::max(m, v);
  double s = std::exp(-m);  // the "1 +" term
  for (double v : f) s += std::exp(v - m);
  weights.resize(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) weights[k] = std::exp(f[k] - m) / s;
  return m + std::log(s);
}

}  // namespace

LossOutput npair_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                      const ObjectiveSpec& spec) {
  spec.validate();
  validate_labels(labels, batch.size());
  const Matrix& x = batch.values();
  const std::size_t n = batch.size();
  const std::size_t d = batch.dim();
  LossOutput out = zeros_like(batch);

  const auto pairs = npair_pairs(labels);
  const double w = pairs.empty() ? 0.0 : 1.0 / static_cast<double>(pairs.size());
  for (const auto& pr : pairs) {
    std::vector<double> f(pr.negs.size());
    for (std::size_t k = 0; k < pr.negs.size(); ++k)
      f[k] = dot(x.row(pr.a), x.row(pr.negs[k])) - dot(x.row(pr.a), x.row(pr.p));
    std::vector<double> wk;
    out.value += w * log1p_sum_exp(f, wk);
    double wsum = 0.0;
    for (std::size_t k = 0; k < pr.negs.size(); ++k) {
      const std::size_t nn = pr.negs[k];
      wsum += wk[k];
      for (std::size_t c = 0; c < d; ++c) {
        out.grad_embeddings(pr.a, c) += w * wk[k] * x(nn, c);
        out.grad_embeddings(nn, c) += w * wk[k] * x(pr.a, c);
      }
    }
    for (std::size_t c = 0; c < d; ++c) {
      out.grad_embeddings(pr.a, c) -= w * wsum * x(pr.p, c);
      out.grad_embeddings(pr.p, c) -= w * wsum * x(pr.a, c);
    }
  }

  out.value += spec.nu * sum_squared_norms(x) / n;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) out.grad_embeddings(i, c) += spec.nu * 2.0 * x(i, c) / n;
  return out;
}

LossOutput angular_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                        const ObjectiveSpec& spec) {
  LossOutput out = npair_loss(batch, labels, spec);
  const Matrix& x = batch.values();
  const std::size_t d = batch.dim();

  const double t2 = std::tan(spec.alpha) * std::tan(spec.alpha);
  const double c1 = 4.0 * t2;
  const double c2 = 2.0 * (1.0 + t2);

  const auto pairs = npair_pairs(labels);
  if (pairs.empty() || spec.angular_lambda == 0.0) return out;
  const double w = spec.angular_lambda / static_cast<double>(pairs.size());
  for (const auto& pr : pairs) {
    std::vector<double> f(pr.negs.size());
    const double sap = dot(x.row(pr.a), x.row(pr.p));
    for (std::size_t k = 0; k < pr.negs.size(); ++k) {
      const std::size_t nn = pr.negs[k];
      double san_ap = 0.0;
      for (std::size_t c = 0; c < d; ++c) san_ap += (x(pr.a, c) + x(pr.p, c)) * x(nn, c);
      f[k] = c1 * san_ap - c2 * sap;
    }
    std::vector<double> wk;
    out.value += w * log1p_sum_exp(f, wk);
    double wsum = 0.0;
    for (std::size_t k = 0; k < pr.negs.size(); ++k) {
      const std::size_t nn = pr.negs[k];
      wsum += wk[k];
      for (std::size_t c = 0; c < d; ++c) {
        out.grad_embeddings(pr.a, c) += w * wk[k] * c1 * x(nn, c);
        out.grad_embeddings(pr.p, c) += w * wk[k] * c1 * x(nn, c);
        out.grad_embeddings(nn, c) += w * wk[k] * c1 * (x(pr.a, c) + x(pr.p, c));
      }
    }
    for (std::size_t c = 0; c < d; ++c) {
      out.grad_embeddings(pr.a, c) -= w * wsum * c2 * x(pr.p, c);
      out.grad_embeddings(pr.p, c) -= w * wsum * c2 * x(pr.a, c);
    }
  }
  return out;
}

LossOutput arcface_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                        const ProxyBank& centers, const ObjectiveSpec& spec) {
  spec.validate();
  validate_labels(labels, batch.size());
  check_proxy_batch(batch, labels, centers, "arcface_loss");
  if (centers.per_class != 1)
    throw std::invalid_argument("arcface_loss: expects one weight row per class");

  const Matrix& x = batch.values();
  const std::size_t n = batch.size();
  const std::size_t d = batch.dim();
  LossOutput out = zeros_like(batch);
  out.grad_proxies = Matrix(centers.proxies.rows(), d);

  const std::set<int> seen = present_classes(labels);
  const std::vector<int> classes(seen.begin(), seen.end());
  const std::size_t nc = classes.size();

  // Unit rows of W; angles use these, gradients chain through the division.
  Matrix what(nc, d);
  std::vector<double> wnorm(nc);
  for (std::size_t ci = 0; ci < nc; ++ci) {
    const auto wrow = centers.proxy(static_cast<std::size_t>(classes[ci]), 0);
    double s = 0.0;
    for (double v : wrow) s += v * v;
    wnorm[ci] = std::sqrt(s);
    if (wnorm[ci] < 1e-12)
      throw std::invalid_argument("arcface_loss: zero weight row for class " +
                                  std::to_string(classes[ci]));
    for (std::size_t c = 0; c < d; ++c) what(ci, c) = wrow[c] / wnorm[ci];
  }

  const double clamp_lo = -1.0 + 1e-7;
  const double clamp_hi = 1.0 - 1e-7;
  const double margin = spec.gamma;
  const double w = 1.0 / static_cast<double>(n);

  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> raw(nc), cosv(nc), logits(nc), dlogit_dcos(nc);
    std::vector<bool> clamped(nc);
    std::size_t yi = nc;
    for (std::size_t ci = 0; ci < nc; ++ci) {
      raw[ci] = dot(what.row(ci), x.row(i));
      cosv[ci] = std::clamp(raw[ci], clamp_lo, clamp_hi);
      clamped[ci] = raw[ci] != cosv[ci];
      if (classes[ci] == labels[i]) yi = ci;
    }
    for (std::size_t ci = 0; ci < nc; ++ci) {
      if (ci == yi) {
        const double theta = std::acos(cosv[ci]);
        logits[ci] = spec.scale * std::cos(theta + margin);
        dlogit_dcos[ci] = spec.scale * std::sin(theta + margin) / std::sin(theta);
      } else {
        logits[ci] = spec.scale * cosv[ci];
        dlogit_dcos[ci] = spec.scale;
      }
    }
    std::vector<double> p;
    out.value += w * (log_sum_exp(logits, &p) - logits[yi]);
    for (std::size_t ci = 0; ci < nc; ++ci) {
      if (clamped[ci]) continue;
      const double g = w * (p[ci] - (ci == yi ? 1.0 : 0.0)) * dlogit_dcos[ci];
      const std::size_t wr = centers.row_of(static_cast<std::size_t>(classes[ci]), 0);
      for (std::size_t c = 0; c < d; ++c) {
        out.grad_embeddings(i, c) += g * what(ci, c);
        out.grad_proxies(wr, c) += g * (x(i, c) - raw[ci] * what(ci, c)) / wnorm[ci];
      }
    }
  }
  return out;
}

LossOutput histogram_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                          const ObjectiveSpec& spec) {
  spec.validate();
  validate_labels(labels, batch.size());
  require_classes(labels, 2, "histogram_loss");
  const Matrix& x = batch.values();
  const std::size_t n = batch.size();
  const std::size_t d = batch.dim();
  const std::size_t R = static_cast<std::size_t>(spec.bins);
  const double delta = 2.0 / static_cast<double>(R - 1);

  struct SimPair {
    std::size_t i, j;
    double s;
    std::size_t node;   // lower of the two nodes the similarity splits across
    double frac;        // share assigned to node+1
    bool clamped;       // similarity outside [-1,1]; mass pinned, no gradient
  };
  std::vector<SimPair> pos, neg;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double raw = dot(x.row(i), x.row(j));
      SimPair sp{i, j, std::clamp(raw, -1.0, 1.0), 0, 0.0, raw != std::clamp(raw, -1.0, 1.0)};
      const double u = (sp.s + 1.0) / delta;
      sp.node = std::min(static_cast<std::size_t>(u), R - 2);
      sp.frac = u - static_cast<double>(sp.node);
      (labels[i] == labels[j] ? pos : neg).push_back(sp);
    }
  }
  if (pos.empty()) throw std::invalid_argument("histogram_loss: no positive pairs");

  std::vector<double> hp(R, 0.0), hn(R, 0.0);
  for (const auto& sp : pos) {
    hp[sp.node] += (1.0 - sp.frac) / pos.size();
    hp[sp.node + 1] += sp.frac / pos.size();
  }
  for (const auto& sp : neg) {
    hn[sp.node] += (1.0 - sp.frac) / neg.size();
    hn[sp.node + 1] += sp.frac / neg.size();
  }

  // L = sum_r hn[r] * cdfp[r]; dL/dhp[q] = suffn[q], dL/dhn[r] = cdfp[r].
  std::vector<double> cdfp(R), suffn(R);
  double acc = 0.0;
  for (std::size_t r = 0; r < R; ++r) cdfp[r] = (acc += hp[r]);
  acc = 0.0;
  for (std::size_t r = R; r-- > 0;) suffn[r] = (acc += hn[r]);

  LossOutput out = zeros_like(batch);
  for (std::size_t r = 0; r < R; ++r) out.value += hn[r] * cdfp[r];

  auto backprop = [&](const std::vector<SimPair>& set, const std::vector<double>& node_grad,
                      double inv_count) {
    for (const auto& sp : set) {
      if (sp.clamped) continue;
      // moving s up shifts mass from node to node+1
      const double gs = (node_grad[sp.node + 1] - node_grad[sp.node]) / delta * inv_count;
      for (std::size_t c = 0; c < d; ++c) {
        out.grad_embeddings(sp.i, c) += gs * x(sp.j, c);
        out.grad_embeddings(sp.j, c) += gs * x(sp.i, c);
      }
    }
  };
  backprop(pos, suffn, 1.0 / pos.size());
  backprop(neg, cdfp, 1.0 / neg.size());
  return out;
}

LossOutput multisimilarity_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                                const ObjectiveSpec& spec) {
  spec.validate();
  validate_labels(labels, batch.size());
  const Matrix& x = batch.values();
  const std::size_t n = batch.size();
  const std::size_t d = batch.dim();
  LossOutput out = zeros_like(batch);
  const double w = 1.0 / static_cast<double>(n);

  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> pos, neg;
    std::vector<double> spos, sneg;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double s = dot(x.row(i), x.row(j));
      if (labels[j] == labels[i]) {
        pos.push_back(j);
        spos.push_back(s);
      } else {
        neg.push_back(j);
        sneg.push_back(s);
      }
    }
    // keep hard negatives (above the easiest positive minus eps) and hard
    // positives (below the hardest negative plus eps); either set empties
    // when its reference set is missing.
    std::vector<std::size_t> kp, kn;
    std::vector<double> fp, fn;
    if (!neg.empty()) {
      const double hardest_neg = *std::max_element(sneg.begin(), sneg.end());
      for (std::size_t k = 0; k < pos.size(); ++k) {
        if (spos[k] < hardest_neg + spec.msim_epsilon) {
          kp.push_back(pos[k]);
          fp.push_back(-spec.alpha * (spos[k] - spec.msim_lambda));
        }
      }
    }
    if (!pos.empty()) {
      const double easiest_pos = *std::min_element(spos.begin(), spos.end());
      for (std::size_t k = 0; k < neg.size(); ++k) {
        if (sneg[k] > easiest_pos - spec.msim_epsilon) {
          kn.push_back(neg[k]);
          fn.push_back(spec.msim_beta * (sneg[k] - spec.msim_lambda));
        }
      }
    }

    std::vector<double> wk;
    if (!kp.empty()) {
      out.value += w / spec.alpha * log1p_sum_exp(fp, wk);
      for (std::size_t k = 0; k < kp.size(); ++k) {
        const double gs = -w * wk[k];  // (1/alpha) * (-alpha) * softmax weight
        for (std::size_t c = 0; c < d; ++c) {
          out.grad_embeddings(i, c) += gs * x(kp[k], c);
          out.grad_embeddings(kp[k], c) += gs * x(i, c);
        }
      }
    }
    if (!kn.empty()) {
      out.value += w / spec.msim_beta * log1p_sum_exp(fn, wk);
      for (std::size_t k = 0; k < kn.size(); ++k) {
        const double gs = w * wk[k];
        for (std::size_t c = 0; c < d; ++c) {
          out.grad_embeddings(i, c) += gs * x(kn[k], c);
          out.grad_embeddings(kn[k], c) += gs * x(i, c);
        }
      }
    }
  }
  return out;
}

LossOutput proxynca_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                         const ProxyBank& proxies, const ObjectiveSpec& spec) {
  spec.validate();
  validate_labels(labels, batch.size());
  check_proxy_batch(batch, labels, proxies, "proxynca_loss");
  if (proxies.per_class != 1)
    throw std::invalid_argument("proxynca_loss: expects one proxy per class");
  if (proxies.classes < 2) throw std::invalid_argument("proxynca_loss: needs at least 2 classes");

  const Matrix& x = batch.values();
  const std::size_t n = batch.size();
  const std::size_t d = batch.dim();
  LossOutput out = zeros_like(batch);
  out.grad_proxies = Matrix(proxies.proxies.rows(), d);
  const double w = 1.0 / static_cast<double>(n);

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = static_cast<std::size_t>(labels[i]);
    std::vector<double> nd;  // -d over every non-true class in the bank
    std::vector<std::size_t> cs;
    for (std::size_t c = 0; c < proxies.classes; ++c) {
      if (c == y) continue;
      nd.push_back(-euclidean_distance(x.row(i), proxies.proxy(c, 0)));
      cs.push_back(c);
    }
    const double dy = euclidean_distance(x.row(i), proxies.proxy(y, 0));
    std::vector<double> u;
    out.value += w * (dy + log_sum_exp(nd, &u));

    if (dy > 0.0) {
      for (std::size_t c = 0; c < d; ++c) {
        const double g = w * (x(i, c) - proxies.proxies(y, c)) / dy;
        out.grad_embeddings(i, c) += g;
        out.grad_proxies(y, c) -= g;
      }
    }
    for (std::size_t k = 0; k < cs.size(); ++k) {
      const double dc = -nd[k];
      if (dc <= 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) {
        const double g = w * u[k] * (x(i, c) - proxies.proxies(cs[k], c)) / dc;
        out.grad_embeddings(i, c) -= g;
        out.grad_proxies(cs[k], c) += g;
      }
    }
  }
  return out;
}

LossOutput quadruplet_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                           const TupleSet& quadruplets, const ObjectiveSpec& spec) {
  spec.validate();
  validate_labels(labels, batch.size());
  if (quadruplets.kind != TupleKind::quadruplets)
    throw std::invalid_argument("quadruplet_loss: expected a quadruplet set");
  quadruplets.validate(batch.size());
  LossOutput out = zeros_like(batch);
  if (quadruplets.empty()) return out;

  const Matrix& x = batch.values();
  const double w = 1.0 / static_cast<double>(quadruplets.size());
  for (std::size_t t = 0; t < quadruplets.size(); ++t) {
    const auto& q = quadruplets.items[t];
    const std::size_t a = q[0], p = q[1], n1 = q[2], n2 = q[3];
    if (labels[a] != labels[p] || labels[n1] == labels[a] || labels[n2] == labels[n1] ||
        labels[n2] == labels[a])
      throw std::invalid_argument("quadruplet_loss: class constraints violated in tuple " +
                                  std::to_string(t));
    const double dap = euclidean_distance(x.row(a), x.row(p));
    const double dan1 = euclidean_distance(x.row(a), x.row(n1));
    const double dn2n1 = euclidean_distance(x.row(n2), x.row(n1));
    const double h1 = dap - dan1 + spec.gamma;
    if (h1 > 0.0) {
      out.value += w * h1;
      add_distance_grad(out.grad_embeddings, x, a, p, dap, w);
      add_distance_grad(out.grad_embeddings, x, a, n1, dan1, -w);
    }
    const double h2 = dan1 - dn2n1 + spec.gamma2;
    if (h2 > 0.0) {
      out.value += w * h2;
      add_distance_grad(out.grad_embeddings, x, a, n1, dan1, w);
      add_distance_grad(out.grad_embeddings, x, n2, n1, dn2n1, -w);
    }
  }
  return out;
}

namespace {

// Coordinate variance around the coordinate mean, times the dimension; the
// shared factor cancels in the ratio. Gradient is 2 * (v - mean(v)).
double centered_sq(std::span<const double> v, std::vector<double>& centered) {
  double mean = 0.0;
  for (double e : v) mean += e;
  mean /= static_cast<double>(v.size());
  centered.resize(v.size());
  double s = 0.0;
  for (std::size_t m = 0; m < v.size(); ++m) {
    centered[m] = v[m] - mean;
    s += centered[m] * centered[m];
  }
  return s;
}

}  // namespace

LossOutput snr_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                    const TupleSet& triplets, const ObjectiveSpec& spec) {
  spec.validate();
  validate_labels(labels, batch.size());
  const Matrix& x = batch.values();
  const std::size_t n = batch.size();
  const std::size_t d = batch.dim();
  LossOutput out = zeros_like(batch);
  const auto resolved = resolve_triplets(triplets, labels, batch.size());

  const double w = resolved.empty() ? 0.0 : 1.0 / static_cast<double>(resolved.size());
  std::vector<double> ca, cp, cn, diff(d);
  for (const auto& t : resolved) {
    const double va = centered_sq(x.row(t.a), ca);
    if (va < 1e-30)
      throw std::invalid_argument("snr_loss: zero-variance anchor (all coordinates equal)");

    auto noise_var = [&](std::size_t other, std::vector<double>& centered) {
      for (std::size_t m = 0; m < d; ++m) diff[m] = x(other, m) - x(t.a, m);
      return centered_sq(diff, centered);
    };
    const double vp = noise_var(t.p, cp);
    const double vn = noise_var(t.n, cn);
    const double snr_p = vp / va;
    const double snr_n = vn / va;
    const double h = snr_p - snr_n + spec.gamma;
    if (h <= 0.0) continue;
    out.value += w * h;
    for (std::size_t m = 0; m < d; ++m) {
      out.grad_embeddings(t.p, m) += w * 2.0 * cp[m] / va;
      out.grad_embeddings(t.n, m) -= w * 2.0 * cn[m] / va;
      out.grad_embeddings(t.a, m) +=
          w * (-2.0 * cp[m] / va + 2.0 * cn[m] / va - (snr_p - snr_n) * 2.0 * ca[m] / va);
    }
  }

  // zero-mean penalty over the whole batch
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v;
    out.value += spec.snr_lambda / n * std::fabs(s);
    const double g = spec.snr_lambda / n * (s > 0.0 ? 1.0 : (s < 0.0 ? -1.0 : 0.0));
    for (std::size_t m = 0; m < d; ++m) out.grad_embeddings(i, m) += g;
  }
  return out;
}

LossOutput softtriple_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                           const ProxyBank& proxies, const ObjectiveSpec& spec) {
  spec.validate();
  validate_labels(labels, batch.size());
  check_proxy_batch(batch, labels, proxies, "softtriple_loss");
  for (std::size_t r = 0; r < proxies.proxies.rows(); ++r) {
    double s = 0.0;
    for (double v : proxies.proxies.row(r)) s += v * v;
    if (std::fabs(std::sqrt(s) - 1.0) > 1e-3)
      throw std::invalid_argument("softtriple_loss: proxies not normalized");
  }

  const Matrix& x = batch.values();
  const std::size_t n = batch.size();
  const std::size_t d = batch.dim();
  const std::size_t P = proxies.per_class;
  LossOutput out = zeros_like(batch);
  out.grad_proxies = Matrix(proxies.proxies.rows(), d);

  const std::set<int> seen = present_classes(labels);
  const std::vector<int> classes(seen.begin(), seen.end());
  const std::size_t nc = classes.size();
  const double w = 1.0 / static_cast<double>(n);

  for (std::size_t i = 0; i < n; ++i) {
    // within-class attention over proxies, then class logits
    Matrix att(nc, P);
    std::vector<double> S(nc), z(nc);
    std::size_t yi = nc;
    for (std::size_t ci = 0; ci < nc; ++ci) {
      const auto cls = static_cast<std::size_t>(classes[ci]);
      if (classes[ci] == labels[i]) yi = ci;
      std::vector<double> q(P);
      for (std::size_t k = 0; k < P; ++k) q[k] = dot(x.row(i), proxies.proxy(cls, k));
      std::vector<double> scaled(P);
      for (std::size_t k = 0; k < P; ++k) scaled[k] = q[k] / spec.st_gamma;
      std::vector<double> u;
      log_sum_exp(scaled, &u);
      double sc = 0.0;
      for (std::size_t k = 0; k < P; ++k) sc += u[k] * q[k];
      S[ci] = sc;
      for (std::size_t k = 0; k < P; ++k) att(ci, k) = u[k];
      z[ci] = spec.st_lambda * (sc - (ci == yi ? spec.st_delta : 0.0));
    }
    std::vector<double> p;
    out.value += w * (log_sum_exp(z, &p) - z[yi]);
    for (std::size_t ci = 0; ci < nc; ++ci) {
      const auto cls = static_cast<std::size_t>(classes[ci]);
      const double gS = w * (p[ci] - (ci == yi ? 1.0 : 0.0)) * spec.st_lambda;
      for (std::size_t k = 0; k < P; ++k) {
        const double q = dot(x.row(i), proxies.proxy(cls, k));
        const double dS_dq = att(ci, k) * (1.0 + (q - S[ci]) / spec.st_gamma);
        const std::size_t pr = proxies.row_of(cls, k);
        for (std::size_t c = 0; c < d; ++c) {
          out.grad_embeddings(i, c) += gS * dS_dq * proxies.proxies(pr, c);
          out.grad_proxies(pr, c) += gS * dS_dq * x(i, c);
        }
      }
    }
  }

  // sparsity regularizer over the proxies of classes in the batch
  if (P > 1) {
    const double denom = static_cast<double>(nc) * static_cast<double>(nc * P) *
                         static_cast<double>(nc * P - 1);
    double reg = 0.0;
    for (std::size_t ci = 0; ci < nc; ++ci) {
      const auto cls = static_cast<std::size_t>(classes[ci]);
      for (std::size_t k1 = 0; k1 < P; ++k1) {
        for (std::size_t k2 = 0; k2 < P; ++k2) {
          if (k1 == k2) continue;
          const double t = dot(proxies.proxy(cls, k1), proxies.proxy(cls, k2));
          const double arg = 2.0 - 2.0 * t;
          if (arg < 1e-12) continue;  // coincident proxies: term 0, flat
          const double root = std::sqrt(arg);
          reg += root;
          const double gt = -spec.st_tau / denom / root;
          const std::size_t r1 = proxies.row_of(cls, k1);
          const std::size_t r2 = proxies.row_of(cls, k2);
          for (std::size_t c = 0; c < d; ++c) {
            out.grad_proxies(r1, c) += gt * proxies.proxies(r2, c);
            out.grad_proxies(r2, c) += gt * proxies.proxies(r1, c);
          }
        }
      }
    }
    out.value += spec.st_tau * reg / denom;
  }
  return out;
}

LossOutput normalized_softmax_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                                   const ProxyBank& proxies, const ObjectiveSpec& spec) {
  spec.validate();
  validate_labels(labels, batch.size());
  check_proxy_batch(batch, labels, proxies, "normalized_softmax_loss");
  if (proxies.per_class != 1)
    throw std::invalid_argument("normalized_softmax_loss: expects one proxy per class");
  require_classes(labels, 2, "normalized_softmax_loss");

  const Matrix& x = batch.values();
  const std::size_t n = batch.size();
  const std::size_t d = batch.dim();
  LossOutput out = zeros_like(batch);
  out.grad_proxies = Matrix(proxies.proxies.rows(), d);

  const std::set<int> seen = present_classes(labels);
  const std::vector<int> classes(seen.begin(), seen.end());
  const double w = 1.0 / static_cast<double>(n);

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = static_cast<std::size_t>(labels[i]);
    std::vector<double> f;
    std::vector<std::size_t> cs;
    for (int cls : classes) {
      if (static_cast<std::size_t>(cls) == y) continue;
      cs.push_back(static_cast<std::size_t>(cls));
      f.push_back(dot(x.row(i), proxies.proxy(static_cast<std::size_t>(cls), 0)) /
                  spec.temperature);
    }
    const double ly = dot(x.row(i), proxies.proxy(y, 0)) / spec.temperature;
    std::vector<double> u;
    out.value += w * (log_sum_exp(f, &u) - ly);
    for (std::size_t c = 0; c < d; ++c) {
      out.grad_embeddings(i, c) -= w * proxies.proxies(y, c) / spec.temperature;
      out.grad_proxies(y, c) -= w * x(i, c) / spec.temperature;
    }
    for (std::size_t k = 0; k < cs.size(); ++k) {
      for (std::size_t c = 0; c < d; ++c) {
        out.grad_embeddings(i, c) += w * u[k] * proxies.proxies(cs[k], c) / spec.temperature;
        out.grad_proxies(cs[k], c) += w * u[k] * x(i, c) / spec.temperature;
      }
    }
  }
  return out;
}

LossOutput mixup_triplet_loss(const MixupBatch& batch, const TupleSet& triplets_primary,
                              const TupleSet& triplets_secondary, const ObjectiveSpec& spec) {
  spec.validate();
  const double l1 = batch.lambda_primary;
  const double l2 = batch.lambda_secondary;
  if (l1 < 0.0 || l1 > 1.0 || l2 < 0.0 || l2 > 1.0)
    throw std::invalid_argument("mixup_triplet_loss: weights outside [0,1]");
  if (std::fabs(l1 + l2 - 1.0) > 1e-9)
    throw std::invalid_argument("mixup_triplet_loss: weights must sum to 1");
  validate_labels(batch.labels_primary, batch.embeddings.size());
  validate_labels(batch.labels_secondary, batch.embeddings.size());

  LossOutput out = zeros_like(batch.embeddings);
  const Matrix& x = batch.embeddings.values();
  const auto t1 = resolve_triplets(triplets_primary, batch.labels_primary, x.rows());
  const auto t2 = resolve_triplets(triplets_secondary, batch.labels_secondary, x.rows());
  if (!t1.empty())
    out.value += triplet_terms(x, t1, spec.gamma, l1 / static_cast<double>(t1.size()),
                               out.grad_embeddings);
  if (!t2.empty())
    out.value += triplet_terms(x, t2, spec.gamma, l2 / static_cast<double>(t2.size()),
                               out.grad_embeddings);
  return out;
}

}  // namespace dml
