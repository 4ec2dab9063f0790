#include "dml/mining.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "dml/distance.hpp"
#include "dml/rng.hpp"

namespace dml {

namespace {

struct AnchorSets {
  std::vector<std::size_t> pos, neg;
};

// One triplet per batch element that has both a same-class partner and a
// negative; anchors are visited in index order with a forked stream each, so
// results are stable under parallel reordering.
template <typename PickFn>
TupleSet mine_triplets(const LabelVector& labels, std::uint64_t seed, const char* name,
                       PickFn&& pick) {
  TupleSet out;
  out.kind = TupleKind::triplets;
  out.provenance = std::string(name) + "(seed=" + std::to_string(seed) + ")";
  const std::size_t n = labels.size();
  Rng base(seed);
  for (std::size_t a = 0; a < n; ++a) {
    AnchorSets sets;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == a) continue;
      (labels[i] == labels[a] ? sets.pos : sets.neg).push_back(i);
    }
    if (sets.pos.empty() || sets.neg.empty()) continue;
    Rng rng = base.fork(a);
    const auto [p, nn] = pick(a, sets, rng);
    out.items.push_back({a, p, nn, 0});
    out.switched.push_back(0);
  }
  return out;
}

std::size_t uniform_pick(const std::vector<std::size_t>& set, Rng& rng) {
  return set[rng.next_below(set.size())];
}

}  // namespace

TupleSet random_miner(const LabelVector& labels, std::uint64_t seed) {
  validate_labels(labels, labels.size());
  return mine_triplets(labels, seed, "random",
                       [](std::size_t, const AnchorSets& sets, Rng& rng) {
                         const std::size_t p = uniform_pick(sets.pos, rng);
                         return std::pair{p, uniform_pick(sets.neg, rng)};
                       });
}

TupleSet semihard_miner(const EmbeddingMatrix& batch, const LabelVector& labels,
                        std::uint64_t seed) {
  validate_labels(labels, batch.size());
  const Matrix& x = batch.values();
  return mine_triplets(labels, seed, "semihard",
                       [&](std::size_t a, const AnchorSets& sets, Rng& rng) {
                         const std::size_t p = uniform_pick(sets.pos, rng);
                         const double dap = euclidean_distance(x.row(a), x.row(p));
                         std::vector<std::size_t> candidates;
                         for (std::size_t nn : sets.neg)
                           if (dap < euclidean_distance(x.row(a), x.row(nn)))
                             candidates.push_back(nn);
                         const auto& pool = candidates.empty() ? sets.neg : candidates;
                         return std::pair{p, uniform_pick(pool, rng)};
                       });
}

TupleSet softhard_miner(const EmbeddingMatrix& batch, const LabelVector& labels,
                        std::uint64_t seed) {
  validate_labels(labels, batch.size());
  const Matrix& x = batch.values();
  return mine_triplets(
      labels, seed, "softhard", [&](std::size_t a, const AnchorSets& sets, Rng& rng) {
        double max_pos = 0.0, min_neg = std::numeric_limits<double>::infinity();
        for (std::size_t p : sets.pos)
          max_pos = std::max(max_pos, euclidean_distance(x.row(a), x.row(p)));
        for (std::size_t nn : sets.neg)
          min_neg = std::min(min_neg, euclidean_distance(x.row(a), x.row(nn)));

        std::vector<std::size_t> hard_pos, hard_neg;
        for (std::size_t p : sets.pos)
          if (euclidean_distance(x.row(a), x.row(p)) > min_neg) hard_pos.push_back(p);
        for (std::size_t nn : sets.neg)
          if (euclidean_distance(x.row(a), x.row(nn)) < max_pos) hard_neg.push_back(nn);

        const auto& ppool = hard_pos.empty() ? sets.pos : hard_pos;
        const auto& npool = hard_neg.empty() ? sets.neg : hard_neg;
        const std::size_t p = uniform_pick(ppool, rng);
        return std::pair{p, uniform_pick(npool, rng)};
      });
}

double log_sphere_distance_density(double d, std::size_t dim) {
  if (dim < 3) throw std::invalid_argument("sphere distance density needs dimension >= 3");
  if (d <= 0.0) return -std::numeric_limits<double>::infinity();
  const double a = (static_cast<double>(dim) - 1.0) / 2.0;
  const double log_beta = 2.0 * std::lgamma(a) - std::lgamma(2.0 * a);
  const double log_norm = -(static_cast<double>(dim) - 2.0) * std::log(2.0) - log_beta;
  // With a zero exponent the boundary term is identically zero, even at d = 2
  // where log1p(-1) diverges; clamp the argument so d marginally past 2 stays
  // on the boundary value instead of going NaN.
  const double c = (static_cast<double>(dim) - 3.0) / 2.0;
  const double tail = c == 0.0 ? 0.0 : c * std::log1p(std::max(-d * d / 4.0, -1.0));
  return log_norm + (static_cast<double>(dim) - 2.0) * std::log(d) + tail;
}

std::vector<double> distance_weighted_weights(std::span<const double> distances, std::size_t dim,
                                              const DistanceWeightedParams& params) {
  if (params.lambda_clip <= 0.0 || params.distance_clip <= 0.0 || params.distance_clip > 2.0)
    throw std::invalid_argument("distance weighting parameters out of range");
  std::vector<double> w(distances.size());
  const double log_lambda = std::log(params.lambda_clip);
  for (std::size_t k = 0; k < distances.size(); ++k) {
    const double d = std::min(distances[k], params.distance_clip);
    const double log_winv = -log_sphere_distance_density(d, dim);
    w[k] = std::exp(std::min(log_lambda, log_winv));
  }
  return w;
}

TupleSet distance_weighted_miner(const EmbeddingMatrix& batch, const LabelVector& labels,
                                 std::uint64_t seed, const DistanceWeightedParams& params) {
  validate_labels(labels, batch.size());
  if (!batch.normalized())
    throw std::invalid_argument("distance_weighted_miner: batch must be unit-normalized");
  if (batch.dim() < 3)
    throw std::invalid_argument("distance_weighted_miner: needs dimension >= 3");
  const Matrix& x = batch.values();
  return mine_triplets(
      labels, seed, "distance_weighted", [&](std::size_t a, const AnchorSets& sets, Rng& rng) {
        const std::size_t p = uniform_pick(sets.pos, rng);
        std::vector<double> d(sets.neg.size());
        for (std::size_t k = 0; k < sets.neg.size(); ++k)
          d[k] = euclidean_distance(x.row(a), x.row(sets.neg[k]));
        const std::vector<double> w = distance_weighted_weights(d, batch.dim(), params);
        double total = 0.0;
        for (double v : w) total += v;
        const double u = rng.next_double() * total;
        double acc = 0.0;
        std::size_t pick = sets.neg.size() - 1;
        for (std::size_t k = 0; k < sets.neg.size(); ++k) {
          acc += w[k];
          if (u < acc) {
            pick = k;
            break;
          }
        }
        return std::pair{p, sets.neg[pick]};
      });
}

TupleSet rho_regularize_tuples(const TupleSet& tuples, const LabelVector& labels,
                               double p_switch, std::uint64_t seed) {
  if (p_switch < 0.0 || p_switch > 1.0)
    throw std::invalid_argument("rho_regularize_tuples: p_switch outside [0,1]");
  if (tuples.kind == TupleKind::quadruplets)
    throw std::invalid_argument("rho_regularize_tuples: pairs or triplets only");
  validate_labels(labels, labels.size());

  TupleSet out = tuples;
  out.switched.assign(tuples.size(), 0);
  for (std::size_t t = 0; t < tuples.size(); ++t)
    if (!tuples.switched.empty()) out.switched[t] = tuples.switched[t];
  out.provenance += "|switch(p=" + std::to_string(p_switch) +
                    ",seed=" + std::to_string(seed) + ")";

  Rng rng(seed);
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (rng.next_double() >= p_switch) continue;
    out.switched[t] ^= 1;
    if (out.kind == TupleKind::triplets) std::swap(out.items[t][1], out.items[t][2]);
  }
  return out;
}

TupleSet exhaustive_pairs(const LabelVector& labels) {
  validate_labels(labels, labels.size());
  TupleSet out;
  out.kind = TupleKind::pairs;
  out.provenance = "exhaustive";
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      out.items.push_back({i, j, 0, 0});
      out.switched.push_back(0);
    }
  return out;
}

}  // namespace dml
