#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dml/matrix.hpp"
#include "dml/tuples.hpp"

namespace dml {

// Miners emit one triplet per eligible anchor (an element with at least one
// same-class partner and at least one other-class element in the batch);
// per-anchor draws come from streams forked off (seed, anchor index), so
// anchors can be mined in any order or in parallel without changing output.

TupleSet random_miner(const LabelVector& labels, std::uint64_t seed);

TupleSet semihard_miner(const EmbeddingMatrix& batch, const LabelVector& labels,
                        std::uint64_t seed);

TupleSet softhard_miner(const EmbeddingMatrix& batch, const LabelVector& labels,
                        std::uint64_t seed);

struct DistanceWeightedParams {
  double lambda_clip = 0.5;   // weight ceiling
  double distance_clip = 1.4; // distances above this evaluate as this
};

// Negatives drawn with probability proportional to min(lambda_clip, 1/q(d)),
// q being the pairwise-distance density on the unit sphere in D dimensions.
// Requires a normalized batch and D >= 3.
TupleSet distance_weighted_miner(const EmbeddingMatrix& batch, const LabelVector& labels,
                                 std::uint64_t seed, const DistanceWeightedParams& params = {});

// Per-tuple independent role switch with probability p_switch; accepts pair
// and triplet sets. Switched triplets have positive and negative physically
// swapped; switched pairs keep their indices and are interpreted with
// inverted roles by the pair losses.
TupleSet rho_regularize_tuples(const TupleSet& tuples, const LabelVector& labels,
                               double p_switch, std::uint64_t seed);

// All unordered index pairs (i < j); the exhaustive pair set the toy trainer
// feeds to the contrastive objective.
TupleSet exhaustive_pairs(const LabelVector& labels);

// Exposed pieces of the distance-weighted computation, for oracles and reuse.
// log q(d) of the normalized sphere density, and the clipped selection
// weights for a row of anchor-negative distances.
double log_sphere_distance_density(double d, std::size_t dim);
std::vector<double> distance_weighted_weights(std::span<const double> distances, std::size_t dim,
                                              const DistanceWeightedParams& params = {});

}  // namespace dml
