#pragma once

#include "dml/matrix.hpp"
#include "dml/objective.hpp"
#include "dml/tuples.hpp"

namespace dml {

// Every objective returns the loss value and the gradient with respect to the
// batch embeddings (plus proxy / boundary gradients where those exist). The
// gradients are plain coordinate derivatives at the given point; callers are
// responsible for feeding embeddings in the regime each loss expects
// (contrastive, triplet, margin, quadruplet, snr, multisimilarity, histogram,
// and the proxy losses expect unit rows; the lifted/npair/angular family
// works on raw, unnormalized embeddings).

LossOutput contrastive_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                            const TupleSet& pairs, const ObjectiveSpec& spec);

LossOutput triplet_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                        const TupleSet& triplets, const ObjectiveSpec& spec);

// `beta` is the current value of the learnable boundary; its gradient is
// returned in LossOutput::grad_beta. Note this one sums over pairs rather
// than averaging.
LossOutput margin_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                       const TupleSet& pairs, const ObjectiveSpec& spec, double beta);

LossOutput generalized_lifted_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                                   const ObjectiveSpec& spec);

LossOutput npair_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                      const ObjectiveSpec& spec);

LossOutput angular_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                        const ObjectiveSpec& spec);

LossOutput arcface_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                        const ProxyBank& centers, const ObjectiveSpec& spec);

LossOutput histogram_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                          const ObjectiveSpec& spec);

LossOutput multisimilarity_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                                const ObjectiveSpec& spec);

LossOutput proxynca_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                         const ProxyBank& proxies, const ObjectiveSpec& spec);

LossOutput quadruplet_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                           const TupleSet& quadruplets, const ObjectiveSpec& spec);

LossOutput snr_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                    const TupleSet& triplets, const ObjectiveSpec& spec);

LossOutput softtriple_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                           const ProxyBank& proxies, const ObjectiveSpec& spec);

LossOutput normalized_softmax_loss(const EmbeddingMatrix& batch, const LabelVector& labels,
                                   const ProxyBank& proxies, const ObjectiveSpec& spec);

// Embeddings produced from interpolated inputs, carrying one or two label
// entries per sample and the interpolation weights (which must sum to 1).
struct MixupBatch {
  EmbeddingMatrix embeddings;
  LabelVector labels_primary;
  LabelVector labels_secondary;
  double lambda_primary = 1.0;
  double lambda_secondary = 0.0;
};

// Weighted sum of the triplet objective over the triplet sets built from the
// primary and secondary label entries.
LossOutput mixup_triplet_loss(const MixupBatch& batch, const TupleSet& triplets_primary,
                              const TupleSet& triplets_secondary, const ObjectiveSpec& spec);

}  // namespace dml
