#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dml/matrix.hpp"
#include "dml/spectral.hpp"

namespace dml {

struct MetricReport {
  std::map<std::size_t, double> recall_at;
  double nmi = 0.0;
  double f1 = 0.0;
  double map_at_c = 0.0;
  double map_at_1000 = 0.0;
  std::size_t zero_depth_queries = 0;  // singleton-class queries counted as 0
};

// All retrieval metrics exclude the query from its own neighbor list and
// break distance ties by ascending index.

double recall_at_k(const EmbeddingMatrix& embeddings, const LabelVector& labels, std::size_t k);

// Lloyd iterations from a k-means++ start, run to an assignment fixpoint or
// 300 rounds. Returns one cluster id per row.
std::vector<int> kmeans_cluster(const EmbeddingMatrix& embeddings, std::size_t k,
                                std::uint64_t seed);

// 2 I(A,B) / (H(A) + H(B)); 1 when both partitions are single blocks.
double nmi(const std::vector<int>& assignments, const std::vector<int>& labels);

// Per query, retrieve as many neighbors as the query's class has other
// members; F1 of retrieval precision and class recall, averaged over queries.
double f1_score(const EmbeddingMatrix& embeddings, const LabelVector& labels);

// Mean precision over the top k_c (class size minus the query itself).
double map_at_c(const EmbeddingMatrix& embeddings, const LabelVector& labels);

// Mean precision over the top min(1000, n-1).
double map_at_1000(const EmbeddingMatrix& embeddings, const LabelVector& labels);

// Full report; NMI comes from kmeans with one cluster per class.
MetricReport evaluate_all(const EmbeddingMatrix& embeddings, const LabelVector& labels,
                          const std::vector<std::size_t>& ks, std::uint64_t seed);

struct RunReport {
  MetricReport metrics;
  SpectralReport spectral;
};

struct CorrelationResult {
  std::vector<std::string> names;   // column order
  Matrix matrix;                    // Pearson coefficients, diagonal 1
  std::vector<bool> constant;       // flagged columns (correlations forced to 0)
};

// Pearson correlation of every metric pair across runs (needs >= 3 runs).
CorrelationResult metric_correlation_matrix(const std::vector<RunReport>& runs);

}  // namespace dml
