#pragma once

#include <span>

#include "dml/matrix.hpp"

namespace dml {

double dot(std::span<const double> a, std::span<const double> b);

double euclidean_distance(std::span<const double> a, std::span<const double> b);

// Requires both inputs unit length to 1e-6.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Scales every row to unit length; a row of norm below 1e-12 is an error.
EmbeddingMatrix normalize_rows(const Matrix& m);

// Full n x n Euclidean distance matrix: exactly symmetric, zero diagonal.
Matrix pairwise_distances(const EmbeddingMatrix& embeddings);

}  // namespace dml
