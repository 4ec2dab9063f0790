#include "dml/distance.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dml {

namespace {

void check_same_dim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("vector dimensions differ: " + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()));
  if (a.empty()) throw std::invalid_argument("empty vectors");
}

double norm(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  check_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  check_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  check_same_dim(a, b);
  if (std::fabs(norm(a) - 1.0) > 1e-6 || std::fabs(norm(b) - 1.0) > 1e-6)
    throw std::invalid_argument("cosine_similarity: inputs must be unit length");
  return dot(a, b);
}

EmbeddingMatrix normalize_rows(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) throw std::invalid_argument("normalize_rows: empty matrix");
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double n = norm(m.row(i));
    if (!(n > 1e-12))
      throw std::invalid_argument("normalize_rows: zero-norm row " + std::to_string(i));
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) / n;
  }
  return EmbeddingMatrix(std::move(out), true);
}

Matrix pairwise_distances(const EmbeddingMatrix& embeddings) {
  const std::size_t n = embeddings.size();
  Matrix d(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = euclidean_distance(embeddings.row(i), embeddings.row(j));
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

}  // namespace dml
