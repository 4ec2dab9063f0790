#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

namespace dml {

// Dense row-major matrix of doubles. All numeric state in the library lives
// in this container; one row is one sample.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// An n x D block of embeddings plus a flag recording whether every row is
// unit length. Construction validates finiteness, non-empty shape, and (when
// flagged) row norms to 1e-6.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(Matrix values, bool normalized);

  const Matrix& values() const { return values_; }
  std::size_t size() const { return values_.rows(); }
  std::size_t dim() const { return values_.cols(); }
  bool normalized() const { return normalized_; }
  std::span<const double> row(std::size_t i) const { return values_.row(i); }

 private:
  Matrix values_;
  bool normalized_ = false;
};

using LabelVector = std::vector<int>;

// Labels must be non-negative and match the sample count.
void validate_labels(const LabelVector& labels, std::size_t n);

// Class id -> member indices; both levels ascending. Ids need not be
// contiguous.
std::map<int, std::vector<std::size_t>> group_by_class(const LabelVector& labels);

std::size_t class_count(const LabelVector& labels);

}  // namespace dml
