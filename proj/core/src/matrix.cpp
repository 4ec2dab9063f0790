#include "dml/matrix.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dml {

bool Matrix::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

EmbeddingMatrix::EmbeddingMatrix(Matrix values, bool normalized)
    : values_(std::move(values)), normalized_(normalized) {
  if (values_.rows() == 0 || values_.cols() == 0)
    throw std::invalid_argument("EmbeddingMatrix: empty shape");
  if (!values_.all_finite())
    throw std::invalid_argument("EmbeddingMatrix: non-finite entry");
  if (normalized_) {
    for (std::size_t i = 0; i < values_.rows(); ++i) {
      double s = 0.0;
      for (double v : values_.row(i)) s += v * v;
      if (std::fabs(std::sqrt(s) - 1.0) > 1e-6)
        throw std::invalid_argument("EmbeddingMatrix: row " + std::to_string(i) +
                                    " is not unit length");
    }
  }
}

void validate_labels(const LabelVector& labels, std::size_t n) {
  if (labels.size() != n)
    throw std::invalid_argument("labels: expected " + std::to_string(n) + " entries, got " +
                                std::to_string(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0)
      throw std::invalid_argument("labels: negative class id at index " + std::to_string(i));
}

std::map<int, std::vector<std::size_t>> group_by_class(const LabelVector& labels) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  return groups;
}

std::size_t class_count(const LabelVector& labels) {
  return group_by_class(labels).size();
}

}  // namespace dml
