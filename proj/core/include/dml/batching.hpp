#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dml/matrix.hpp"

namespace dml {

// Last-seen embedding per dataset sample. Rows are written only when their
// sample appears in a training batch; reading an unfilled row is an error.
class MemoryBank {
 public:
  MemoryBank(std::size_t n, std::size_t dim, LabelVector labels);

  void update(std::span<const std::size_t> indices, const EmbeddingMatrix& embeddings);

  std::span<const double> row(std::size_t i) const;
  bool filled(std::size_t i) const { return filled_[i]; }
  std::size_t filled_count() const { return filled_count_; }
  std::vector<std::size_t> filled_indices() const;

  std::size_t size() const { return entries_.rows(); }
  std::size_t dim() const { return entries_.cols(); }
  const LabelVector& labels() const { return labels_; }

 private:
  Matrix entries_;
  LabelVector labels_;
  std::vector<std::uint8_t> filled_;
  std::size_t filled_count_ = 0;
};

struct MiniBatch {
  std::vector<std::size_t> indices;  // unique dataset indices
  std::string sampler;
};

// b/per_class distinct classes chosen uniformly among classes holding at
// least per_class samples; per_class members each, without replacement.
// per_class must be 2, 4 or 8 and divide b.
MiniBatch spc_sampler(const LabelVector& labels, std::size_t batch_size, std::size_t per_class,
                      std::uint64_t seed);

// b-1 uniform draws without replacement plus one final sample sharing a class
// with one of them.
MiniBatch spc_r_sampler(const LabelVector& labels, std::size_t batch_size, std::uint64_t seed);

// Greedy k-center selection: seeded uniform first pick, then repeatedly the
// candidate farthest from the selected set (ties to the lowest index).
std::vector<std::size_t> greedy_coreset_select(const Matrix& candidates, std::size_t count,
                                               std::uint64_t seed);

struct Histogram {
  std::vector<double> mass;  // sums to 1
  double width = 0.0;        // uniform bin width
};

// Normalized histogram of all pairwise Euclidean distances, hard-binned over
// [lo, hi] (the top edge closes the last bin).
Histogram distance_histogram(const Matrix& points, std::size_t bins = 50, double lo = 0.0,
                             double hi = 2.0);

// 1-D Wasserstein-1: sum |CDF1 - CDF2| * bin width.
double wasserstein_hist_distance(const Histogram& h1, const Histogram& h2);

struct GaussianStats {
  std::vector<double> mean;
  Matrix covariance;
};

// Sample mean and unbiased covariance; below `regularize_below` rows the
// covariance gets +1e-6 I to keep the matrix square root well behaved.
GaussianStats gaussian_stats(const Matrix& points, std::size_t regularize_below);

// ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}), the square root taken via a
// symmetric eigendecomposition of S1^{1/2} S2 S1^{1/2}.
double frechet_distance(std::span<const double> mu1, const Matrix& sigma1,
                        std::span<const double> mu2, const Matrix& sigma2);

struct BankSampleParams {
  std::size_t pool_size = 1024;  // reference set size b*
  std::size_t candidates = 8;    // candidate batches m
  std::size_t bins = 50;         // distance-histogram resolution
};

// The index sets the bank samplers score for a given seed: the reference
// pool B* (pool_size filled rows, or all of them when fewer) and the m
// candidate batches. ddm_select and frd_select evaluate exactly these sets,
// so the winning batch can be re-derived by scoring them externally.
struct BankDraw {
  std::vector<std::size_t> pool;
  std::vector<std::vector<std::size_t>> candidates;
};

BankDraw bank_candidate_draw(const MemoryBank& bank, std::size_t batch_size, std::uint64_t seed,
                             const BankSampleParams& params = {});

// Draw a reference pool B* and m candidate batches from the bank's filled
// rows; return the candidate whose pairwise-distance histogram is closest to
// B*'s in Wasserstein distance (ddm) or whose Gaussian moments are closest in
// Frechet distance (frd). Ties go to the earliest candidate.
MiniBatch ddm_select(const MemoryBank& bank, std::size_t batch_size, std::uint64_t seed,
                     const BankSampleParams& params = {});
MiniBatch frd_select(const MemoryBank& bank, std::size_t batch_size, std::uint64_t seed,
                     const BankSampleParams& params = {});

}  // namespace dml
