#include "dml/batching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dml/distance.hpp"
#include "dml/parallel.hpp"
#include "dml/rng.hpp"

namespace dml {

namespace {

// Partial Fisher-Yates: the first `count` entries of a copy of `pool`,
// shuffled; draws exactly `count` RNG values.
std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool,
                                                    std::size_t count, Rng& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.next_below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

Matrix gather_rows(const MemoryBank& bank, const std::vector<std::size_t>& indices) {
  Matrix out(indices.size(), bank.dim());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto row = bank.row(indices[r]);
    for (std::size_t c = 0; c < bank.dim(); ++c) out(r, c) = row[c];
  }
  return out;
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
  return out;
}

}  // namespace

MemoryBank::MemoryBank(std::size_t n, std::size_t dim, LabelVector labels)
    : entries_(n, dim), labels_(std::move(labels)), filled_(n, 0) {
  if (n == 0 || dim == 0) throw std::invalid_argument("memory bank needs n >= 1, dim >= 1");
  if (labels_.size() != n) throw std::invalid_argument("memory bank label count mismatch");
  validate_labels(labels_, n);
}

void MemoryBank::update(std::span<const std::size_t> indices,
                        const EmbeddingMatrix& embeddings) {
  if (indices.size() != embeddings.size())
    throw std::invalid_argument("memory bank update: index/embedding count mismatch");
  if (embeddings.dim() != dim())
    throw std::invalid_argument("memory bank update: dimension mismatch");
  for (std::size_t i : indices)
    if (i >= size()) throw std::out_of_range("memory bank update: index out of range");
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto src = embeddings.values().row(r);
    for (std::size_t c = 0; c < dim(); ++c) entries_(indices[r], c) = src[c];
    if (!filled_[indices[r]]) {
      filled_[indices[r]] = 1;
      ++filled_count_;
    }
  }
}

std::span<const double> MemoryBank::row(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("memory bank row index out of range");
  if (!filled_[i])
    throw std::logic_error("memory bank row " + std::to_string(i) + " not yet filled");
  return entries_.row(i);
}

std::vector<std::size_t> MemoryBank::filled_indices() const {
  std::vector<std::size_t> out;
  out.reserve(filled_count_);
  for (std::size_t i = 0; i < filled_.size(); ++i)
    if (filled_[i]) out.push_back(i);
  return out;
}

MiniBatch spc_sampler(const LabelVector& labels, std::size_t batch_size, std::size_t per_class,
                      std::uint64_t seed) {
  validate_labels(labels, labels.size());
  if (per_class != 2 && per_class != 4 && per_class != 8)
    throw std::invalid_argument("spc_sampler: samples per class must be 2, 4 or 8");
  if (batch_size < 2 || batch_size % per_class != 0)
    throw std::invalid_argument("spc_sampler: batch size must be a multiple of samples per class");

  const auto groups = group_by_class(labels);
  std::vector<int> eligible;
  for (const auto& [cls, members] : groups)
    if (members.size() >= per_class) eligible.push_back(cls);
  const std::size_t want = batch_size / per_class;
  if (eligible.size() < want)
    throw std::invalid_argument("spc_sampler: not enough classes with " +
                                std::to_string(per_class) + " samples");

  Rng rng(seed);
  std::vector<std::size_t> class_pick =
      sample_without_replacement(iota_indices(eligible.size()), want, rng);

  MiniBatch out;
  out.sampler = "spc-" + std::to_string(per_class) + "(seed=" + std::to_string(seed) + ")";
  for (std::size_t k : class_pick) {
    const auto& members = groups.at(eligible[k]);
    for (std::size_t m : sample_without_replacement(members, per_class, rng))
      out.indices.push_back(m);
  }
  return out;
}

MiniBatch spc_r_sampler(const LabelVector& labels, std::size_t batch_size, std::uint64_t seed) {
  validate_labels(labels, labels.size());
  const std::size_t n = labels.size();
  if (batch_size < 2) throw std::invalid_argument("spc_r_sampler: batch size must be >= 2");
  if (batch_size > n) throw std::invalid_argument("spc_r_sampler: batch size exceeds dataset");

  Rng rng(seed);
  MiniBatch out;
  out.sampler = "spc-r(seed=" + std::to_string(seed) + ")";
  out.indices = sample_without_replacement(iota_indices(n), batch_size - 1, rng);

  std::vector<std::uint8_t> drawn(n, 0);
  for (std::size_t i : out.indices) drawn[i] = 1;
  std::set<int> classes;
  for (std::size_t i : out.indices) classes.insert(labels[i]);
  std::vector<std::size_t> completions;
  for (std::size_t i = 0; i < n; ++i)
    if (!drawn[i] && classes.count(labels[i])) completions.push_back(i);
  if (completions.empty())
    throw std::invalid_argument("spc_r_sampler: no remaining sample shares a drawn class");
  out.indices.push_back(completions[rng.next_below(completions.size())]);
  return out;
}

std::vector<std::size_t> greedy_coreset_select(const Matrix& candidates, std::size_t count,
                                               std::uint64_t seed) {
  const std::size_t n = candidates.rows();
  if (count > n) throw std::invalid_argument("greedy_coreset_select: count exceeds candidates");
  std::vector<std::size_t> selected;
  if (count == 0) return selected;

  Rng rng(seed);
  std::vector<std::uint8_t> taken(n, 0);
  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  std::size_t cur = rng.next_below(n);
  selected.push_back(cur);
  taken[cur] = 1;
  while (selected.size() < count) {
    for (std::size_t i = 0; i < n; ++i)
      if (!taken[i])
        min_dist[i] =
            std::min(min_dist[i], euclidean_distance(candidates.row(i), candidates.row(cur)));
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (min_dist[i] > best_d) {
        best_d = min_dist[i];
        best = i;
      }
    }
    cur = best;
    selected.push_back(cur);
    taken[cur] = 1;
  }
  return selected;
}

Histogram distance_histogram(const Matrix& points, std::size_t bins, double lo, double hi) {
  if (bins == 0) throw std::invalid_argument("distance_histogram: needs at least one bin");
  if (!(hi > lo)) throw std::invalid_argument("distance_histogram: empty range");
  if (points.rows() < 2) throw std::invalid_argument("distance_histogram: needs >= 2 points");

  Histogram h;
  h.width = (hi - lo) / static_cast<double>(bins);
  h.mass.assign(bins, 0.0);
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    for (std::size_t j = i + 1; j < points.rows(); ++j) {
      const double d = euclidean_distance(points.row(i), points.row(j));
      const double t = std::clamp((d - lo) / h.width, 0.0, static_cast<double>(bins) - 0.5);
      h.mass[static_cast<std::size_t>(t)] += 1.0;
      ++pairs;
    }
  }
  for (double& m : h.mass) m /= static_cast<double>(pairs);
  return h;
}

double wasserstein_hist_distance(const Histogram& h1, const Histogram& h2) {
  if (h1.mass.size() != h2.mass.size())
    throw std::invalid_argument("wasserstein_hist_distance: bin count mismatch");
  if (std::fabs(h1.width - h2.width) > 1e-12)
    throw std::invalid_argument("wasserstein_hist_distance: bin width mismatch");
  auto check_mass = [](const Histogram& h) {
    double s = 0.0;
    for (double m : h.mass) s += m;
    if (std::fabs(s - 1.0) > 1e-9)
      throw std::invalid_argument("wasserstein_hist_distance: histogram not normalized");
  };
  check_mass(h1);
  check_mass(h2);

  double acc = 0.0, w1 = 0.0;
  for (std::size_t i = 0; i < h1.mass.size(); ++i) {
    acc += h1.mass[i] - h2.mass[i];
    w1 += std::fabs(acc) * h1.width;
  }
  return w1;
}

GaussianStats gaussian_stats(const Matrix& points, std::size_t regularize_below) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  if (n < 2) throw std::invalid_argument("gaussian_stats: needs >= 2 rows");

  GaussianStats out;
  out.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) out.mean[c] += points(i, c) / n;

  out.covariance = Matrix(d, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b)
        out.covariance(a, b) += (points(i, a) - out.mean[a]) * (points(i, b) - out.mean[b]);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      out.covariance(a, b) /= static_cast<double>(n - 1);
      out.covariance(b, a) = out.covariance(a, b);
    }
  if (n < regularize_below)
    for (std::size_t a = 0; a < d; ++a) out.covariance(a, a) += 1e-6;
  return out;
}

double frechet_distance(std::span<const double> mu1, const Matrix& sigma1,
                        std::span<const double> mu2, const Matrix& sigma2) {
  const std::size_t d = mu1.size();
  if (mu2.size() != d || sigma1.rows() != d || sigma1.cols() != d || sigma2.rows() != d ||
      sigma2.cols() != d)
    throw std::invalid_argument("frechet_distance: dimension mismatch");

  auto check_symmetric = [d](const Matrix& s) {
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a + 1; b < d; ++b)
        if (std::fabs(s(a, b) - s(b, a)) > 1e-9)
          throw std::invalid_argument("frechet_distance: covariance not symmetric");
  };
  check_symmetric(sigma1);
  check_symmetric(sigma2);

  const Eigen::MatrixXd s1 = to_eigen(sigma1);
  const Eigen::MatrixXd s2 = to_eigen(sigma2);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es1(s1);
  if (es1.eigenvalues().minCoeff() < -1e-9)
    throw std::invalid_argument("frechet_distance: covariance not positive semidefinite");
  const Eigen::MatrixXd root1 = es1.eigenvectors() *
                                es1.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                                es1.eigenvectors().transpose();

  Eigen::MatrixXd inner = root1 * s2 * root1;
  inner = 0.5 * (inner + inner.transpose());  // symmetrize roundoff
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(inner);
  if (es2.eigenvalues().minCoeff() < -1e-9)
    throw std::invalid_argument("frechet_distance: covariance not positive semidefinite");
  const double trace_root = es2.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  double mean_sq = 0.0;
  for (std::size_t c = 0; c < d; ++c) mean_sq += (mu1[c] - mu2[c]) * (mu1[c] - mu2[c]);
  const double value = mean_sq + s1.trace() + s2.trace() - 2.0 * trace_root;
  return std::max(value, 0.0);
}

namespace {

// Common scaffolding of ddm/frd: reference pool from fork(0), candidate j
// from fork(1 + j), then the provided scoring pass; candidates are scored in
// parallel but the winner is resolved sequentially (ties to the earliest).
// make_scorer(reference) runs once and returns the per-candidate score.
template <typename MakeScorer>
MiniBatch bank_candidate_select(const MemoryBank& bank, std::size_t batch_size,
                                std::uint64_t seed, const BankSampleParams& params,
                                const char* name, MakeScorer&& make_scorer) {
  const BankDraw draw = bank_candidate_draw(bank, batch_size, seed, params);
  const Matrix reference = gather_rows(bank, draw.pool);

  const auto score = make_scorer(reference);
  std::vector<double> scores(draw.candidates.size());
  parallel_for(draw.candidates.size(), [&](std::size_t j) {
    scores[j] = score(gather_rows(bank, draw.candidates[j]));
  });

  std::size_t best = 0;
  for (std::size_t j = 1; j < draw.candidates.size(); ++j)
    if (scores[j] < scores[best]) best = j;

  MiniBatch out;
  out.sampler = std::string(name) + "(seed=" + std::to_string(seed) + ")";
  out.indices = draw.candidates[best];
  return out;
}

}  // namespace

BankDraw bank_candidate_draw(const MemoryBank& bank, std::size_t batch_size, std::uint64_t seed,
                             const BankSampleParams& params) {
  if (batch_size < 2) throw std::invalid_argument("bank sampler: batch size must be >= 2");
  if (params.candidates < 1) throw std::invalid_argument("bank sampler: needs m >= 1");
  const std::vector<std::size_t> filled = bank.filled_indices();
  if (filled.size() < batch_size)
    throw std::invalid_argument("bank sampler: insufficient filled entries");

  BankDraw draw;
  Rng base(seed);
  const std::size_t pool_size = std::min(params.pool_size, filled.size());
  Rng pool_rng = base.fork(0);
  draw.pool = sample_without_replacement(filled, pool_size, pool_rng);

  draw.candidates.resize(params.candidates);
  for (std::size_t j = 0; j < params.candidates; ++j) {
    Rng rng = base.fork(1 + j);
    draw.candidates[j] = sample_without_replacement(filled, batch_size, rng);
  }
  return draw;
}

MiniBatch ddm_select(const MemoryBank& bank, std::size_t batch_size, std::uint64_t seed,
                     const BankSampleParams& params) {
  return bank_candidate_select(
      bank, batch_size, seed, params, "ddm", [&params](const Matrix& reference) {
        return [bins = params.bins, ref = distance_histogram(reference, params.bins, 0.0, 2.0)](
                   const Matrix& candidate) {
          return wasserstein_hist_distance(distance_histogram(candidate, bins, 0.0, 2.0), ref);
        };
      });
}

MiniBatch frd_select(const MemoryBank& bank, std::size_t batch_size, std::uint64_t seed,
                     const BankSampleParams& params) {
  const std::size_t d = bank.dim();
  return bank_candidate_select(
      bank, batch_size, seed, params, "frd", [d](const Matrix& reference) {
        return [d, ref = gaussian_stats(reference, d)](const Matrix& candidate) {
          const GaussianStats cand = gaussian_stats(candidate, d);
          return frechet_distance(cand.mean, cand.covariance, ref.mean, ref.covariance);
        };
      });
}

}  // namespace dml
