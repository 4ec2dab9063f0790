#include "dml/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "dml/distance.hpp"
#include "dml/parallel.hpp"
#include "dml/rng.hpp"

namespace dml {

namespace {

// Per-query neighbor ranking: all other indices sorted by distance, ties by
// ascending index. Rows are independent, so queries run in parallel.
std::vector<std::vector<std::size_t>> neighbor_ranking(const EmbeddingMatrix& embeddings) {
  const Matrix& x = embeddings.values();
  const std::size_t n = x.rows();
  std::vector<std::vector<std::size_t>> ranking(n);
  parallel_for(n, [&](std::size_t q) {
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(n - 1);
    for (std::size_t i = 0; i < n; ++i)
      if (i != q) order.emplace_back(euclidean_distance(x.row(q), x.row(i)), i);
    std::sort(order.begin(), order.end());
    ranking[q].reserve(order.size());
    for (const auto& [d, i] : order) ranking[q].push_back(i);
  });
  return ranking;
}

std::vector<std::size_t> class_sizes(const LabelVector& labels) {
  std::map<int, std::size_t> counts;
  for (int y : labels) ++counts[y];
  std::vector<std::size_t> sizes(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) sizes[i] = counts[labels[i]];
  return sizes;
}

double precision_at_depth(const std::vector<std::size_t>& neighbors, const LabelVector& labels,
                          int query_class, std::size_t depth) {
  std::size_t hits = 0;
  for (std::size_t r = 0; r < depth; ++r) hits += labels[neighbors[r]] == query_class;
  return static_cast<double>(hits) / static_cast<double>(depth);
}

double entropy(const std::map<int, std::size_t>& counts, std::size_t n) {
  double h = 0.0;
  for (const auto& [k, c] : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(n);
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace

double recall_at_k(const EmbeddingMatrix& embeddings, const LabelVector& labels, std::size_t k) {
  validate_labels(labels, embeddings.size());
  const std::size_t n = embeddings.size();
  if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
  if (k >= n) throw std::invalid_argument("recall_at_k: k must be smaller than the set");

  const auto ranking = neighbor_ranking(embeddings);
  std::size_t hits = 0;
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t r = 0; r < k; ++r) {
      if (labels[ranking[q][r]] == labels[q]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

std::vector<int> kmeans_cluster(const EmbeddingMatrix& embeddings, std::size_t k,
                                std::uint64_t seed) {
  const Matrix& x = embeddings.values();
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (k < 1 || k > n) throw std::invalid_argument("kmeans_cluster: need 1 <= k <= n");

  // k-means++: first center uniform, the rest with probability proportional
  // to squared distance from the nearest chosen center.
  Rng rng(seed);
  Matrix centers(k, d);
  std::vector<double> dist_sq(n, std::numeric_limits<double>::infinity());
  std::size_t first = rng.next_below(n);
  for (std::size_t c = 0; c < d; ++c) centers(0, c) = x(first, c);
  for (std::size_t m = 1; m < k; ++m) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dd = euclidean_distance(x.row(i), centers.row(m - 1));
      dist_sq[i] = std::min(dist_sq[i], dd * dd);
      total += dist_sq[i];
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = rng.next_below(n);  // all points coincide with chosen centers
    } else {
      const double u = rng.next_double() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += dist_sq[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    }
    for (std::size_t c = 0; c < d; ++c) centers(m, c) = x(pick, c);
  }

  std::vector<int> assign(n, -1);
  for (int round = 0; round < 300; ++round) {
    std::vector<int> next(n);
    parallel_for(n, [&](std::size_t i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t m = 0; m < k; ++m) {
        const double dd = euclidean_distance(x.row(i), centers.row(m));
        if (dd < best_d) {
          best_d = dd;
          best = m;
        }
      }
      next[i] = static_cast<int>(best);
    });
    const bool changed = next != assign;
    assign = std::move(next);
    if (!changed) break;

    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[static_cast<std::size_t>(assign[i])];
      for (std::size_t c = 0; c < d; ++c) sums(static_cast<std::size_t>(assign[i]), c) += x(i, c);
    }
    for (std::size_t m = 0; m < k; ++m) {
      if (counts[m] == 0) continue;  // empty cluster keeps its old center
      for (std::size_t c = 0; c < d; ++c)
        centers(m, c) = sums(m, c) / static_cast<double>(counts[m]);
    }
  }
  return assign;
}

double nmi(const std::vector<int>& assignments, const std::vector<int>& labels) {
  if (assignments.size() != labels.size())
    throw std::invalid_argument("nmi: partition length mismatch");
  if (assignments.empty()) throw std::invalid_argument("nmi: empty partitions");
  const std::size_t n = assignments.size();

  std::map<int, std::size_t> ca, cb;
  std::map<std::pair<int, int>, std::size_t> joint;
  for (std::size_t i = 0; i < n; ++i) {
    ++ca[assignments[i]];
    ++cb[labels[i]];
    ++joint[{assignments[i], labels[i]}];
  }
  const double ha = entropy(ca, n);
  const double hb = entropy(cb, n);
  if (ha == 0.0 && hb == 0.0) return 1.0;

  double mi = 0.0;
  for (const auto& [key, c] : joint) {
    const double pij = static_cast<double>(c) / static_cast<double>(n);
    const double pi = static_cast<double>(ca[key.first]) / static_cast<double>(n);
    const double pj = static_cast<double>(cb[key.second]) / static_cast<double>(n);
    mi += pij * std::log(pij / (pi * pj));
  }
  return 2.0 * mi / (ha + hb);
}

double f1_score(const EmbeddingMatrix& embeddings, const LabelVector& labels) {
  validate_labels(labels, embeddings.size());
  const std::size_t n = embeddings.size();
  const auto ranking = neighbor_ranking(embeddings);
  const auto sizes = class_sizes(labels);

  double total = 0.0;
  for (std::size_t q = 0; q < n; ++q) {
    const std::size_t kc = sizes[q] - 1;
    if (kc == 0) continue;  // P + R = 0
    const double p = precision_at_depth(ranking[q], labels, labels[q], kc);
    // recall shares the denominator: kc retrieved, kc relevant
    total += p > 0.0 ? 2.0 * p * p / (p + p) : 0.0;
  }
  return total / static_cast<double>(n);
}

double map_at_c(const EmbeddingMatrix& embeddings, const LabelVector& labels) {
  validate_labels(labels, embeddings.size());
  const std::size_t n = embeddings.size();
  const auto ranking = neighbor_ranking(embeddings);
  const auto sizes = class_sizes(labels);
  double total = 0.0;
  for (std::size_t q = 0; q < n; ++q) {
    const std::size_t kc = sizes[q] - 1;
    if (kc == 0) continue;
    total += precision_at_depth(ranking[q], labels, labels[q], kc);
  }
  return total / static_cast<double>(n);
}

double map_at_1000(const EmbeddingMatrix& embeddings, const LabelVector& labels) {
  validate_labels(labels, embeddings.size());
  const std::size_t n = embeddings.size();
  if (n < 2) throw std::invalid_argument("map_at_1000: needs >= 2 samples");
  const std::size_t depth = std::min<std::size_t>(1000, n - 1);
  const auto ranking = neighbor_ranking(embeddings);
  double total = 0.0;
  for (std::size_t q = 0; q < n; ++q)
    total += precision_at_depth(ranking[q], labels, labels[q], depth);
  return total / static_cast<double>(n);
}

MetricReport evaluate_all(const EmbeddingMatrix& embeddings, const LabelVector& labels,
                          const std::vector<std::size_t>& ks, std::uint64_t seed) {
  validate_labels(labels, embeddings.size());
  const std::size_t n = embeddings.size();
  const auto ranking = neighbor_ranking(embeddings);
  const auto sizes = class_sizes(labels);

  MetricReport report;
  for (std::size_t k : ks) {
    if (k < 1 || k >= n) throw std::invalid_argument("evaluate_all: k out of range");
    std::size_t hits = 0;
    for (std::size_t q = 0; q < n; ++q) {
      for (std::size_t r = 0; r < k; ++r) {
        if (labels[ranking[q][r]] == labels[q]) {
          ++hits;
          break;
        }
      }
    }
    report.recall_at[k] = static_cast<double>(hits) / static_cast<double>(n);
  }

  double f1_total = 0.0, mapc_total = 0.0, map1k_total = 0.0;
  const std::size_t depth_1k = std::min<std::size_t>(1000, n - 1);
  for (std::size_t q = 0; q < n; ++q) {
    const std::size_t kc = sizes[q] - 1;
    if (kc == 0) {
      ++report.zero_depth_queries;
    } else {
      const double p = precision_at_depth(ranking[q], labels, labels[q], kc);
      f1_total += p;  // P == R, so 2PR/(P+R) == P
      mapc_total += p;
    }
    map1k_total += precision_at_depth(ranking[q], labels, labels[q], depth_1k);
  }
  report.f1 = f1_total / static_cast<double>(n);
  report.map_at_c = mapc_total / static_cast<double>(n);
  report.map_at_1000 = map1k_total / static_cast<double>(n);
  report.nmi = nmi(kmeans_cluster(embeddings, class_count(labels), seed), labels);
  return report;
}

CorrelationResult metric_correlation_matrix(const std::vector<RunReport>& runs) {
  if (runs.size() < 3)
    throw std::invalid_argument("metric_correlation_matrix: needs at least 3 runs");

  CorrelationResult out;
  for (const auto& [k, v] : runs.front().metrics.recall_at)
    out.names.push_back("recall@" + std::to_string(k));
  out.names.insert(out.names.end(), {"nmi", "f1", "map@c", "map@1000", "rho"});

  const std::size_t cols = out.names.size();
  const std::size_t rows = runs.size();
  Matrix data(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& rep = runs[r];
    if (rep.metrics.recall_at.size() != runs.front().metrics.recall_at.size())
      throw std::invalid_argument("metric_correlation_matrix: recall key sets differ");
    std::size_t c = 0;
    for (const auto& [k, v] : rep.metrics.recall_at) {
      if (out.names[c] != "recall@" + std::to_string(k))
        throw std::invalid_argument("metric_correlation_matrix: recall key sets differ");
      data(r, c++) = v;
    }
    data(r, c++) = rep.metrics.nmi;
    data(r, c++) = rep.metrics.f1;
    data(r, c++) = rep.metrics.map_at_c;
    data(r, c++) = rep.metrics.map_at_1000;
    data(r, c++) = rep.spectral.rho;
  }

  std::vector<double> mean(cols, 0.0), sd(cols, 0.0);
  out.constant.assign(cols, false);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) mean[c] += data(r, c) / rows;
    for (std::size_t r = 0; r < rows; ++r)
      sd[c] += (data(r, c) - mean[c]) * (data(r, c) - mean[c]);
    sd[c] = std::sqrt(sd[c]);
    if (sd[c] < 1e-15) out.constant[c] = true;
  }

  out.matrix = Matrix(cols, cols);
  for (std::size_t a = 0; a < cols; ++a) {
    out.matrix(a, a) = 1.0;
    for (std::size_t b = a + 1; b < cols; ++b) {
      double r = 0.0;
      if (!out.constant[a] && !out.constant[b]) {
        double cov = 0.0;
        for (std::size_t i = 0; i < rows; ++i)
          cov += (data(i, a) - mean[a]) * (data(i, b) - mean[b]);
        r = cov / (sd[a] * sd[b]);
      }
      out.matrix(a, b) = r;
      out.matrix(b, a) = r;
    }
  }
  return out;
}

}  // namespace dml
