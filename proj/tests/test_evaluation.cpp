#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "dml/distance.hpp"
#include "dml/evaluation.hpp"
#include "testutil.hpp"

using namespace dml;
using testutil::apply_rotation;
using testutil::make_labels;
using testutil::neighbors_of;
using testutil::random_points;
using testutil::random_rotation;
using testutil::unit_rows;

namespace {

// Direct single-query implementations of every retrieval metric, evaluated
// against the brute-force neighbor order from testutil.
double brute_recall(const Matrix& pts, const LabelVector& labels, std::size_t k) {
  double hits = 0.0;
  for (std::size_t q = 0; q < pts.rows(); ++q) {
    const auto order = neighbors_of(pts, q);
    for (std::size_t r = 0; r < k; ++r)
      if (labels[order[r]] == labels[q]) {
        hits += 1.0;
        break;
      }
  }
  return hits / static_cast<double>(pts.rows());
}

double brute_precision_at(const Matrix& pts, const LabelVector& labels, std::size_t q,
                          std::size_t depth) {
  const auto order = neighbors_of(pts, q);
  double tp = 0.0;
  for (std::size_t r = 0; r < depth; ++r)
    if (labels[order[r]] == labels[q]) tp += 1.0;
  return tp / static_cast<double>(depth);
}

std::map<int, std::size_t> sizes_of(const LabelVector& labels) {
  std::map<int, std::size_t> s;
  for (int l : labels) s[l]++;
  return s;
}

double brute_f1(const Matrix& pts, const LabelVector& labels) {
  const auto sizes = sizes_of(labels);
  double total = 0.0;
  for (std::size_t q = 0; q < pts.rows(); ++q) {
    const std::size_t kc = sizes.at(labels[q]) - 1;
    if (kc == 0) continue;  // counts as zero
    const double p = brute_precision_at(pts, labels, q, kc);
    // retrieval depth equals class remainder, so precision and recall agree
    total += p;
  }
  return total / static_cast<double>(pts.rows());
}

double brute_map_c(const Matrix& pts, const LabelVector& labels) {
  const auto sizes = sizes_of(labels);
  double total = 0.0;
  for (std::size_t q = 0; q < pts.rows(); ++q) {
    const std::size_t kc = sizes.at(labels[q]) - 1;
    if (kc == 0) continue;
    total += brute_precision_at(pts, labels, q, kc);
  }
  return total / static_cast<double>(pts.rows());
}

double brute_map_1000(const Matrix& pts, const LabelVector& labels) {
  const std::size_t depth = std::min<std::size_t>(1000, pts.rows() - 1);
  double total = 0.0;
  for (std::size_t q = 0; q < pts.rows(); ++q)
    total += brute_precision_at(pts, labels, q, depth);
  return total / static_cast<double>(pts.rows());
}

double direct_nmi(const std::vector<int>& a, const std::vector<int>& b) {
  const double n = static_cast<double>(a.size());
  std::map<int, double> pa, pb;
  std::map<std::pair<int, int>, double> pj;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pa[a[i]] += 1.0 / n;
    pb[b[i]] += 1.0 / n;
    pj[{a[i], b[i]}] += 1.0 / n;
  }
  double ha = 0.0, hb = 0.0, mi = 0.0;
  for (const auto& [k, p] : pa) ha -= p * std::log(p);
  for (const auto& [k, p] : pb) hb -= p * std::log(p);
  for (const auto& [k, p] : pj) mi += p * std::log(p / (pa[k.first] * pb[k.second]));
  if (ha + hb == 0.0) return 1.0;
  return 2.0 * mi / (ha + hb);
}

// Two tight separated blobs on the unit circle, classes matching the blobs.
void blob_fixture(Matrix& pts, LabelVector& labels, std::size_t per_side) {
  pts = Matrix(2 * per_side, 2);
  labels.assign(2 * per_side, 0);
  for (std::size_t i = 0; i < per_side; ++i) {
    const double t = 0.02 * static_cast<double>(i);
    pts(i, 0) = std::cos(t);
    pts(i, 1) = std::sin(t);
    pts(per_side + i, 0) = std::cos(3.14159 + t);
    pts(per_side + i, 1) = std::sin(3.14159 + t);
    labels[per_side + i] = 1;
  }
}

}  // namespace

TEST_CASE("recall at k on separable data and against brute force") {
  Matrix pts;
  LabelVector labels;
  blob_fixture(pts, labels, 6);
  const EmbeddingMatrix e(pts, true);
  CHECK(recall_at_k(e, labels, 1) == doctest::Approx(1.0));

  for (int s = 0; s < 20; ++s) {
    Rng rng(300 + s);
    const Matrix r = unit_rows(random_points(rng, 64, 4));
    const LabelVector l = make_labels(rng, 64, 5);
    const EmbeddingMatrix re(r, true);
    for (std::size_t k : {1, 2, 4, 8})
      CHECK(recall_at_k(re, l, k) == doctest::Approx(brute_recall(r, l, k)).epsilon(1e-12));
    // monotone in k, and saturates at full depth when no class is a singleton
    double prev = 0.0;
    for (std::size_t k = 1; k < 64; ++k) {
      const double cur = recall_at_k(re, l, k);
      CHECK(cur >= prev);
      prev = cur;
    }
    CHECK(recall_at_k(re, l, 63) == doctest::Approx(1.0));
  }

  CHECK_THROWS_AS(recall_at_k(e, labels, 0), std::invalid_argument);
  CHECK_THROWS_AS(recall_at_k(e, labels, labels.size()), std::invalid_argument);
}

TEST_CASE("duplicated samples give perfect recall at 1") {
  Rng rng(77);
  const Matrix base = unit_rows(random_points(rng, 8, 3));
  Matrix doubled(16, 3);
  LabelVector labels(16);
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      doubled(2 * i, c) = base(i, c);
      doubled(2 * i + 1, c) = base(i, c);
    }
    labels[2 * i] = labels[2 * i + 1] = static_cast<int>(i);
  }
  CHECK(recall_at_k(EmbeddingMatrix(doubled, true), labels, 1) == doctest::Approx(1.0));
}

TEST_CASE("kmeans recovers separated blobs and reaches a fixpoint") {
  Matrix pts;
  LabelVector labels;
  blob_fixture(pts, labels, 8);
  const EmbeddingMatrix e(pts, true);
  const std::vector<int> assign = kmeans_cluster(e, 2, 4);
  REQUIRE(assign.size() == 16);
  for (std::size_t i = 1; i < 8; ++i) {
    CHECK(assign[i] == assign[0]);
    CHECK(assign[8 + i] == assign[8]);
  }
  CHECK(assign[0] != assign[8]);

  // K = n: every point its own cluster (inertia zero)
  Rng rng(5);
  const Matrix r = unit_rows(random_points(rng, 10, 3));
  const std::vector<int> own = kmeans_cluster(EmbeddingMatrix(r, true), 10, 9);
  CHECK(std::set<int>(own.begin(), own.end()).size() == 10);

  CHECK_THROWS_AS(kmeans_cluster(EmbeddingMatrix(r, true), 11, 1), std::invalid_argument);
  CHECK(kmeans_cluster(e, 2, 4) == assign);  // deterministic
}

TEST_CASE("kmeans result is a Lloyd fixpoint on random data") {
  for (int s = 0; s < 10; ++s) {
    Rng rng(900 + s);
    const Matrix pts = random_points(rng, 48, 3);
    const std::size_t K = 3;
    const std::vector<int> assign = kmeans_cluster(EmbeddingMatrix(pts, false), K, 31 + s);

    Matrix centers(K, 3);
    std::vector<double> counts(K, 0.0);
    for (std::size_t i = 0; i < 48; ++i) {
      counts[assign[i]] += 1.0;
      for (std::size_t c = 0; c < 3; ++c) centers(assign[i], c) += pts(i, c);
    }
    bool all_nonempty = true;
    for (std::size_t k = 0; k < K; ++k) {
      if (counts[k] == 0.0) all_nonempty = false;
      else
        for (std::size_t c = 0; c < 3; ++c) centers(k, c) /= counts[k];
    }
    if (!all_nonempty) continue;  // an empty cluster hides its frozen center

    // no point prefers another recomputed center: assignments are stable
    for (std::size_t i = 0; i < 48; ++i) {
      const double own = euclidean_distance(pts.row(i), centers.row(assign[i]));
      for (std::size_t k = 0; k < K; ++k)
        CHECK(own <= euclidean_distance(pts.row(i), centers.row(k)) + 1e-12);
    }
  }
}

TEST_CASE("nmi identities, independence, and the contingency formula") {
  const std::vector<int> labels = {0, 0, 1, 1, 2, 2};
  CHECK(nmi(labels, labels) == doctest::Approx(1.0));
  const std::vector<int> renamed = {5, 5, 3, 3, 9, 9};
  CHECK(nmi(renamed, labels) == doctest::Approx(1.0));
  CHECK(nmi({0, 0, 0}, {1, 1, 1}) == doctest::Approx(1.0));  // both entropies vanish

  // large independent partitions
  Rng rng(11);
  std::vector<int> a(20000), b(20000);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = static_cast<int>(rng.next_below(4));
    b[i] = static_cast<int>(rng.next_below(4));
  }
  CHECK(std::abs(nmi(a, b)) < 0.05);

  for (int s = 0; s < 20; ++s) {
    Rng r2(500 + s);
    std::vector<int> u(30), v(30);
    for (std::size_t i = 0; i < 30; ++i) {
      u[i] = static_cast<int>(r2.next_below(4));
      v[i] = static_cast<int>(r2.next_below(3));
    }
    CHECK(nmi(u, v) == doctest::Approx(direct_nmi(u, v)).epsilon(1e-12));
    CHECK(nmi(u, v) == doctest::Approx(nmi(v, u)));
  }

  CHECK_THROWS_AS(nmi({0, 1}, {0, 1, 2}), std::invalid_argument);
}

TEST_CASE("f1 and map scores: separable fixtures, degenerate classes, brute force") {
  Matrix pts;
  LabelVector labels;
  blob_fixture(pts, labels, 6);
  const EmbeddingMatrix e(pts, true);
  CHECK(f1_score(e, labels) == doctest::Approx(1.0));
  CHECK(map_at_c(e, labels) == doctest::Approx(1.0));
  CHECK(map_at_1000(e, labels) == doctest::Approx(brute_map_1000(pts, labels)));

  for (int s = 0; s < 20; ++s) {
    Rng rng(700 + s);
    const Matrix r = unit_rows(random_points(rng, 32, 4));
    const LabelVector l = make_labels(rng, 32, 4);
    const EmbeddingMatrix re(r, true);
    CHECK(f1_score(re, l) == doctest::Approx(brute_f1(r, l)).epsilon(1e-12));
    CHECK(map_at_c(re, l) == doctest::Approx(brute_map_c(r, l)).epsilon(1e-12));
    CHECK(map_at_1000(re, l) == doctest::Approx(brute_map_1000(r, l)).epsilon(1e-12));
  }

  // a singleton class contributes zero and is counted
  Rng rng(3);
  const Matrix r = unit_rows(random_points(rng, 5, 3));
  const LabelVector l = {0, 0, 1, 1, 2};
  const MetricReport rep = evaluate_all(EmbeddingMatrix(r, true), l, {1}, 1);
  CHECK(rep.zero_depth_queries == 1);
  CHECK(rep.f1 == doctest::Approx(brute_f1(r, l)));
  CHECK(rep.map_at_c == doctest::Approx(brute_map_c(r, l)));
}

TEST_CASE("evaluate_all agrees with the standalone metrics") {
  Rng rng(21);
  const Matrix pts = unit_rows(random_points(rng, 40, 4));
  const LabelVector labels = make_labels(rng, 40, 5);
  const EmbeddingMatrix e(pts, true);
  const MetricReport rep = evaluate_all(e, labels, {1, 2, 4}, 99);

  REQUIRE(rep.recall_at.size() == 3);
  for (std::size_t k : {1, 2, 4})
    CHECK(rep.recall_at.at(k) == doctest::Approx(recall_at_k(e, labels, k)));
  CHECK(rep.f1 == doctest::Approx(f1_score(e, labels)));
  CHECK(rep.map_at_c == doctest::Approx(map_at_c(e, labels)));
  CHECK(rep.map_at_1000 == doctest::Approx(map_at_1000(e, labels)));
  CHECK(rep.nmi ==
        doctest::Approx(nmi(kmeans_cluster(e, class_count(labels), 99), labels)));
  CHECK(rep.nmi >= 0.0);
  CHECK(rep.nmi <= 1.0);
}

TEST_CASE("metrics are invariant under rotation and relabeling") {
  Rng rng(33);
  const Matrix pts = unit_rows(random_points(rng, 30, 4));
  const LabelVector labels = make_labels(rng, 30, 3);
  const Matrix rot = random_rotation(rng, 4);
  const Matrix turned = apply_rotation(pts, rot);

  const EmbeddingMatrix e(pts, true);
  const EmbeddingMatrix t(turned, true);
  const MetricReport a = evaluate_all(e, labels, {1, 4}, 7);
  const MetricReport b = evaluate_all(t, labels, {1, 4}, 7);
  CHECK(std::abs(a.recall_at.at(1) - b.recall_at.at(1)) <= 1e-9);
  CHECK(std::abs(a.recall_at.at(4) - b.recall_at.at(4)) <= 1e-9);
  CHECK(std::abs(a.f1 - b.f1) <= 1e-9);
  CHECK(std::abs(a.map_at_c - b.map_at_c) <= 1e-9);
  CHECK(std::abs(a.map_at_1000 - b.map_at_1000) <= 1e-9);
  CHECK(std::abs(a.nmi - b.nmi) <= 1e-9);

  LabelVector shifted(labels);
  for (int& l : shifted) l = 3 * l + 7;
  const MetricReport c = evaluate_all(e, shifted, {1, 4}, 7);
  CHECK(c.recall_at.at(1) == doctest::Approx(a.recall_at.at(1)));
  CHECK(c.f1 == doctest::Approx(a.f1));
  CHECK(c.map_at_c == doctest::Approx(a.map_at_c));
}

TEST_CASE("correlation matrix columns, extremes, and flags") {
  auto run_with = [](double f1v, double nmiv, double rhov) {
    RunReport r;
    r.metrics.recall_at[1] = 0.5;
    r.metrics.nmi = nmiv;
    r.metrics.f1 = f1v;
    r.metrics.map_at_c = 0.25;
    r.metrics.map_at_1000 = 0.5 * f1v;
    r.spectral.rho = rhov;
    return r;
  };
  std::vector<RunReport> runs;
  for (int i = 0; i < 10; ++i) {
    const double x = 0.1 * i;
    runs.push_back(run_with(x, -x, 0.3 + 0.2 * x));
  }
  const CorrelationResult cr = metric_correlation_matrix(runs);
  REQUIRE(cr.names.size() == 6);
  CHECK(cr.names[0] == "recall@1");
  CHECK(cr.names[1] == "nmi");
  CHECK(cr.names[2] == "f1");
  CHECK(cr.names[3] == "map@c");
  CHECK(cr.names[4] == "map@1000");
  CHECK(cr.names[5] == "rho");

  for (std::size_t i = 0; i < 6; ++i) CHECK(cr.matrix(i, i) == doctest::Approx(1.0));
  CHECK(cr.matrix(2, 1) == doctest::Approx(-1.0));  // f1 vs nmi = x vs -x
  CHECK(cr.matrix(2, 4) == doctest::Approx(1.0));   // map@1000 is a multiple of f1
  CHECK(cr.matrix(2, 5) == doctest::Approx(1.0));   // rho is affine in f1
  CHECK(cr.matrix(1, 5) == doctest::Approx(-1.0));
  // recall@1 and map@c never move: flagged, correlations zeroed
  CHECK(cr.constant[0]);
  CHECK(cr.constant[3]);
  CHECK(!cr.constant[2]);
  CHECK(cr.matrix(0, 2) == 0.0);
  CHECK(cr.matrix(3, 2) == 0.0);
  for (std::size_t a = 0; a < 6; ++a)
    for (std::size_t b = 0; b < 6; ++b) CHECK(cr.matrix(a, b) == cr.matrix(b, a));

  // textbook Pearson on a noisy pair
  Rng rng(13);
  std::vector<RunReport> noisy;
  for (int i = 0; i < 10; ++i) {
    RunReport r = run_with(rng.next_double(), rng.next_double(), rng.next_double());
    r.metrics.recall_at[1] = rng.next_double();
    r.metrics.map_at_c = rng.next_double();
    noisy.push_back(r);
  }
  const CorrelationResult nc = metric_correlation_matrix(noisy);
  auto column = [&](const RunReport& r, std::size_t c) {
    switch (c) {
      case 0: return r.metrics.recall_at.at(1);
      case 1: return r.metrics.nmi;
      case 2: return r.metrics.f1;
      case 3: return r.metrics.map_at_c;
      case 4: return r.metrics.map_at_1000;
      default: return r.spectral.rho;
    }
  };
  for (std::size_t a = 0; a < 6; ++a) {
    for (std::size_t b = 0; b < 6; ++b) {
      double ma = 0.0, mb = 0.0;
      for (const auto& r : noisy) {
        ma += column(r, a) / noisy.size();
        mb += column(r, b) / noisy.size();
      }
      double cov = 0.0, va = 0.0, vb = 0.0;
      for (const auto& r : noisy) {
        cov += (column(r, a) - ma) * (column(r, b) - mb);
        va += (column(r, a) - ma) * (column(r, a) - ma);
        vb += (column(r, b) - mb) * (column(r, b) - mb);
      }
      CHECK(nc.matrix(a, b) ==
            doctest::Approx(cov / std::sqrt(va * vb)).epsilon(1e-12));
    }
  }

  runs.resize(2);
  CHECK_THROWS_AS(metric_correlation_matrix(runs), std::invalid_argument);

  std::vector<RunReport> mismatched;
  for (int i = 0; i < 3; ++i) mismatched.push_back(run_with(0.1 * i, 0.2, 0.3));
  mismatched[2].metrics.recall_at.clear();
  mismatched[2].metrics.recall_at[4] = 0.5;
  CHECK_THROWS_AS(metric_correlation_matrix(mismatched), std::invalid_argument);
}
