#include "dml/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "dml/distance.hpp"
#include "dml/parallel.hpp"

namespace dml {

namespace {

std::vector<double> svd_values(const Matrix& m) {
  Eigen::MatrixXd em(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      em(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(em);
  const auto& sv = svd.singularValues();
  return {sv.data(), sv.data() + sv.size()};
}

}  // namespace

std::vector<double> singular_spectrum(const EmbeddingMatrix& embeddings) {
  if (embeddings.size() < 2)
    throw std::invalid_argument("singular_spectrum: needs at least 2 rows");
  return svd_values(embeddings.values());
}

double rho(const std::vector<double>& spectrum) {
  if (spectrum.size() < 2) throw std::invalid_argument("rho: spectrum needs >= 2 values");
  for (double v : spectrum)
    if (v < 0.0 || !std::isfinite(v))
      throw std::invalid_argument("rho: spectrum values must be finite and non-negative");

  std::vector<double> s(spectrum);
  std::sort(s.begin(), s.end(), std::greater<>());
  if (s.size() > 2) s.erase(s.begin());  // a 2-value spectrum keeps both; see header

  double total = 0.0;
  for (double v : s) total += v;
  if (total <= 0.0) throw std::invalid_argument("rho: remaining spectrum is all zero");

  const double u = 1.0 / static_cast<double>(s.size());
  double kl = 0.0;
  for (double v : s) {
    const double p = std::max(v / total, 1e-12);
    kl += u * std::log(u / p);
  }
  return kl;
}

SpectralReport spectral_report(const EmbeddingMatrix& embeddings) {
  SpectralReport report;
  report.singular_values = singular_spectrum(embeddings);
  report.rho = rho(report.singular_values);
  return report;
}

PerClassSpectra per_class_spectra(const EmbeddingMatrix& embeddings, const LabelVector& labels) {
  validate_labels(labels, embeddings.size());
  const Matrix& x = embeddings.values();

  PerClassSpectra out;
  std::vector<std::pair<int, std::vector<std::size_t>>> groups;
  for (auto& [cls, members] : group_by_class(labels)) {
    if (members.size() < 2)
      out.skipped.push_back(cls);
    else
      groups.emplace_back(cls, std::move(members));
  }
  if (groups.empty()) return out;

  std::vector<std::vector<double>> spectra(groups.size());
  parallel_for(groups.size(), [&](std::size_t g) {
    const auto& members = groups[g].second;
    Matrix sub(members.size(), x.cols());
    for (std::size_t r = 0; r < members.size(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) sub(r, c) = x(members[r], c);
    spectra[g] = svd_values(sub);
  });

  std::size_t shortest = spectra.front().size();
  for (const auto& s : spectra) shortest = std::min(shortest, s.size());
  out.mean.assign(shortest, 0.0);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t i = 0; i < shortest; ++i)
      out.mean[i] += spectra[g][i] / static_cast<double>(groups.size());
    out.spectra[groups[g].first] = std::move(spectra[g]);
  }
  return out;
}

DensityReport density_measures(const EmbeddingMatrix& embeddings, const LabelVector& labels) {
  validate_labels(labels, embeddings.size());
  const Matrix& x = embeddings.values();
  const auto groups = group_by_class(labels);
  if (groups.size() < 2)
    throw std::invalid_argument("density_measures: needs at least 2 classes");

  DensityReport out;
  std::size_t intra_pairs = 0;
  for (const auto& [cls, members] : groups) {
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        out.pi_intra += euclidean_distance(x.row(members[a]), x.row(members[b]));
        ++intra_pairs;
      }
    }
  }
  if (intra_pairs == 0)
    throw std::invalid_argument("density_measures: no within-class pairs");
  out.pi_intra /= static_cast<double>(intra_pairs);

  Matrix means(groups.size(), x.cols());
  std::size_t g = 0;
  for (const auto& [cls, members] : groups) {
    for (std::size_t m : members)
      for (std::size_t c = 0; c < x.cols(); ++c)
        means(g, c) += x(m, c) / static_cast<double>(members.size());
    ++g;
  }
  std::size_t inter_pairs = 0;
  for (std::size_t a = 0; a < means.rows(); ++a) {
    for (std::size_t b = a + 1; b < means.rows(); ++b) {
      out.pi_inter += euclidean_distance(means.row(a), means.row(b));
      ++inter_pairs;
    }
  }
  out.pi_inter /= static_cast<double>(inter_pairs);

  if (out.pi_inter > 0.0) {
    out.pi_ratio = out.pi_intra / out.pi_inter;
  } else {
    out.pi_ratio = 0.0;
    out.degenerate = true;
  }
  return out;
}

}  // namespace dml
