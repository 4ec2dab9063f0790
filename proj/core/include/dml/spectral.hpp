#pragma once

#include <map>
#include <vector>

#include "dml/matrix.hpp"

namespace dml {

struct SpectralReport {
  std::vector<double> singular_values;  // descending, full spectrum
  double rho = 0.0;
};

struct PerClassSpectra {
  std::map<int, std::vector<double>> spectra;
  std::vector<double> mean;  // entrywise over classes, truncated to shortest
  std::vector<int> skipped;  // singleton classes left out
};

struct DensityReport {
  double pi_intra = 0.0;
  double pi_inter = 0.0;
  double pi_ratio = 0.0;
  bool degenerate = false;  // pi_inter was zero; ratio reported as 0
};

// Singular values of the n x D embedding matrix, descending.
std::vector<double> singular_spectrum(const EmbeddingMatrix& embeddings);

// Spectral decay: drop the largest singular value, renormalize the rest to
// sum 1, and return the KL divergence from the uniform distribution to it
// (entries clamped at 1e-12). A length-2 spectrum would be left with a single
// entry and a constant zero, so for that case the divergence is taken over
// the full normalized spectrum instead. Lower means variance is spread over
// more directions.
double rho(const std::vector<double>& spectrum);

SpectralReport spectral_report(const EmbeddingMatrix& embeddings);

// Per-class singular spectra plus their entrywise mean. Classes with fewer
// than 2 members are skipped and reported.
PerClassSpectra per_class_spectra(const EmbeddingMatrix& embeddings, const LabelVector& labels);

// pi_intra: mean pairwise distance within classes (all same-class pairs
// pooled); pi_inter: mean pairwise distance between class means; ratio of the
// two, 0 with the degenerate flag when pi_inter vanishes.
DensityReport density_measures(const EmbeddingMatrix& embeddings, const LabelVector& labels);

}  // namespace dml
