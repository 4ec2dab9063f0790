// dml: command line front end for the embedding toolkit.
//
// Subcommands: toy (2D line benchmark trainer), analyze (spectral and density
// diagnostics of a saved embedding), eval (retrieval metrics), sample
// (mini-batch construction strategies). File problems exit with code 2, other
// errors with 1.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "dml/batching.hpp"
#include "dml/evaluation.hpp"
#include "dml/io.hpp"
#include "dml/matrix.hpp"
#include "dml/spectral.hpp"
#include "dml/toytrain.hpp"

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_metric_lines(std::ostream& out, const dml::MetricReport& report) {
  for (const auto& [k, v] : report.recall_at) out << "recall@" << k << "=" << fmt(v) << "\n";
  out << "nmi=" << fmt(report.nmi) << "\n";
  out << "f1=" << fmt(report.f1) << "\n";
  out << "map@c=" << fmt(report.map_at_c) << "\n";
  out << "map@1000=" << fmt(report.map_at_1000) << "\n";
  out << "zero_depth_queries=" << report.zero_depth_queries << "\n";
}

void write_spectrum_csv(const std::filesystem::path& path, const std::vector<double>& spectrum) {
  std::ofstream out = open_out(path);
  out << "index,singular_value\n";
  for (std::size_t i = 0; i < spectrum.size(); ++i) out << i << "," << fmt(spectrum[i]) << "\n";
}

// Minimal scatter plot: fixed palette per class, light axes through the
// origin. Only 2D embeddings are drawn.
void write_scatter_svg(const std::filesystem::path& path, const dml::EmbeddingMatrix& embeddings,
                       const dml::LabelVector& labels) {
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  constexpr double kSize = 420.0, kMargin = 30.0;

  double lo = -1.1, hi = 1.1;
  for (std::size_t i = 0; i < embeddings.size(); ++i)
    for (std::size_t c = 0; c < 2; ++c) {
      lo = std::min(lo, embeddings.values()(i, c) - 0.1);
      hi = std::max(hi, embeddings.values()(i, c) + 0.1);
    }
  const double scale = (kSize - 2 * kMargin) / (hi - lo);
  auto sx = [&](double v) { return kMargin + (v - lo) * scale; };
  auto sy = [&](double v) { return kSize - kMargin - (v - lo) * scale; };

  std::ofstream out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << kSize << " " << kSize
      << "\">\n";
  out << "<rect width=\"" << kSize << "\" height=\"" << kSize << "\" fill=\"white\"/>\n";
  out << "<line x1=\"" << sx(lo) << "\" y1=\"" << sy(0) << "\" x2=\"" << sx(hi) << "\" y2=\""
      << sy(0) << "\" stroke=\"#cccccc\"/>\n";
  out << "<line x1=\"" << sx(0) << "\" y1=\"" << sy(lo) << "\" x2=\"" << sx(0) << "\" y2=\""
      << sy(hi) << "\" stroke=\"#cccccc\"/>\n";
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const char* color = kPalette[static_cast<std::size_t>(labels[i]) % 8];
    out << "<circle cx=\"" << sx(embeddings.values()(i, 0)) << "\" cy=\""
        << sy(embeddings.values()(i, 1)) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
  }
  out << "</svg>\n";
}

void run_toy_once(const dml::ToyConfig& config, bool regularized,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const dml::ToyResult result = dml::train_toy(config, regularized);

  {
    std::ofstream trace = open_out(dir / "trace.csv");
    trace << "iteration,loss,rho\n";
    for (const dml::TraceRow& row : result.trace)
      trace << row.iteration << "," << fmt(row.loss) << "," << fmt(row.rho) << "\n";
  }
  write_spectrum_csv(dir / "spectrum.csv", result.train_spectral.singular_values);
  {
    std::ofstream metrics = open_out(dir / "metrics.txt");
    write_metric_lines(metrics, result.test_metrics);
    metrics << "rho_train=" << fmt(result.train_spectral.rho) << "\n";
  }
  if (result.train_embeddings.dim() == 2) {
    write_scatter_svg(dir / "embed_train.svg", result.train_embeddings, result.data.train_labels);
    write_scatter_svg(dir / "embed_test.svg", result.test_embeddings, result.data.test_labels);
  }
  dml::write_dump((dir / "embed_train.dmle").string(), result.train_embeddings,
                  &result.data.train_labels);
  dml::write_dump((dir / "embed_test.dmle").string(), result.test_embeddings,
                  &result.data.test_labels);
  char name[32];
  for (const auto& [iteration, snapshot] : result.snapshots) {
    std::snprintf(name, sizeof name, "snapshot_%04d.dmle", iteration);
    dml::write_dump((dir / name).string(), snapshot, &result.data.train_labels);
  }
}

int cmd_toy(const std::string& config_path, bool regularized,
            const std::vector<std::uint64_t>& seeds, const std::string& out_dir) {
  dml::ToyConfig config = dml::toy_config_from(dml::RunConfig::parse_file(config_path));
  if (seeds.empty()) {
    run_toy_once(config, regularized, out_dir);
    return 0;
  }
  for (const std::uint64_t seed : seeds) {
    config.seed = seed;
    run_toy_once(config, regularized,
                 std::filesystem::path(out_dir) / ("seed_" + std::to_string(seed)));
  }
  return 0;
}

int cmd_analyze(const std::string& dump_path, bool per_class, const std::string& out_csv) {
  const dml::EmbeddingDump dump = dml::read_embeddings(dump_path);
  if (per_class && !dump.labels)
    throw std::runtime_error("analyze: --per-class needs a labeled dump");

  const dml::SpectralReport spectral = dml::spectral_report(dump.embeddings);
  std::printf("rho=%s\n", fmt(spectral.rho).c_str());
  if (dump.labels) {
    const dml::DensityReport density = dml::density_measures(dump.embeddings, *dump.labels);
    std::printf("pi_intra=%s\n", fmt(density.pi_intra).c_str());
    std::printf("pi_inter=%s\n", fmt(density.pi_inter).c_str());
    std::printf("pi_ratio=%s\n", fmt(density.pi_ratio).c_str());
    std::printf("degenerate=%d\n", density.degenerate ? 1 : 0);
  }

  if (!per_class) {
    write_spectrum_csv(out_csv, spectral.singular_values);
    return 0;
  }
  const dml::PerClassSpectra spectra = dml::per_class_spectra(dump.embeddings, *dump.labels);
  std::ofstream out = open_out(out_csv);
  out << "class,index,singular_value\n";
  for (const auto& [cls, values] : spectra.spectra)
    for (std::size_t i = 0; i < values.size(); ++i)
      out << cls << "," << i << "," << fmt(values[i]) << "\n";
  for (std::size_t i = 0; i < spectra.mean.size(); ++i)
    out << "mean," << i << "," << fmt(spectra.mean[i]) << "\n";
  for (std::size_t i = 0; i < spectra.skipped.size(); ++i)
    std::printf("skipped%s%d%s", i ? "," : "=", spectra.skipped[i],
                i + 1 == spectra.skipped.size() ? "\n" : "");
  return 0;
}

int cmd_eval(const std::string& dump_path, std::vector<std::size_t> ks, std::uint64_t seed) {
  const dml::EmbeddingDump dump = dml::read_embeddings(dump_path);
  if (!dump.labels) throw std::runtime_error("eval: needs a labeled dump");

  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  const dml::MetricReport report = dml::evaluate_all(dump.embeddings, *dump.labels, ks, seed);
  write_metric_lines(std::cout, report);
  return 0;
}

int cmd_sample(const std::string& dump_path, const std::string& strategy, std::size_t b,
               std::size_t m, std::uint64_t seed, std::size_t pool, std::size_t bins) {
  const dml::EmbeddingDump dump = dml::read_embeddings(dump_path);
  const bool needs_labels = strategy != "gc";
  if (needs_labels && !dump.labels)
    throw std::runtime_error("sample: strategy " + strategy + " needs a labeled dump");

  std::vector<std::size_t> indices;
  if (strategy == "spc2" || strategy == "spc4" || strategy == "spc8") {
    const std::size_t per_class = strategy[3] - '0';
    indices = dml::spc_sampler(*dump.labels, b, per_class, seed).indices;
  } else if (strategy == "spcr") {
    indices = dml::spc_r_sampler(*dump.labels, b, seed).indices;
  } else if (strategy == "gc") {
    indices = dml::greedy_coreset_select(dump.embeddings.values(), b, seed);
  } else if (strategy == "ddm" || strategy == "frd") {
    dml::MemoryBank bank(dump.embeddings.size(), dump.embeddings.dim(), *dump.labels);
    std::vector<std::size_t> all(dump.embeddings.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    bank.update(all, dump.embeddings);
    dml::BankSampleParams params;
    params.pool_size = pool;
    params.candidates = m;
    params.bins = bins;
    indices = strategy == "ddm" ? dml::ddm_select(bank, b, seed, params).indices
                                : dml::frd_select(bank, b, seed, params).indices;
  }
  for (const std::size_t i : indices) std::printf("%zu\n", i);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"embedding-space toolkit: toy trainer, diagnostics, metrics, batch samplers"};
  app.require_subcommand(1);

  std::string config_path, dump_path, out_dir = ".", out_csv = "spectrum.csv";
  std::string strategy;
  bool regularized = false, per_class = false;
  std::vector<std::uint64_t> seeds;
  std::vector<std::size_t> ks = {1, 2, 4, 8};
  std::uint64_t seed = 0;
  std::size_t b = 8, m = 8, pool = 1024, bins = 50;

  CLI::App* toy = app.add_subcommand("toy", "train the 2D line benchmark and dump its artifacts");
  toy->add_option("config", config_path, "key=value run configuration")->required();
  toy->add_flag("--regularized", regularized, "enable pair-role switching");
  toy->add_option("--seeds", seeds, "comma separated seed list; one output dir per seed")
      ->delimiter(',');
  toy->add_option("--out", out_dir, "output directory (default: current)");

  CLI::App* analyze = app.add_subcommand("analyze", "spectral decay and density diagnostics");
  analyze->add_option("dump", dump_path, "embedding dump or csv")->required();
  analyze->add_flag("--per-class", per_class, "emit per-class spectra (needs labels)");
  analyze->add_option("--out", out_csv, "spectrum csv path (default spectrum.csv)");

  CLI::App* eval = app.add_subcommand("eval", "retrieval metrics of a labeled embedding");
  eval->add_option("dump", dump_path, "embedding dump or csv")->required();
  eval->add_option("--k", ks, "recall cutoffs, deduplicated")->delimiter(',');
  eval->add_option("--seed", seed, "clustering seed");

  CLI::App* sample = app.add_subcommand("sample", "print a mini-batch index selection");
  sample->add_option("dump", dump_path, "embedding dump or csv")->required();
  sample->add_option("--strategy", strategy, "spc2|spc4|spc8|spcr|gc|ddm|frd")
      ->required()
      ->check(CLI::IsMember({"spc2", "spc4", "spc8", "spcr", "gc", "ddm", "frd"}));
  sample->add_option("--b", b, "batch size (default 8)");
  sample->add_option("--m", m, "candidate batches for ddm/frd (default 8)");
  sample->add_option("--seed", seed, "draw seed");
  sample->add_option("--pool", pool, "reference pool size for ddm/frd (default 1024)");
  sample->add_option("--bins", bins, "histogram bins for ddm (default 50)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (toy->parsed()) return cmd_toy(config_path, regularized, seeds, out_dir);
    if (analyze->parsed()) return cmd_analyze(dump_path, per_class, out_csv);
    if (eval->parsed()) return cmd_eval(dump_path, ks, seed);
    return cmd_sample(dump_path, strategy, b, m, seed, pool, bins);
  } catch (const dml::FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
