// End-to-end checks of the dml executable. The binary path arrives through
// the DML_CLI_PATH compile definition; every command runs through std::system
// with stdout/stderr captured to files.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dml/batching.hpp"
#include "dml/evaluation.hpp"
#include "dml/io.hpp"
#include "dml/spectral.hpp"
#include "dml/toytrain.hpp"
#include "testutil.hpp"

using namespace dml;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::filesystem::path scratch_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "dml_cli_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void spit(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out.good());
  out << text;
}

RunResult run_cli(const std::string& args) {
  const auto out_path = scratch_dir() / "stdout.txt";
  const auto err_path = scratch_dir() / "stderr.txt";
  const std::string command = std::string(DML_CLI_PATH) + " " + args + " > " +
                              out_path.string() + " 2> " + err_path.string();
  const int status = std::system(command.c_str());
  RunResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out_path);
  result.err = slurp(err_path);
  return result;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

ToyConfig cli_toy_config() {
  ToyConfig config;
  config.variant = LineVariant::axis;
  config.hidden_width = 8;
  config.iterations = 40;
  config.batch_size = 12;
  config.samples_per_line = 4;
  config.seed = 3;
  return config;
}

const char* kToyConfigText =
    "variant = axis\n"
    "hidden_width = 8\n"
    "iterations = 40\n"
    "batch_size = 12\n"
    "samples_per_line = 4\n"
    "seed = 3\n";

// Two tight clusters on orthogonal axes: every query's nearest neighbor
// shares its class.
void write_cluster_dump(const std::filesystem::path& path, LabelVector* labels_out) {
  Matrix m(8, 3);
  LabelVector labels;
  for (std::size_t i = 0; i < 8; ++i) {
    const bool first = i < 4;
    const double wiggle = 0.01 * static_cast<double>(i);
    m(i, 0) = first ? 1.0 : wiggle;
    m(i, 1) = first ? wiggle : 1.0;
    m(i, 2) = 0.1;
    labels.push_back(first ? 0 : 1);
  }
  write_dump(path.string(), EmbeddingMatrix(std::move(m), false), &labels);
  if (labels_out) *labels_out = labels;
}

}  // namespace

TEST_CASE("toy command writes the full artifact set deterministically") {
  const auto dir = scratch_dir();
  const auto config_path = dir / "toy.cfg";
  spit(config_path, kToyConfigText);

  const auto out_a = dir / "toy_a";
  const RunResult a = run_cli("toy " + config_path.string() + " --out " + out_a.string());
  CHECK(a.exit_code == 0);
  for (const char* name : {"trace.csv", "spectrum.csv", "metrics.txt", "embed_train.svg",
                           "embed_test.svg", "embed_train.dmle", "embed_test.dmle",
                           "snapshot_0020.dmle", "snapshot_0040.dmle"})
    CHECK(std::filesystem::exists(out_a / name));

  // the trace matches a library run of the same configuration, byte for byte
  const ToyResult expected = train_toy(cli_toy_config(), false);
  std::string trace = "iteration,loss,rho\n";
  for (const TraceRow& row : expected.trace)
    trace += std::to_string(row.iteration) + "," + fmt(row.loss) + "," + fmt(row.rho) + "\n";
  CHECK(slurp(out_a / "trace.csv") == trace);

  const auto reference_dump = dir / "reference.dmle";
  write_dump(reference_dump.string(), expected.train_embeddings, &expected.data.train_labels);
  CHECK(slurp(out_a / "embed_train.dmle") == slurp(reference_dump));

  const std::string metrics = slurp(out_a / "metrics.txt");
  CHECK(metrics.find("recall@1=" + fmt(expected.test_metrics.recall_at.at(1)) + "\n") !=
        std::string::npos);
  CHECK(metrics.find("rho_train=" + fmt(expected.train_spectral.rho) + "\n") !=
        std::string::npos);

  // a rerun reproduces the trace byte for byte
  const auto out_b = dir / "toy_b";
  const RunResult b = run_cli("toy " + config_path.string() + " --out " + out_b.string());
  CHECK(b.exit_code == 0);
  CHECK(slurp(out_b / "trace.csv") == slurp(out_a / "trace.csv"));

  // seed lists fan out into one directory per seed
  const auto out_c = dir / "toy_c";
  const RunResult c = run_cli("toy " + config_path.string() + " --seeds 1,2 --regularized --out " +
                              out_c.string());
  CHECK(c.exit_code == 0);
  CHECK(std::filesystem::exists(out_c / "seed_1" / "trace.csv"));
  CHECK(std::filesystem::exists(out_c / "seed_2" / "trace.csv"));
  CHECK(slurp(out_c / "seed_1" / "trace.csv") != slurp(out_c / "seed_2" / "trace.csv"));

  // config problems surface as format errors with the offending line
  const auto bad_config = dir / "bad.cfg";
  spit(bad_config, "variant = axis\nwat = 1\n");
  const RunResult bad = run_cli("toy " + bad_config.string());
  CHECK(bad.exit_code == 2);
  CHECK(bad.err.find("config line 2") != std::string::npos);
}

TEST_CASE("analyze prints diagnostics and writes the spectrum") {
  const auto dir = scratch_dir();
  const auto dump_path = dir / "ortho.dmle";
  Matrix eye(4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 4; ++c) eye(i, c) = i == c ? 1.0 : 0.0;
  const LabelVector labels = {0, 0, 1, 1};
  const EmbeddingMatrix emb(std::move(eye), true);
  write_dump(dump_path.string(), emb, &labels);

  const auto csv = dir / "ortho_spectrum.csv";
  const RunResult r = run_cli("analyze " + dump_path.string() + " --out " + csv.string());
  CHECK(r.exit_code == 0);
  REQUIRE(r.out.rfind("rho=", 0) == 0);
  CHECK(std::stod(r.out.substr(4)) == 0.0);  // orthonormal rows: flat spectrum

  const DensityReport density = density_measures(emb, labels);
  CHECK(r.out.find("pi_intra=" + fmt(density.pi_intra) + "\n") != std::string::npos);
  CHECK(r.out.find("pi_inter=" + fmt(density.pi_inter) + "\n") != std::string::npos);
  CHECK(r.out.find("degenerate=0") != std::string::npos);

  const SpectralReport spectral = spectral_report(emb);
  std::string expected_csv = "index,singular_value\n";
  for (std::size_t i = 0; i < spectral.singular_values.size(); ++i)
    expected_csv += std::to_string(i) + "," + fmt(spectral.singular_values[i]) + "\n";
  CHECK(slurp(csv) == expected_csv);

  // per-class emission includes the class spectra and their mean
  const auto per_class_csv = dir / "per_class.csv";
  const RunResult pc = run_cli("analyze " + dump_path.string() + " --per-class --out " +
                               per_class_csv.string());
  CHECK(pc.exit_code == 0);
  const std::string pc_text = slurp(per_class_csv);
  CHECK(pc_text.find("class,index,singular_value\n") == 0);
  CHECK(pc_text.find("mean,0,") != std::string::npos);

  // unlabeled dumps cannot be split per class
  const auto unlabeled = dir / "unlabeled.dmle";
  write_dump(unlabeled.string(), emb, nullptr);
  CHECK(run_cli("analyze " + unlabeled.string() + " --per-class").exit_code == 1);

  // damaged input is a format problem: exit code 2
  const auto junk = dir / "junk.dmle";
  spit(junk, "not an embedding file");
  const RunResult bad = run_cli("analyze " + junk.string());
  CHECK(bad.exit_code == 2);
  CHECK(bad.err.find("bad magic") != std::string::npos);
}

TEST_CASE("eval prints the metric report with deduplicated cutoffs") {
  const auto dir = scratch_dir();
  const auto dump_path = dir / "clusters.dmle";
  LabelVector labels;
  write_cluster_dump(dump_path, &labels);

  const RunResult r = run_cli("eval " + dump_path.string() + " --k 1,2,2,1 --seed 5");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("recall@1=1\n") == 0);  // separated clusters
  // each cutoff appears exactly once
  CHECK(r.out.find("recall@1=") == r.out.rfind("recall@1="));
  CHECK(r.out.find("recall@2=") == r.out.rfind("recall@2="));

  const EmbeddingDump dump = read_dump(dump_path.string());
  const MetricReport expected = evaluate_all(dump.embeddings, labels, {1, 2}, 5);
  CHECK(r.out.find("nmi=" + fmt(expected.nmi) + "\n") != std::string::npos);
  CHECK(r.out.find("f1=" + fmt(expected.f1) + "\n") != std::string::npos);
  CHECK(r.out.find("map@c=" + fmt(expected.map_at_c) + "\n") != std::string::npos);
  CHECK(r.out.find("map@1000=" + fmt(expected.map_at_1000) + "\n") != std::string::npos);
  CHECK(r.out.find("zero_depth_queries=0\n") != std::string::npos);

  // csv input works wherever a dump does
  const auto csv_path = dir / "clusters.csv";
  write_csv(csv_path.string(), dump.embeddings, &labels);
  CHECK(run_cli("eval " + csv_path.string() + " --k 1 --seed 5").out.find("recall@1=1\n") == 0);

  // cutoffs must leave room for a neighbor list
  CHECK(run_cli("eval " + dump_path.string() + " --k 8").exit_code == 1);
  // labels are mandatory
  const auto unlabeled = dir / "clusters_unlabeled.dmle";
  write_dump(unlabeled.string(), dump.embeddings, nullptr);
  CHECK(run_cli("eval " + unlabeled.string()).exit_code == 1);
}

TEST_CASE("sample prints index selections that match the library") {
  const auto dir = scratch_dir();
  const auto dump_path = dir / "pool.dmle";
  LabelVector labels;
  write_cluster_dump(dump_path, &labels);
  const EmbeddingDump dump = read_dump(dump_path.string());

  auto printed_indices = [](const std::string& text) {
    std::vector<std::size_t> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) out.push_back(static_cast<std::size_t>(std::stoul(line)));
    return out;
  };

  const RunResult spc = run_cli("sample " + dump_path.string() + " --strategy spc2 --b 4 --seed 7");
  CHECK(spc.exit_code == 0);
  const auto spc_indices = printed_indices(spc.out);
  REQUIRE(spc_indices.size() == 4);
  CHECK(spc_indices == spc_sampler(labels, 4, 2, 7).indices);
  // deterministic rerun
  CHECK(run_cli("sample " + dump_path.string() + " --strategy spc2 --b 4 --seed 7").out == spc.out);

  const RunResult gc = run_cli("sample " + dump_path.string() + " --strategy gc --b 3 --seed 2");
  CHECK(gc.exit_code == 0);
  CHECK(printed_indices(gc.out) == greedy_coreset_select(dump.embeddings.values(), 3, 2));

  const RunResult ddm = run_cli("sample " + dump_path.string() +
                                " --strategy ddm --b 4 --m 3 --seed 9 --pool 16 --bins 16");
  CHECK(ddm.exit_code == 0);
  MemoryBank bank(8, 3, labels);
  std::vector<std::size_t> all = {0, 1, 2, 3, 4, 5, 6, 7};
  bank.update(all, dump.embeddings);
  BankSampleParams params;
  params.pool_size = 16;
  params.candidates = 3;
  params.bins = 16;
  CHECK(printed_indices(ddm.out) == ddm_select(bank, 4, 9, params).indices);

  const RunResult frd = run_cli("sample " + dump_path.string() +
                                " --strategy frd --b 4 --m 3 --seed 9 --pool 16");
  CHECK(frd.exit_code == 0);
  BankSampleParams frd_params;
  frd_params.pool_size = 16;
  frd_params.candidates = 3;
  CHECK(printed_indices(frd.out) == frd_select(bank, 4, 9, frd_params).indices);

  // violated preconditions: batch size not divisible by the class quota
  CHECK(run_cli("sample " + dump_path.string() + " --strategy spc2 --b 5").exit_code == 1);
  // unknown strategies are rejected at the flag level
  CHECK(run_cli("sample " + dump_path.string() + " --strategy magic").exit_code != 0);
  // gc needs no labels, spc2 does
  const auto unlabeled = dir / "pool_unlabeled.dmle";
  write_dump(unlabeled.string(), dump.embeddings, nullptr);
  CHECK(run_cli("sample " + unlabeled.string() + " --strategy gc --b 2").exit_code == 0);
  CHECK(run_cli("sample " + unlabeled.string() + " --strategy spc2 --b 4").exit_code == 1);
}
