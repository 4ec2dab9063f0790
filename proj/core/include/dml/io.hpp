#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "dml/matrix.hpp"
#include "dml/toytrain.hpp"

namespace dml {

// File problems that should surface as a distinct process exit code (2):
// unrecognized or truncated on-disk data.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

struct EmbeddingDump {
  EmbeddingMatrix embeddings;
  std::optional<LabelVector> labels;
  std::uint16_t version = 1;
};

// Binary layout: "DMLE", version u16, n u64, d u32, has_labels u8, then n u32
// labels when flagged, then n*d f32 row-major values; all little-endian.
// Values are stored in single precision, so write(read(x)) is byte-identical.
void write_dump(const std::string& path, const EmbeddingMatrix& embeddings,
                const LabelVector* labels);
EmbeddingDump read_dump(const std::string& path);

// CSV alternative: header "label,e0,e1,..." (or "e0,e1,..." without labels),
// one sample per row. read_embeddings sniffs the format: files starting with
// the binary magic parse as dumps, files starting with a CSV header parse as
// CSV, anything else is a FormatError ("bad magic").
void write_csv(const std::string& path, const EmbeddingMatrix& embeddings,
               const LabelVector* labels);
EmbeddingDump read_csv(const std::string& path);
EmbeddingDump read_embeddings(const std::string& path);

// key=value configuration with # comments. Unknown keys are rejected at
// parse time; every error message carries the offending line number.
class RunConfig {
 public:
  static RunConfig parse(const std::string& text);
  static RunConfig parse_file(const std::string& path);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_real(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  int line(const std::string& key) const;  // 0 when the key is absent

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::map<std::string, Entry> entries_;
};

// Applies the toy-training keys of a RunConfig on top of the defaults.
ToyConfig toy_config_from(const RunConfig& config);

}  // namespace dml
