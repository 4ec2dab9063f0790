#include "dml/io.hpp"

#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace dml {

namespace {

constexpr char kMagic[4] = {'D', 'M', 'L', 'E'};
constexpr std::uint16_t kVersion = 1;

void put_bytes(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  explicit ByteReader(std::string data) : data_(std::move(data)) {}

  std::uint64_t take(int bytes) {
    if (pos_ + static_cast<std::size_t>(bytes) > data_.size())
      throw FormatError("truncated dump");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }

  bool exhausted() const { return pos_ == data_.size(); }
  const std::string& data() const { return data_; }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

void write_dump(const std::string& path, const EmbeddingMatrix& embeddings,
                const LabelVector* labels) {
  const std::size_t n = embeddings.size();
  const std::size_t d = embeddings.dim();
  if (labels && labels->size() != n)
    throw std::invalid_argument("write_dump: label count mismatch");

  std::string out;
  out.reserve(19 + (labels ? 4 * n : 0) + 4 * n * d);
  out.append(kMagic, 4);
  put_bytes(out, kVersion, 2);
  put_bytes(out, n, 8);
  put_bytes(out, d, 4);
  out.push_back(labels ? 1 : 0);
  if (labels)
    for (int y : *labels) {
      if (y < 0) throw std::invalid_argument("write_dump: negative label");
      put_bytes(out, static_cast<std::uint64_t>(static_cast<std::uint32_t>(y)), 4);
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      const float f = static_cast<float>(embeddings.values()(i, c));
      put_bytes(out, std::bit_cast<std::uint32_t>(f), 4);
    }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error("write_dump: cannot open " + path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw std::runtime_error("write_dump: short write to " + path);
}

EmbeddingDump read_dump(const std::string& path) {
  ByteReader r(slurp(path));
  if (r.data().size() < 4 || r.data().compare(0, 4, kMagic, 4) != 0)
    throw FormatError("bad magic");
  r.take(4);

  EmbeddingDump dump;
  dump.version = static_cast<std::uint16_t>(r.take(2));
  if (dump.version != kVersion)
    throw FormatError("unsupported dump version " + std::to_string(dump.version));
  const std::uint64_t n = r.take(8);
  const std::uint32_t d = static_cast<std::uint32_t>(r.take(4));
  const std::uint64_t has_labels = r.take(1);
  if (has_labels > 1) throw FormatError("invalid label flag");
  if (n == 0 || d == 0) throw FormatError("empty dump");

  if (has_labels) {
    LabelVector labels(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      const std::uint32_t y = static_cast<std::uint32_t>(r.take(4));
      if (y > 0x7fffffffu) throw FormatError("label out of range");
      labels[i] = static_cast<int>(y);
    }
    dump.labels = std::move(labels);
  }
  Matrix values(n, d);
  for (std::uint64_t i = 0; i < n; ++i)
    for (std::uint32_t c = 0; c < d; ++c) {
      const float f = std::bit_cast<float>(static_cast<std::uint32_t>(r.take(4)));
      if (!std::isfinite(f)) throw FormatError("non-finite value in dump");
      values(i, c) = static_cast<double>(f);
    }
  if (!r.exhausted()) throw FormatError("trailing bytes after dump payload");
  dump.embeddings = EmbeddingMatrix(std::move(values), false);
  return dump;
}

void write_csv(const std::string& path, const EmbeddingMatrix& embeddings,
               const LabelVector* labels) {
  const std::size_t n = embeddings.size();
  const std::size_t d = embeddings.dim();
  if (labels && labels->size() != n)
    throw std::invalid_argument("write_csv: label count mismatch");

  std::ofstream file(path, std::ios::trunc);
  if (!file) throw std::runtime_error("write_csv: cannot open " + path);
  if (labels) file << "label";
  for (std::size_t c = 0; c < d; ++c) file << (labels || c ? "," : "") << "e" << c;
  file << "\n";
  char buf[32];
  for (std::size_t i = 0; i < n; ++i) {
    if (labels) file << (*labels)[i];
    for (std::size_t c = 0; c < d; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", embeddings.values()(i, c));
      file << (labels || c ? "," : "") << buf;
    }
    file << "\n";
  }
  if (!file) throw std::runtime_error("write_csv: short write to " + path);
}

EmbeddingDump read_csv(const std::string& path) {
  std::istringstream in(slurp(path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty csv");
  const auto header = split_csv_line(line);
  const bool has_labels = header.front() == "label";
  const std::size_t d = header.size() - (has_labels ? 1 : 0);
  if (d == 0) throw FormatError("csv header has no embedding columns");
  for (std::size_t c = 0; c < d; ++c)
    if (header[c + (has_labels ? 1 : 0)] != "e" + std::to_string(c))
      throw FormatError("csv header: expected column e" + std::to_string(c));

  std::vector<double> values;
  LabelVector labels;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw FormatError("csv line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " cells");
    std::size_t at = 0;
    if (has_labels) {
      long y = 0;
      const auto& cell = cells[at++];
      const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), y);
      if (ec != std::errc() || p != cell.data() + cell.size() || y < 0)
        throw FormatError("csv line " + std::to_string(line_no) + ": bad label");
      labels.push_back(static_cast<int>(y));
    }
    for (std::size_t c = 0; c < d; ++c) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cells[at], &used);
        if (used != cells[at].size() || !std::isfinite(v)) throw std::invalid_argument("");
        values.push_back(v);
      } catch (const std::exception&) {
        throw FormatError("csv line " + std::to_string(line_no) + ": bad value in column e" +
                          std::to_string(c));
      }
      ++at;
    }
  }
  if (values.empty()) throw FormatError("csv has no data rows");

  const std::size_t n = values.size() / d;
  Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) m(i, c) = values[i * d + c];
  EmbeddingDump dump;
  dump.embeddings = EmbeddingMatrix(std::move(m), false);
  if (has_labels) dump.labels = std::move(labels);
  return dump;
}

EmbeddingDump read_embeddings(const std::string& path) {
  const std::string head = slurp(path).substr(0, 6);
  if (head.size() >= 4 && head.compare(0, 4, kMagic, 4) == 0) return read_dump(path);
  if (head.rfind("label,", 0) == 0 || head.rfind("e0,", 0) == 0 || head.rfind("e0\n", 0) == 0 ||
      head.rfind("e0\r", 0) == 0)
    return read_csv(path);
  throw FormatError("bad magic");
}

namespace {

const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      "variant",       "hidden_width", "hidden_layers",    "input_dim",
      "output_dim",    "iterations",   "batch_size",       "learning_rate",
      "margin",        "p_switch",     "samples_per_line", "seed",
  };
  return keys;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw FormatError("config line " + std::to_string(line_no) + ": empty key or value");
    if (!known_config_keys().count(key))
      throw FormatError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (config.entries_.count(key))
      throw FormatError("config line " + std::to_string(line_no) + ": duplicate key '" + key +
                        "'");
    config.entries_[key] = {value, line_no};
  }
  return config;
}

RunConfig RunConfig::parse_file(const std::string& path) { return parse(slurp(path)); }

bool RunConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second.value;
}

double RunConfig::get_real(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second.value, &used);
    if (used != it->second.value.size() || !std::isfinite(v)) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw FormatError("config line " + std::to_string(it->second.line) + ": '" +
                      it->second.value + "' is not a number for key '" + key + "'");
  }
}

long RunConfig::get_int(const std::string& key, long fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const auto& v = it->second.value;
  long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw FormatError("config line " + std::to_string(it->second.line) + ": '" + v +
                      "' is not an integer for key '" + key + "'");
  return out;
}

int RunConfig::line(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? 0 : it->second.line;
}

ToyConfig toy_config_from(const RunConfig& config) {
  ToyConfig toy;
  const std::string variant = config.get_string("variant", "diagonal");
  if (variant == "diagonal") {
    toy.variant = LineVariant::diagonal;
  } else if (variant == "axis") {
    toy.variant = LineVariant::axis;
  } else {
    throw FormatError("config line " + std::to_string(config.line("variant")) +
                      ": variant must be 'diagonal' or 'axis'");
  }
  toy.hidden_width = static_cast<int>(config.get_int("hidden_width", toy.hidden_width));
  toy.hidden_layers = static_cast<int>(config.get_int("hidden_layers", toy.hidden_layers));
  toy.input_dim = static_cast<int>(config.get_int("input_dim", toy.input_dim));
  toy.output_dim = static_cast<int>(config.get_int("output_dim", toy.output_dim));
  toy.iterations = static_cast<int>(config.get_int("iterations", toy.iterations));
  toy.batch_size = static_cast<int>(config.get_int("batch_size", toy.batch_size));
  toy.learning_rate = config.get_real("learning_rate", toy.learning_rate);
  toy.margin = config.get_real("margin", toy.margin);
  toy.p_switch = config.get_real("p_switch", toy.p_switch);
  toy.samples_per_line = static_cast<int>(config.get_int("samples_per_line", toy.samples_per_line));
  const long seed = config.get_int("seed", static_cast<long>(toy.seed));
  if (seed < 0)
    throw FormatError("config line " + std::to_string(config.line("seed")) +
                      ": seed must be non-negative");
  toy.seed = static_cast<std::uint64_t>(seed);
  toy.validate();
  return toy;
}

}  // namespace dml
