#include "spad/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace spad::io {

namespace {

// ---------------------------------------------------------------------------
// Little-endian stream helpers
// ---------------------------------------------------------------------------

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw FormatError(path, 0, "cannot open for writing");
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    offset_ += n;
    if (!out_) throw FormatError(path_, offset_, "write failed");
  }
  void u32(std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    bytes(b, 4);
  }
  void u16(std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8)};
    bytes(b, 2);
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u32(static_cast<std::uint32_t>(bits));
    u32(static_cast<std::uint32_t>(bits >> 32));
  }
  void magic(const char m[5]) { bytes(m, 4); }

 private:
  std::string path_;
  std::ofstream out_;
  std::uint64_t offset_ = 0;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw FormatError(path, 0, "cannot open for reading");
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw FormatError(path_, offset_, "unexpected end of file");
    offset_ += n;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::uint16_t u16() {
    unsigned char b[2];
    bytes(b, 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    std::uint64_t lo = u32();
    std::uint64_t hi = u32();
    std::uint64_t bits = lo | (hi << 32);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  void expect_magic(const char m[5]) {
    char got[5] = {0, 0, 0, 0, 0};
    bytes(got, 4);
    if (std::memcmp(got, m, 4) != 0)
      throw FormatError(path_, offset_ - 4,
                        std::string("bad magic, expected ") + m + " got " + got);
  }
  void expect_end() {
    char c;
    in_.read(&c, 1);
    if (!in_.eof()) throw FormatError(path_, offset_, "trailing bytes");
  }
  std::uint64_t offset() const { return offset_; }
  FormatError error(const std::string& msg) const {
    return FormatError(path_, offset_, msg);
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::uint64_t offset_ = 0;
};

std::uint32_t checked_dim(Reader& r, const char* what, std::uint32_t max = 1u << 20) {
  std::uint32_t v = r.u32();
  if (v == 0 || v > max) throw r.error(std::string("implausible ") + what);
  return v;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// SPHC
// ---------------------------------------------------------------------------

void write_sphc(const std::string& path, const HistogramCube& cube) {
  std::uint32_t maxv = 0;
  for (std::size_t i = 0; i < cube.counts.size(); ++i)
    maxv = std::max(maxv, cube.counts.data()[i]);
  const std::uint32_t dtype = maxv <= 0xffffu ? 0u : 1u;

  Writer w(path);
  w.magic("SPHC");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(cube.counts.rows()));
  w.u32(static_cast<std::uint32_t>(cube.counts.cols()));
  w.u32(static_cast<std::uint32_t>(cube.counts.bins()));
  w.u32(dtype);
  w.u32(static_cast<std::uint32_t>(cube.pulses_per_frame));
  const std::uint32_t* d = cube.counts.data();
  if (dtype == 0)
    for (std::size_t i = 0; i < cube.counts.size(); ++i)
      w.u16(static_cast<std::uint16_t>(d[i]));
  else
    for (std::size_t i = 0; i < cube.counts.size(); ++i) w.u32(d[i]);
}

HistogramCube read_sphc(const std::string& path) {
  Reader r(path);
  r.expect_magic("SPHC");
  if (r.u32() != 1) throw r.error("unsupported SPHC version");
  const std::uint32_t rows = checked_dim(r, "rows");
  const std::uint32_t cols = checked_dim(r, "cols");
  const std::uint32_t bins = checked_dim(r, "bins");
  const std::uint32_t dtype = r.u32();
  if (dtype > 1) throw r.error("unknown dtype");
  const std::uint32_t pulses = r.u32();
  if (pulses == 0) throw r.error("pulses_per_frame is zero");

  HistogramCube cube;
  cube.counts = Cube<std::uint32_t>(static_cast<int>(rows), static_cast<int>(cols),
                                    static_cast<int>(bins), 0u);
  cube.pulses_per_frame = static_cast<int>(pulses);
  std::uint32_t* d = cube.counts.data();
  if (dtype == 0)
    for (std::size_t i = 0; i < cube.counts.size(); ++i) d[i] = r.u16();
  else
    for (std::size_t i = 0; i < cube.counts.size(); ++i) d[i] = r.u32();
  r.expect_end();
  return cube;
}

// ---------------------------------------------------------------------------
// GSFA
// ---------------------------------------------------------------------------

void write_gsfa(const std::string& path, const gsf::GsfAtlas& atlas) {
  Writer w(path);
  w.magic("GSFA");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(atlas.entries.size()));
  w.u32(static_cast<std::uint32_t>(atlas.rows));
  w.u32(static_cast<std::uint32_t>(atlas.cols));
  for (const auto& e : atlas.entries) {
    w.f32(static_cast<float>(e.source.row));
    w.f32(static_cast<float>(e.source.col));
    w.f32(static_cast<float>(e.outscatter));
    for (int r = 0; r < atlas.rows; ++r)
      for (int c = 0; c < atlas.cols; ++c) w.f32(static_cast<float>(e.map(r, c)));
  }
}

gsf::GsfAtlas read_gsfa(const std::string& path) {
  Reader r(path);
  r.expect_magic("GSFA");
  if (r.u32() != 1) throw r.error("unsupported GSFA version");
  const std::uint32_t count = checked_dim(r, "entry count", 1u << 16);
  const std::uint32_t rows = checked_dim(r, "rows");
  const std::uint32_t cols = checked_dim(r, "cols");

  gsf::GsfAtlas atlas;
  atlas.rows = static_cast<int>(rows);
  atlas.cols = static_cast<int>(cols);
  atlas.entries.resize(count);
  for (auto& e : atlas.entries) {
    e.source.row = r.f32();
    e.source.col = r.f32();
    e.outscatter = r.f32();
    if (!(e.outscatter >= 0.0f) || e.outscatter >= 1.0)
      throw r.error("outscatter outside [0, 1)");
    e.map = Grid2<double>(atlas.rows, atlas.cols, 0.0);
    for (int rr = 0; rr < atlas.rows; ++rr)
      for (int cc = 0; cc < atlas.cols; ++cc) {
        const float v = r.f32();
        if (!(v >= 0.0f)) throw r.error("negative spread value");
        e.map(rr, cc) = v;
      }
  }
  r.expect_end();
  return atlas;
}

// ---------------------------------------------------------------------------
// PLUT
// ---------------------------------------------------------------------------

void write_plut(const std::string& path, const pileup::PileupLuts& luts) {
  Writer w(path);
  w.magic("PLUT");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(luts.n_alpha()));
  w.u32(static_cast<std::uint32_t>(luts.n_beta()));
  w.u32(static_cast<std::uint32_t>(luts.window));
  for (double v : luts.alpha_grid) w.f64(v);
  for (double v : luts.beta_grid) w.f64(v);
  for (double v : luts.gamma) w.f64(v);
  for (double v : luts.mu) w.f64(v);
  for (double v : luts.var) w.f64(v);
}

pileup::PileupLuts read_plut(const std::string& path) {
  Reader r(path);
  r.expect_magic("PLUT");
  if (r.u32() != 1) throw r.error("unsupported PLUT version");
  const std::uint32_t na = checked_dim(r, "alpha grid size", 1u << 16);
  const std::uint32_t nb = checked_dim(r, "beta grid size", 1u << 16);
  const std::uint32_t window = checked_dim(r, "window", 1u << 16);
  if (na < 2 || nb < 2) throw r.error("grids need at least two points");

  pileup::PileupLuts L;
  L.window = static_cast<int>(window);
  L.alpha_grid.resize(na);
  L.beta_grid.resize(nb);
  for (auto& v : L.alpha_grid) v = r.f64();
  for (auto& v : L.beta_grid) v = r.f64();
  const std::size_t n = static_cast<std::size_t>(na) * nb;
  L.gamma.resize(n);
  L.mu.resize(n);
  L.var.resize(n);
  for (auto& v : L.gamma) v = r.f64();
  for (auto& v : L.mu) v = r.f64();
  for (auto& v : L.var) v = r.f64();
  r.expect_end();
  for (std::size_t i = 1; i < L.alpha_grid.size(); ++i)
    if (!(L.alpha_grid[i] > L.alpha_grid[i - 1]))
      throw FormatError(path, 0, "alpha grid not strictly increasing");
  for (std::size_t i = 1; i < L.beta_grid.size(); ++i)
    if (!(L.beta_grid[i] > L.beta_grid[i - 1]))
      throw FormatError(path, 0, "beta grid not strictly increasing");
  return L;
}

// ---------------------------------------------------------------------------
// DPTH / CONF
// ---------------------------------------------------------------------------

void write_depth(const std::string& path, const Grid2<float>& map, bool confidence) {
  Writer w(path);
  w.magic(confidence ? "CONF" : "DPTH");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(map.rows()));
  w.u32(static_cast<std::uint32_t>(map.cols()));
  for (std::size_t i = 0; i < map.size(); ++i) w.f32(map[i]);
}

Grid2<float> read_depth(const std::string& path, bool confidence) {
  Reader r(path);
  r.expect_magic(confidence ? "CONF" : "DPTH");
  if (r.u32() != 1) throw r.error("unsupported version");
  const std::uint32_t rows = checked_dim(r, "rows");
  const std::uint32_t cols = checked_dim(r, "cols");
  Grid2<float> map(static_cast<int>(rows), static_cast<int>(cols), 0.0f);
  for (std::size_t i = 0; i < map.size(); ++i) map[i] = r.f32();
  r.expect_end();
  return map;
}

// ---------------------------------------------------------------------------
// Echo CSV
// ---------------------------------------------------------------------------

static const char* kEchoHeader =
    "row,col,echo,counts,mean_bin,var_bin2,background,alpha_hat,mean_corr_bin,"
    "glare_pred,G_expected,confidence,source_tag";

void write_echo_csv(const std::string& path, const std::vector<EchoRow>& rows) {
  std::ofstream out(path);
  if (!out) throw FormatError(path, 0, "cannot open for writing");
  out << kEchoHeader << "\n";
  for (const auto& e : rows) {
    out << e.row << ',' << e.col << ',' << e.echo << ',' << format_double(e.counts)
        << ',' << format_double(e.mean_bin) << ',' << format_double(e.var_bin2) << ','
        << format_double(e.background) << ',' << format_double(e.alpha_hat) << ','
        << format_double(e.mean_corr_bin) << ',' << format_double(e.glare_pred) << ','
        << format_double(e.g_expected) << ',' << format_double(e.confidence) << ','
        << e.source_tag << "\n";
  }
  if (!out) throw FormatError(path, 0, "write failed");
}

std::vector<EchoRow> read_echo_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path, 0, "cannot open for reading");
  std::string line;
  std::uint64_t offset = 0;
  if (!std::getline(in, line)) throw FormatError(path, 0, "empty file");
  if (line != kEchoHeader) throw FormatError(path, 0, "unexpected CSV header");
  offset += line.size() + 1;

  std::vector<EchoRow> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    fields.push_back(cur);
    if (fields.size() != 13) throw FormatError(path, offset, "expected 13 fields");
    EchoRow e;
    try {
      e.row = std::stoi(fields[0]);
      e.col = std::stoi(fields[1]);
      e.echo = std::stoi(fields[2]);
      e.counts = std::stod(fields[3]);
      e.mean_bin = std::stod(fields[4]);
      e.var_bin2 = std::stod(fields[5]);
      e.background = std::stod(fields[6]);
      e.alpha_hat = std::stod(fields[7]);
      e.mean_corr_bin = std::stod(fields[8]);
      e.glare_pred = std::stod(fields[9]);
      e.g_expected = std::stod(fields[10]);
      e.confidence = std::stod(fields[11]);
    } catch (const std::exception&) {
      throw FormatError(path, offset, "unparsable numeric field");
    }
    e.source_tag = fields[12];
    rows.push_back(e);
    offset += line.size() + 1;
  }
  return rows;
}

// ---------------------------------------------------------------------------
// ConfigMap
// ---------------------------------------------------------------------------

ConfigMap ConfigMap::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str(), path);
}

ConfigMap ConfigMap::from_string(const std::string& text, const std::string& name) {
  ConfigMap m;
  m.name_ = name;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const char* ws = " \t\r";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(name + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(name + ":" + std::to_string(lineno) + ": empty key");
    if (m.kv_.count(key))
      throw ConfigError(name + ":" + std::to_string(lineno) + ": duplicate key " + key);
    m.kv_[key] = val;
  }
  return m;
}

bool ConfigMap::has(const std::string& key) const { return kv_.count(key) > 0; }

void ConfigMap::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

std::optional<std::string> ConfigMap::take(const std::string& key) {
  auto it = kv_.find(key);
  if (it == kv_.end()) return std::nullopt;
  std::string v = it->second;
  kv_.erase(it);
  return v;
}

std::string ConfigMap::take_string(const std::string& key, const std::string& fallback) {
  auto v = take(key);
  return v ? *v : fallback;
}

double ConfigMap::take_double(const std::string& key, double fallback) {
  auto v = take(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError(name_ + ": key " + key + " is not a number: " + *v);
  }
}

long ConfigMap::take_long(const std::string& key, long fallback) {
  auto v = take(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    long d = std::stol(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError(name_ + ": key " + key + " is not an integer: " + *v);
  }
}

bool ConfigMap::take_bool(const std::string& key, bool fallback) {
  auto v = take(key);
  if (!v) return fallback;
  if (*v == "1" || *v == "true" || *v == "on") return true;
  if (*v == "0" || *v == "false" || *v == "off") return false;
  throw ConfigError(name_ + ": key " + key + " is not a boolean: " + *v);
}

std::vector<std::pair<std::string, std::string>> ConfigMap::take_prefixed(
    const std::string& prefix) {
  std::vector<std::pair<std::string, std::string>> out;
  for (auto it = kv_.begin(); it != kv_.end();) {
    if (it->first.rfind(prefix, 0) == 0) {
      out.push_back(*it);
      it = kv_.erase(it);
    } else {
      ++it;
    }
  }
  std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
    return a.first.size() != b.first.size() ? a.first.size() < b.first.size()
                                            : a.first < b.first;
  });
  return out;
}

void ConfigMap::finish() const {
  if (kv_.empty()) return;
  std::string keys;
  for (const auto& [k, v] : kv_) {
    if (!keys.empty()) keys += ", ";
    keys += k;
  }
  throw ConfigError(name_ + ": unknown keys: " + keys);
}

// ---------------------------------------------------------------------------
// Waveform text
// ---------------------------------------------------------------------------

Waveform read_waveform_text(const std::string& path, int bins) {
  std::ifstream in(path);
  if (!in) throw FormatError(path, 0, "cannot open for reading");
  std::vector<double> samples;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double v;
    while (ls >> v) samples.push_back(v);
  }
  if (samples.empty()) throw FormatError(path, 0, "no waveform samples");
  if (static_cast<int>(samples.size()) > bins)
    throw FormatError(path, 0, "waveform longer than the histogram");
  samples.resize(bins, 0.0);
  return Waveform::from_samples(std::move(samples));
}

}  // namespace spad::io
