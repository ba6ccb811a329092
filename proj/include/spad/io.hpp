// File formats and configuration parsing. All binary containers are
// little-endian with a four-byte magic and a version word; readers report the
// byte offset of the first inconsistency they see.
//
//   SPHC  histogram cube      magic "SPHC", u16 or u32 counts
//   GSFA  calibration atlas   magic "GSFA", f32 maps
//   PLUT  pileup tables       magic "PLUT", f64 grids and tables
//   DPTH  depth map           magic "DPTH", f32 meters, quiet NaN = no return
//   CONF  confidence map      same layout as DPTH, magic "CONF"
//
// Echo tables are CSV; configs are flat `key = value` text with `#` comments,
// and unknown keys are rejected.
#pragma once

#include "spad/gsf.hpp"
#include "spad/pileup.hpp"
#include "spad/types.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace spad::io {

void write_sphc(const std::string& path, const HistogramCube& cube);
HistogramCube read_sphc(const std::string& path);

// Atlas band/decay parameters are configuration, not file content.
void write_gsfa(const std::string& path, const gsf::GsfAtlas& atlas);
gsf::GsfAtlas read_gsfa(const std::string& path);

void write_plut(const std::string& path, const pileup::PileupLuts& luts);
pileup::PileupLuts read_plut(const std::string& path);

void write_depth(const std::string& path, const Grid2<float>& map,
                 bool confidence = false);
Grid2<float> read_depth(const std::string& path, bool confidence = false);

// One row per echo:
// row,col,echo,counts,mean_bin,var_bin2,background,alpha_hat,mean_corr_bin,
// glare_pred,G_expected,confidence,source_tag
struct EchoRow {
  int row = 0, col = 0, echo = 0;
  double counts = 0, mean_bin = 0, var_bin2 = 0, background = 0;
  double alpha_hat = 0, mean_corr_bin = 0, glare_pred = 0, g_expected = 0;
  double confidence = 0;
  std::string source_tag = "-";
};

void write_echo_csv(const std::string& path, const std::vector<EchoRow>& rows);
std::vector<EchoRow> read_echo_csv(const std::string& path);

// Flat key = value config with typed access; finish() rejects unread keys.
class ConfigMap {
 public:
  static ConfigMap from_file(const std::string& path);
  static ConfigMap from_string(const std::string& text, const std::string& name);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);  // replaces
  std::optional<std::string> take(const std::string& key);
  std::string take_string(const std::string& key, const std::string& fallback);
  double take_double(const std::string& key, double fallback);
  long take_long(const std::string& key, long fallback);
  bool take_bool(const std::string& key, bool fallback);

  // All keys with the given prefix, in numeric-suffix order (rect_1, rect_2...).
  std::vector<std::pair<std::string, std::string>> take_prefixed(
      const std::string& prefix);

  void finish() const;  // throws ConfigError listing unknown keys

 private:
  std::string name_;
  std::map<std::string, std::string> kv_;
};

Waveform read_waveform_text(const std::string& path, int bins);

}  // namespace spad::io
