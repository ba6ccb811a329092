// End-to-end orchestration: run configuration, scene parsing, and the
// histogram -> echoes -> pileup correction -> glare prediction -> confidence
// -> depth pipeline.
#pragma once

#include "spad/deglare.hpp"
#include "spad/dsp.hpp"
#include "spad/gsf.hpp"
#include "spad/io.hpp"
#include "spad/metrics.hpp"
#include "spad/pileup.hpp"
#include "spad/types.hpp"

#include <optional>
#include <string>

namespace spad::pipeline {

struct RunConfig {
  SensorConfig sensor;

  std::string waveform_path;       // empty: synthesize a Gaussian pulse
  double waveform_sigma_bins = 3.0;
  std::string atlas_path;
  std::string luts_path;

  int k_echoes = 3;
  int fit_window_bins = 0;   // 0: 2 x waveform FWHM
  int min_sep_bins = 0;      // 0: same as the fitting window
  int noise_tail_bins = 557;
  double bg_floor_photons = 53.0;
  int window_offset_bins = 0;

  int band_rows = 17;
  bool line_scan = true;
  double decay_w = 0.01;
  int decay_sign = -1;

  double pileup_threshold_per_pulse = 0.05;
  double aggressor_floor_per_pulse = 0.05;
  double sigmoid_T = 90.0;
  double five_sigma_gate = 5.0;
  double conf_cap = 1e6;
  bool use_gamma_prime = true;

  double lut_alpha_min = 1e-3;
  double lut_alpha_max = 100.0;
  int lut_alpha_count = 200;
  double lut_beta_min = 0.0;
  double lut_beta_max = 10.0;
  int lut_beta_count = 32;

  std::uint64_t seed = 0;
  int threads = 1;

  std::string eval_missing_policy = "exclude";

  static RunConfig from_config(io::ConfigMap& cm);
  void validate() const;

  Waveform make_waveform() const;
  dsp::DspParams dsp_params(const Waveform& wf) const;
  deglare::GlareParams glare_params() const;
  deglare::SelectParams select_params(const Waveform& wf) const;
  pileup::LutBuildParams lut_params(const Waveform& wf) const;
};

SceneSpec read_scene(io::ConfigMap& cm, const SensorConfig& sensor,
                     double* glare_source_floor = nullptr);

struct PipelineResult {
  CorrectedEchoSet echoes;
  deglare::GlarePrediction glare;
  deglare::Selection selection;
  std::vector<double> beta_hat;  // per pixel, photons/pulse
};

// enable_deglare=false selects the brightest surviving echo with no glare
// accounting; the glare/confidence columns are then zero.
PipelineResult run_pipeline(const HistogramCube& cube, const Waveform& wf,
                            const gsf::GsfAtlas* atlas,
                            const pileup::PileupLuts& luts, const RunConfig& rc,
                            bool enable_deglare = true);

std::vector<io::EchoRow> make_echo_rows(const PipelineResult& res);

// Sums per-frame-clipped cubes; pulse counts accumulate.
HistogramCube accumulate_frames(const std::vector<HistogramCube>& frames);

}  // namespace spad::pipeline
