// Histogram frontend: matched filtering, top-K peak detection, fitting-window
// moment extraction, and noise-window background estimation.
#pragma once

#include "spad/types.hpp"

#include <span>
#include <vector>

namespace spad::dsp {

// Circular cross-correlation with the transmitted waveform, recentered on the
// waveform's rounded first moment so a pulse at bin d peaks at bin d.
std::vector<float> matched_filter(std::span<const std::uint32_t> hist,
                                  const Waveform& wf);
std::vector<float> matched_filter_f(std::span<const float> hist, const Waveform& wf);

// Greedy top-k local maxima above `gate`, suppressing candidates within
// min_sep (circular distance) of an accepted peak. Ordered by height.
std::vector<int> find_peaks(std::span<const float> filtered, int k, int min_sep,
                            float gate = 0.0f);

struct EchoMoments {
  double counts = 0.0;
  double mean_tof = 0.0;
  double var_tof = 0.0;
  bool degenerate = false;
};

EchoMoments extract_moments(std::span<const std::uint32_t> hist, int peak,
                            int window, int center_offset = 0);

// Mean counts/bin over [range_lo, range_hi), clamped below by
// floor_photons / window length.
double estimate_background(std::span<const std::uint32_t> hist, int range_lo,
                           int range_hi, double floor_photons);

struct DspParams {
  int k_echoes = 3;
  int fit_window_bins = 14;
  int min_sep_bins = 14;
  int noise_tail_bins = 557;  // noise window is the last N bins
  double bg_floor_photons = 53.0;
  int window_offset_bins = 0;

  // Resolves window/min_sep defaults from the waveform (window = 2 x FWHM).
  static DspParams defaults_for(const Waveform& wf);
};

EchoSet extract_echoes(const HistogramCube& cube, const Waveform& wf,
                       const DspParams& p, int threads = 1);

}  // namespace spad::dsp
