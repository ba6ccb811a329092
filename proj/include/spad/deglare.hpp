// Echo-space glare mitigation: per-echo glare prediction by spreading bright
// detections through the calibration atlas with temporal overlap weighting, a
// binomial-likelihood confidence score, and confidence-driven depth selection.
#pragma once

#include "spad/gsf.hpp"
#include "spad/pileup.hpp"
#include "spad/types.hpp"

#include <vector>

namespace spad::deglare {

// Fraction of the (unit-normalized) pulse that falls inside the fitting
// window when shifted by dt bins.
double temporal_overlap(double dt, int window_bins, const Waveform& wf);

// temporal_overlap precomputed over integer shifts; fractional shifts
// interpolate linearly, shifts beyond the table are 0.
class OverlapTable {
 public:
  OverlapTable(const Waveform& wf, int window_bins);
  double at(double dt) const;
  int radius() const { return radius_; }

 private:
  std::vector<double> table_;  // index dt + radius_
  int radius_ = 0;
};

// Predicted glare, photons per frame, one entry per echo (flat EchoSet order).
struct GlarePrediction {
  std::vector<double> g;
};

struct GlareParams {
  double aggressor_floor_per_pulse = 0.05;
  bool line_scan = true;
  bool use_gamma_prime = true;  // aggressor strength gamma' * N vs alpha_hat * N
};

GlarePrediction predict_glare(const CorrectedEchoSet& echoes,
                              const gsf::GsfAtlas& atlas,
                              const OverlapTable& overlap,
                              const SensorConfig& cfg, const GlareParams& params,
                              int threads = 1);

// C = -ln Binom(Y; N, p_glare) when Y >= N*p_glare, else 0. p_glare == 0 with
// Y > 0 returns `cap`; results are clamped to [0, cap].
double binomial_confidence(double detected, int pulses, double p_glare,
                           double cap = 1e6);

struct SelectParams {
  int fit_window_bins = 14;
  double five_sigma_gate = 5.0;
  double sigmoid_T = 90.0;
  double conf_cap = 1e6;
  double pileup_threshold_per_pulse = 0.05;
};

struct Selection {
  DepthMap depth;
  ConfidenceMap conf;
  std::vector<double> expected_glare_counts;  // G, per echo
  std::vector<double> confidence;             // C, per echo
};

// Per pixel: drop echoes below the background gate, zero confidence where
// counts fall under the expected glare, pick the highest-confidence echo, and
// fall back to sigmoid((counts - G)/T) weighting when every confidence is 0.
Selection select_depth(const CorrectedEchoSet& echoes,
                       const GlarePrediction& glare, const pileup::PileupLuts& luts,
                       const SensorConfig& cfg, const SelectParams& params,
                       int threads = 1);

}  // namespace spad::deglare
