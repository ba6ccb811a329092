// Dead-time pileup forward model, moment lookup tables, and echo-level
// correction of intensity underestimation and range walk.
#pragma once

#include "spad/types.hpp"

#include <span>
#include <string>
#include <vector>

namespace spad::pileup {

// Expected detections per pulse per bin for an arbitrary per-pulse flux
// vector. A detection at bin i requires an arrival at i and no arrival in the
// preceding min(dead_time+1, bins-1) bins, counted circularly across the
// pulse-repetition boundary. Evaluated in the log domain.
std::vector<double> q_from_flux(std::span<const double> flux, int dead_time_bins);

// Flux = alpha * waveform placed at depth_bin + beta/bins per bin.
std::vector<double> pileup_forward_q(double alpha, double beta, const Waveform& wf,
                                     double depth_bin, int dead_time_bins, int bins);

struct PileupLuts {
  std::vector<double> alpha_grid;  // strictly increasing, photons/pulse
  std::vector<double> beta_grid;   // strictly increasing, photons/pulse
  int window = 0;                  // fitting window used during the build
  std::vector<double> gamma;       // expected detected energy per pulse
  std::vector<double> mu;          // mean shift, bins (>= 0)
  std::vector<double> var;         // window variance of q, bins^2
  std::string waveform_id;         // not persisted

  int n_alpha() const { return static_cast<int>(alpha_grid.size()); }
  int n_beta() const { return static_cast<int>(beta_grid.size()); }
  double at(const std::vector<double>& t, int ia, int ib) const {
    return t[static_cast<std::size_t>(ia) * n_beta() + ib];
  }

  // Bilinear queries, linear in ln(alpha) and in beta, clamped to the grid.
  double gamma_at(double alpha, double beta) const;
  double mu_at(double alpha, double beta) const;
  double var_at(double alpha, double beta) const;

  // Invertible range: var is strictly decreasing in alpha on every beta row
  // from invertible_alpha_min (the last row variance maximum; at the grid
  // start for odd windows) up to invertible_alpha_max.
  double invertible_alpha_max() const;
  double invertible_alpha_min() const;
};

struct LutBuildParams {
  std::vector<double> alpha_grid;
  std::vector<double> beta_grid;
  int window = 15;
  int dead_time_bins = 48;
  int bins = 672;
  double depth_bin = -1.0;  // < 0 selects bins/2
  // Build fails if var is not strictly decreasing in alpha below this value
  // on every beta row; <= 0 skips the check.
  double declared_alpha_max = 0.0;
};

std::vector<double> log_spaced(double lo, double hi, int n);
std::vector<double> lin_spaced(double lo, double hi, int n);

PileupLuts build_luts(const Waveform& wf, const LutBuildParams& p, int threads = 1);

struct InvertResult {
  double alpha_hat = 0.0;
  bool saturated = false;     // variance below the invertible range
  bool beta_clamped = false;  // beta outside the grid
};

// Monotone inverse of var(alpha) at the interpolated beta row, evaluated on
// the strictly decreasing branch. Variance at or above the branch top maps to
// alpha 0; variance below the branch end saturates at its alpha.
InvertResult invert_variance(double var_measured, double beta_hat,
                             const PileupLuts& luts);

CorrectedEcho correct_echo(const Echo& echo, double beta_hat_per_pulse,
                           const PileupLuts& luts, const SensorConfig& cfg,
                           double threshold_per_pulse);

// Expected detected photons over `pulses` trials for a per-pulse glare flux;
// linear below the threshold, pileup-attenuated via the gamma table above it.
double glare_flux_to_expected_counts(double glare_flux_per_pulse,
                                     double beta_hat_per_pulse,
                                     const PileupLuts& luts, int pulses,
                                     double threshold_per_pulse);

}  // namespace spad::pileup
