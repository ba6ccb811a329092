// Forward simulator: renders ideal transients from a scene, spreads glare
// through a calibration atlas, and samples SPAD histograms under dead-time
// pileup. Provides a per-pulse arrival-level sampler and a fast
// binomial-expectation sampler built on the same detection model.
#pragma once

#include "spad/gsf.hpp"
#include "spad/types.hpp"

namespace spad::sim {

IdealTransient render_ideal_transient(const SceneSpec& scene, const Waveform& wf,
                                      const SensorConfig& cfg, int threads = 1);

struct GlareOptions {
  bool line_scan = true;  // restrict spread to the scan band around the source
  // Pixels whose summed per-pulse flux is below this keep all of their light;
  // 0 spreads every pixel.
  double min_source_flux = 0.0;
};

// Applies the time-independent glare operator to every time slice: the source
// keeps (1 - outscatter) of its flux, the rest follows the interpolated
// (optionally band-masked) spread map. Column-stochastic, so per-slice totals
// are conserved.
IdealTransient apply_glare(const IdealTransient& ideal, const gsf::GsfAtlas& atlas,
                           const SensorConfig& cfg, const GlareOptions& opt = {},
                           int threads = 1);

// Per-pulse arrival sampler: Poisson arrivals per bin; an arrival is recorded
// as a detection only when no arrival occurred in the preceding
// min(dead_time+1, bins-1) bins, tracked in absolute time across pulses.
// Counts are clipped at clip_limit after accumulating the frame.
HistogramCube simulate_spad_montecarlo(const IdealTransient& flux,
                                       const SensorConfig& cfg, std::uint64_t seed,
                                       int threads = 1);

// Computes per-bin detection probabilities q analytically and draws counts
// from Binomial(pulses, q).
HistogramCube simulate_spad_expectation(const IdealTransient& flux,
                                        const SensorConfig& cfg, std::uint64_t seed,
                                        int threads = 1);

}  // namespace spad::sim
