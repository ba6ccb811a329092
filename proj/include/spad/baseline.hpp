// Photographic per-time-slice de-glare: a single-step sharpening operator
// built from one measured spread map, applied to every slice of the cube as
// if it were a still image, followed by brightest-peak depth extraction.
#pragma once

#include "spad/dsp.hpp"
#include "spad/gsf.hpp"
#include "spad/types.hpp"

namespace spad::baseline {

struct SharpenOperator {
  Grid2<double> kernel;  // sums to 1, zero at the anchor pixel
  PixelCoord anchor;     // source pixel of the measured map
  double outscatter = 0.0;
  bool degenerate = false;  // no outscatter measured; operator is identity
};

SharpenOperator decompose_gsf(const gsf::GsfMeasurement& meas);
SharpenOperator from_normalized(const gsf::NormalizedGsf& g);

struct SliceStats {
  double preclamp_sum = 0.0;
  long clamped = 0;  // entries forced up to zero
};

// x_hat = (1 + a) y - a (kernel (*) y), circular convolution. Direct spatial
// evaluation for small kernel support, frequency domain otherwise.
Grid2<double> deglare_slice(const Grid2<double>& slice, const SharpenOperator& op,
                            bool clamp_negative = true, SliceStats* stats = nullptr);

struct BaselineResult {
  DepthMap depth;
  long clamped_entries = 0;
  double clamped_mass = 0.0;  // total negative mass removed
};

// De-glares every slice, then matched-filter + brightest-peak depth per pixel.
BaselineResult baseline_depth(const HistogramCube& cube, const SharpenOperator& op,
                              const Waveform& wf, const SensorConfig& cfg,
                              const dsp::DspParams& dsp_params, int threads = 1);

}  // namespace spad::baseline
