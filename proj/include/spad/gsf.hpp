// Glare-spread-function calibration data: normalization of measured spot
// maps, exponential distance weighting, inverse-square-distance interpolation
// across measured source positions, scan-band masking, and border
// extrapolation for shifted lookups.
#pragma once

#include "spad/types.hpp"

#include <span>

namespace spad::gsf {

// Fractional source coordinates (file positions may fall between pixels).
struct SourcePos {
  double row = 0.0;
  double col = 0.0;
};

// Raw calibration capture: photon-count map with the bright spot at source.
struct GsfMeasurement {
  PixelCoord source;
  Grid2<double> raw;

  double total() const;
  void validate() const;  // source must hold the maximum, total > 0
};

// Spread map with the source pixel zeroed; entries sum to 1.
struct NormalizedGsf {
  SourcePos source;
  Grid2<double> map;
  double outscatter = 0.0;  // fraction of light scattered off the source pixel
};

struct GsfAtlas {
  int rows = 0;
  int cols = 0;
  std::vector<NormalizedGsf> entries;
  int band_rows = 17;
  double decay_w = 0.01;
  int decay_sign = -1;
};

NormalizedGsf normalize_gsf(const GsfMeasurement& meas);

// Multiplies off-source entries by exp(sign*w*dist) and renormalizes.
NormalizedGsf distance_weight(const NormalizedGsf& g, double w, int sign);

// Inverse-square-distance blend of entries recentered at pos; an exact
// position match returns that entry unchanged.
NormalizedGsf interpolate_gsf(const GsfAtlas& atlas, SourcePos pos);

// Zeroes rows outside the band centered on aggressor_row, renormalizes.
Grid2<double> apply_band_mask(const Grid2<double>& map, int aggressor_row,
                              int band_rows);

// Band extent [lo, hi] clipped to [0, rows).
void band_range(int aggressor_row, int band_rows, int rows, int& lo, int& hi);

// Value at (r, c) with out-of-range coordinates clamped to the nearest edge
// pixel and decayed by exp(sign*w*d), d the distance to that pixel.
double sample_extrapolated(const Grid2<double>& map, int r, int c, double w,
                           int sign);

Grid2<double> pad_extrapolate(const Grid2<double>& map, int pad, double w, int sign);

// Inverse-square blend of atlas entries recentered on an integer source
// pixel, evaluated only over the victim band (all rows when line_scan is
// off). Values are unnormalized; dividing by band_sum reproduces
// interpolate + band mask at the victim pixels.
struct BandedBlend {
  int band_lo = 0;
  int band_hi = 0;            // inclusive
  double outscatter = 0.0;
  Grid2<double> values;       // (band_hi - band_lo + 1) x cols
  double band_sum = 0.0;
};

BandedBlend banded_blend(const GsfAtlas& atlas, int src_row, int src_col,
                         bool line_scan);

// Same computation for many sources at once; sources sharing a row reuse the
// entry rows they sample. Results are identical to per-source banded_blend
// calls.
std::vector<BandedBlend> banded_blend_batch(const GsfAtlas& atlas,
                                            std::span<const PixelCoord> sources,
                                            bool line_scan);

}  // namespace spad::gsf
