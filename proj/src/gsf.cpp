#include "spad/gsf.hpp"

#include <algorithm>
#include <cmath>

namespace spad::gsf {

namespace {

void renormalize(Grid2<double>& m) {
  double total = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) total += m[i];
  if (total <= 0.0) throw DegenerateGsfError("gsf: map has no mass");
  double inv = 1.0 / total;
  for (std::size_t i = 0; i < m.size(); ++i) m[i] *= inv;
}

int nearest_pixel(double x, int n) {
  int i = static_cast<int>(std::lround(x));
  return std::clamp(i, 0, n - 1);
}

}  // namespace

double GsfMeasurement::total() const {
  double t = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) t += raw[i];
  return t;
}

void GsfMeasurement::validate() const {
  if (raw.empty()) throw ConfigError("gsf measurement: empty map");
  double t = 0.0;
  double peak = -1.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!(raw[i] >= 0.0)) throw ConfigError("gsf measurement: negative count");
    t += raw[i];
    peak = std::max(peak, raw[i]);
  }
  if (t <= 0.0) throw ConfigError("gsf measurement: total is zero");
  if (raw(source.row, source.col) < peak)
    throw ConfigError("gsf measurement: source pixel does not hold the maximum");
}

NormalizedGsf normalize_gsf(const GsfMeasurement& meas) {
  meas.validate();
  const double total = meas.total();
  const double a0 = meas.raw(meas.source.row, meas.source.col);
  const double outscatter = 1.0 - a0 / total;
  if (outscatter <= 0.0)
    throw DegenerateGsfError("gsf: all counts at the source pixel");

  NormalizedGsf g;
  g.source = {static_cast<double>(meas.source.row), static_cast<double>(meas.source.col)};
  g.outscatter = outscatter;
  g.map = Grid2<double>(meas.raw.rows(), meas.raw.cols(), 0.0);
  const double inv = 1.0 / (outscatter * total);
  for (int r = 0; r < meas.raw.rows(); ++r)
    for (int c = 0; c < meas.raw.cols(); ++c)
      g.map(r, c) = meas.raw(r, c) * inv;
  g.map(meas.source.row, meas.source.col) = 0.0;
  return g;
}

NormalizedGsf distance_weight(const NormalizedGsf& g, double w, int sign) {
  if (w < 0) throw ConfigError("gsf: distance weight must be >= 0");
  NormalizedGsf out = g;
  for (int r = 0; r < out.map.rows(); ++r)
    for (int c = 0; c < out.map.cols(); ++c) {
      double dr = r - g.source.row;
      double dc = c - g.source.col;
      double d = std::sqrt(dr * dr + dc * dc);
      out.map(r, c) *= std::exp(sign * w * d);
    }
  int sr = nearest_pixel(g.source.row, out.map.rows());
  int sc = nearest_pixel(g.source.col, out.map.cols());
  out.map(sr, sc) = 0.0;
  renormalize(out.map);
  return out;
}

double sample_extrapolated(const Grid2<double>& map, int r, int c, double w,
                           int sign) {
  int rc = std::clamp(r, 0, map.rows() - 1);
  int cc = std::clamp(c, 0, map.cols() - 1);
  double v = map(rc, cc);
  if (rc == r && cc == c) return v;
  double dr = r - rc;
  double dc = c - cc;
  return v * std::exp(sign * w * std::sqrt(dr * dr + dc * dc));
}

Grid2<double> pad_extrapolate(const Grid2<double>& map, int pad, double w, int sign) {
  if (pad < 0) throw ConfigError("gsf: pad must be >= 0");
  Grid2<double> out(map.rows() + 2 * pad, map.cols() + 2 * pad, 0.0);
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c)
      out(r, c) = sample_extrapolated(map, r - pad, c - pad, w, sign);
  return out;
}

void band_range(int aggressor_row, int band_rows, int rows, int& lo, int& hi) {
  lo = aggressor_row - (band_rows - 1) / 2;
  hi = aggressor_row + band_rows / 2;
  lo = std::max(lo, 0);
  hi = std::min(hi, rows - 1);
}

Grid2<double> apply_band_mask(const Grid2<double>& map, int aggressor_row,
                              int band_rows) {
  if (band_rows < 1) throw ConfigError("gsf: band_rows must be >= 1");
  int lo, hi;
  band_range(aggressor_row, band_rows, map.rows(), lo, hi);
  if (lo > hi) throw EmptyMaskError("gsf: band entirely off sensor");
  Grid2<double> out(map.rows(), map.cols(), 0.0);
  double total = 0.0;
  for (int r = lo; r <= hi; ++r)
    for (int c = 0; c < map.cols(); ++c) {
      out(r, c) = map(r, c);
      total += map(r, c);
    }
  if (total <= 0.0) throw EmptyMaskError("gsf: band holds no mass");
  double inv = 1.0 / total;
  for (int r = lo; r <= hi; ++r)
    for (int c = 0; c < map.cols(); ++c) out(r, c) *= inv;
  return out;
}

namespace {

// Normalized inverse-square weights over the atlas entries; an exact position
// match collapses to that entry.
void source_weights(const GsfAtlas& atlas, int src_row, int src_col,
                    std::vector<double>& w) {
  const std::size_t ne = atlas.entries.size();
  w.assign(ne, 0.0);
  double wsum = 0.0;
  int exact = -1;
  for (std::size_t i = 0; i < ne; ++i) {
    const double dr = atlas.entries[i].source.row - src_row;
    const double dc = atlas.entries[i].source.col - src_col;
    const double d2 = dr * dr + dc * dc;
    if (d2 < 1e-18) {
      exact = static_cast<int>(i);
      break;
    }
    w[i] = 1.0 / d2;
    wsum += w[i];
  }
  if (exact >= 0) {
    std::fill(w.begin(), w.end(), 0.0);
    w[exact] = 1.0;
  } else {
    for (double& x : w) x /= wsum;
  }
}

// One entry's weighted, shifted row added into a destination row. Off-map
// lookups clamp to the nearest edge and decay geometrically with distance;
// `powers[d]` holds the decay factor at column distance d.
void add_shifted_row(const GsfAtlas& atlas, const NormalizedGsf& e, double wi,
                     int rr, int dc, int cols, int rows,
                     const double* __restrict__ powers,
                     double* __restrict__ dst) {
  const int c_in_lo = std::clamp(dc, 0, cols);
  const int c_in_hi = std::clamp(cols + dc, 0, cols);
  if (rr >= 0 && rr < rows) {
    const double* __restrict__ row = &e.map(rr, 0);
    for (int c = c_in_lo; c < c_in_hi; ++c) dst[c] += wi * row[c - dc];
    const double left = wi * row[0];
    for (int c = 0; c < c_in_lo; ++c) dst[c] += left * powers[c_in_lo - c];
    const double right = wi * row[cols - 1];
    for (int c = c_in_hi; c < cols; ++c) dst[c] += right * powers[c - c_in_hi + 1];
  } else {
    const int rr_c = std::clamp(rr, 0, rows - 1);
    const double* row = &e.map(rr_c, 0);
    const int dr_out = rr - rr_c;
    const double fr =
        wi * std::exp(atlas.decay_sign * atlas.decay_w * std::abs(dr_out));
    for (int c = c_in_lo; c < c_in_hi; ++c) dst[c] += fr * row[c - dc];
    for (int c = 0; c < c_in_lo; ++c)
      dst[c] += wi * sample_extrapolated(e.map, rr, c - dc, atlas.decay_w,
                                         atlas.decay_sign);
    for (int c = c_in_hi; c < cols; ++c)
      dst[c] += wi * sample_extrapolated(e.map, rr, c - dc, atlas.decay_w,
                                         atlas.decay_sign);
  }
}

void finish_blend(BandedBlend& b, int src_row, int src_col) {
  b.values(src_row - b.band_lo, src_col) = 0.0;
  b.band_sum = 0.0;
  for (std::size_t i = 0; i < b.values.size(); ++i) b.band_sum += b.values[i];
  if (b.band_sum <= 0.0) {
    // Every sample collapsed onto zeroed source pixels; fall back to a
    // uniform spread so the blend stays total.
    b.values.fill(1.0);
    b.values(src_row - b.band_lo, src_col) = 0.0;
    b.band_sum = static_cast<double>(b.values.size()) - 1.0;
  }
}

}  // namespace

std::vector<BandedBlend> banded_blend_batch(const GsfAtlas& atlas,
                                            std::span<const PixelCoord> sources,
                                            bool line_scan) {
  if (atlas.entries.empty()) throw ConfigError("gsf: atlas has no entries");
  const int rows = atlas.rows;
  const int cols = atlas.cols;
  const std::size_t ne = atlas.entries.size();

  std::vector<BandedBlend> out(sources.size());
  std::vector<std::vector<double>> weights(sources.size());
  for (std::size_t s = 0; s < sources.size(); ++s) {
    BandedBlend& b = out[s];
    if (line_scan)
      band_range(sources[s].row, atlas.band_rows, rows, b.band_lo, b.band_hi);
    else {
      b.band_lo = 0;
      b.band_hi = rows - 1;
    }
    b.values = Grid2<double>(b.band_hi - b.band_lo + 1, cols, 0.0);
    source_weights(atlas, sources[s].row, sources[s].col, weights[s]);
    for (std::size_t i = 0; i < ne; ++i)
      b.outscatter += weights[s][i] * atlas.entries[i].outscatter;
  }

  std::vector<double> powers(cols + 1);
  powers[0] = 1.0;
  const double step = std::exp(atlas.decay_sign * atlas.decay_w);
  for (int d = 1; d <= cols; ++d) powers[d] = powers[d - 1] * step;

  // Sources sharing a row sample the same entry rows; processing them
  // together keeps those rows hot.
  std::size_t g_lo = 0;
  while (g_lo < sources.size()) {
    std::size_t g_hi = g_lo + 1;
    while (g_hi < sources.size() && sources[g_hi].row == sources[g_lo].row)
      ++g_hi;
    const int sr = sources[g_lo].row;
    const BandedBlend& ref = out[g_lo];
    for (int r = ref.band_lo; r <= ref.band_hi; ++r) {
      for (std::size_t i = 0; i < ne; ++i) {
        const auto& e = atlas.entries[i];
        const int dr = sr - nearest_pixel(e.source.row, rows);
        const int rr = r - dr;
        for (std::size_t s = g_lo; s < g_hi; ++s) {
          const double wi = weights[s][i];
          if (wi == 0.0) continue;
          const int dc = sources[s].col - nearest_pixel(e.source.col, cols);
          add_shifted_row(atlas, e, wi, rr, dc, cols, rows, powers.data(),
                          &out[s].values(r - out[s].band_lo, 0));
        }
      }
    }
    for (std::size_t s = g_lo; s < g_hi; ++s)
      finish_blend(out[s], sources[s].row, sources[s].col);
    g_lo = g_hi;
  }
  return out;
}

BandedBlend banded_blend(const GsfAtlas& atlas, int src_row, int src_col,
                         bool line_scan) {
  const PixelCoord src{src_row, src_col};
  return std::move(
      banded_blend_batch(atlas, std::span<const PixelCoord>(&src, 1), line_scan)
          .front());
}

NormalizedGsf interpolate_gsf(const GsfAtlas& atlas, SourcePos pos) {
  if (atlas.entries.empty()) throw ConfigError("gsf: atlas has no entries");

  // Exact match short-circuits the inverse-square weights.
  for (const auto& e : atlas.entries) {
    double dr = e.source.row - pos.row;
    double dc = e.source.col - pos.col;
    if (dr * dr + dc * dc < 1e-18) return e;
  }

  const int rows = atlas.rows;
  const int cols = atlas.cols;
  std::vector<double> weights(atlas.entries.size());
  double wsum = 0.0;
  for (std::size_t i = 0; i < atlas.entries.size(); ++i) {
    double dr = atlas.entries[i].source.row - pos.row;
    double dc = atlas.entries[i].source.col - pos.col;
    weights[i] = 1.0 / (dr * dr + dc * dc);
    wsum += weights[i];
  }
  for (double& w : weights) w /= wsum;

  NormalizedGsf out;
  out.source = pos;
  out.map = Grid2<double>(rows, cols, 0.0);
  out.outscatter = 0.0;
  const int pr = nearest_pixel(pos.row, rows);
  const int pc = nearest_pixel(pos.col, cols);
  for (std::size_t i = 0; i < atlas.entries.size(); ++i) {
    const auto& e = atlas.entries[i];
    out.outscatter += weights[i] * e.outscatter;
    // Recenter the entry so its source lands on pos.
    int dr = pr - nearest_pixel(e.source.row, rows);
    int dc = pc - nearest_pixel(e.source.col, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        out.map(r, c) += weights[i] * sample_extrapolated(e.map, r - dr, c - dc,
                                                          atlas.decay_w,
                                                          atlas.decay_sign);
  }
  out.map(pr, pc) = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < out.map.size(); ++i) total += out.map[i];
  if (total <= 0.0) {
    // Degenerate blend (see banded_blend); uniform off-source fallback.
    out.map.fill(1.0 / (out.map.size() - 1.0));
    out.map(pr, pc) = 0.0;
    return out;
  }
  for (std::size_t i = 0; i < out.map.size(); ++i) out.map[i] /= total;
  return out;
}

}  // namespace spad::gsf
