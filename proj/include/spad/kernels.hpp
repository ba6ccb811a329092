// Shared signal helpers. The fitting-window moment computation and the
// waveform placement are used by both the measurement path and the lookup
// table build, and must stay identical between them.
#pragma once

#include "spad/types.hpp"

#include <cmath>

namespace spad {

inline int wrap_bin(long i, int bins) {
  if (i >= 0 && i < bins) return static_cast<int>(i);
  if (i < 0 && i >= -bins) return static_cast<int>(i + bins);
  if (i >= bins && i < 2L * bins) return static_cast<int>(i - bins);
  long m = i % bins;
  if (m < 0) m += bins;
  return static_cast<int>(m);
}

struct WindowMoments {
  double counts = 0.0;
  double mean = 0.0;  // bins, wrapped into [0, bins)
  double var = 0.0;   // bins^2
  bool degenerate = false;
};

// Count-weighted moments over a `window`-bin-long fitting window centered on
// the echo mean. A first pass uses an integer window anchored at the peak to
// seed the mean; two refinement passes then recenter a continuous window
// [mean - window/2, mean + window/2) on it, weighting the edge bins by their
// covered fraction. Indexing is circular; coordinates are unwrapped so the
// moments are window-local, and the mean is wrapped back into [0, bins).
template <typename T>
WindowMoments window_moments(const T* values, int bins, int peak, int window,
                             int center_offset = 0) {
  WindowMoments m;
  const long lo0 = static_cast<long>(peak) - window / 2 + center_offset;
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  for (int j = 0; j < window; ++j) {
    const double v = static_cast<double>(values[wrap_bin(lo0 + j, bins)]);
    const double x = static_cast<double>(lo0 + j);
    s0 += v;
    s1 += v * x;
    s2 += v * x * x;
  }
  if (s0 <= 0.0) {
    m.counts = 0.0;
    m.mean = static_cast<double>(wrap_bin(peak, bins));
    m.var = 0.0;
    m.degenerate = true;
    return m;
  }
  double mu = s1 / s0;

  for (int pass = 0; pass < 2; ++pass) {
    const double lo = mu - window / 2.0 + center_offset;
    const double hi = lo + window;
    const long k0 = static_cast<long>(std::floor(lo - 0.5));
    double t0 = 0.0, t1 = 0.0, t2 = 0.0;
    for (long k = k0; k <= k0 + window + 2; ++k) {
      const double w =
          std::min(k + 0.5, hi) - std::max(k - 0.5, lo);  // bin coverage
      if (w <= 0.0) continue;
      const double v = w * static_cast<double>(values[wrap_bin(k, bins)]);
      const double x = static_cast<double>(k);
      t0 += v;
      t1 += v * x;
      t2 += v * x * x;
    }
    if (t0 <= 0.0) break;
    s0 = t0;
    s1 = t1;
    s2 = t2;
    mu = s1 / s0;
  }

  m.counts = s0;
  m.var = std::max(0.0, s2 / s0 - mu * mu);
  m.mean = mu - bins * std::floor(mu / bins);
  return m;
}

// Adds alpha * waveform to dst with the waveform's first moment placed at
// depth_bin. Fractional shifts split linearly across adjacent bins, which
// keeps the first moment exact.
template <typename T>
void add_shifted_waveform(T* dst, int bins, const Waveform& wf, double depth_bin,
                          double alpha) {
  if (alpha == 0.0) return;
  const double shift = depth_bin - wf.mean();
  const double fl = std::floor(shift);
  const int s0 = static_cast<int>(fl);
  const double frac = shift - fl;
  const auto& sh = wf.shape();
  for (int k = wf.support_lo(); k <= wf.support_hi(); ++k) {
    const double v = alpha * sh[k];
    dst[wrap_bin(static_cast<long>(k) + s0, bins)] += static_cast<T>(v * (1.0 - frac));
    dst[wrap_bin(static_cast<long>(k) + s0 + 1, bins)] += static_cast<T>(v * frac);
  }
}

}  // namespace spad
