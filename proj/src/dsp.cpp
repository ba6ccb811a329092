#include "spad/dsp.hpp"

#include "spad/kernels.hpp"
#include "spad/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spad::dsp {

namespace {

template <typename T>
void matched_filter_into(std::span<const T> hist, const Waveform& wf,
                         float* __restrict__ out) {
  const int bins = static_cast<int>(hist.size());
  const int lo = wf.support_lo();
  const int hi = wf.support_hi();
  const int len = hi - lo + 1;
  const int ref = static_cast<int>(std::lround(wf.mean()));

  // padded[m] = hist[(m + lo - ref) mod bins]; the correlation then reads
  // contiguous windows, one kernel-tap pass at a time. The circular copy is
  // unrolled into linear segments.
  static thread_local std::vector<float> padded;
  padded.resize(bins + len);
  {
    int src = wrap_bin(static_cast<long>(lo) - ref, bins);
    int m = 0;
    while (m < bins + len) {
      const int run = std::min(bins - src, bins + len - m);
      for (int k = 0; k < run; ++k)
        padded[m + k] = static_cast<float>(hist[src + k]);
      m += run;
      src = 0;
    }
  }

  const auto& shape = wf.shape();
  {
    const float w0 = static_cast<float>(shape[lo]);
    const float* __restrict__ in = padded.data();
    for (int i = 0; i < bins; ++i) out[i] = w0 * in[i];
  }
  for (int j = 1; j < len; ++j) {
    const float w = static_cast<float>(shape[lo + j]);
    if (w == 0.0f) continue;
    const float* __restrict__ in = padded.data() + j;
    for (int i = 0; i < bins; ++i) out[i] += w * in[i];
  }
}

}  // namespace

std::vector<float> matched_filter(std::span<const std::uint32_t> hist,
                                  const Waveform& wf) {
  std::vector<float> out(hist.size());
  matched_filter_into(hist, wf, out.data());
  return out;
}

std::vector<float> matched_filter_f(std::span<const float> hist, const Waveform& wf) {
  std::vector<float> out(hist.size());
  matched_filter_into(hist, wf, out.data());
  return out;
}

std::vector<int> find_peaks(std::span<const float> filtered, int k, int min_sep,
                            float gate) {
  if (k < 1) throw ConfigError("dsp: k must be >= 1");
  const int n = static_cast<int>(filtered.size());
  static thread_local std::vector<int> candidates;
  candidates.clear();

  // Local maxima above the gate (plateaus yield their first bin); the two
  // boundary bins wrap circularly. The mask pass is branchless so it
  // vectorizes; hits are sparse.
  auto is_peak = [&](int i, float prev, float next) {
    const float v = filtered[i];
    return v > gate && v > prev && v >= next;
  };
  if (n == 1) {
    if (filtered[0] > gate) candidates.push_back(0);
  } else {
    static thread_local std::vector<std::uint8_t> mask;
    mask.resize(n);
    const float* __restrict__ f = filtered.data();
    std::uint8_t* __restrict__ m = mask.data();
    for (int i = 1; i < n - 1; ++i)
      m[i] = static_cast<std::uint8_t>((f[i] > gate) & (f[i] > f[i - 1]) &
                                       (f[i] >= f[i + 1]));
    if (is_peak(0, filtered[n - 1], filtered[1])) candidates.push_back(0);
    for (int i = 1; i < n - 1; ++i)
      if (m[i]) candidates.push_back(i);
    if (is_peak(n - 1, filtered[n - 2], filtered[0])) candidates.push_back(n - 1);
  }

  auto circ_dist = [n](int a, int b) {
    int d = std::abs(a - b);
    return std::min(d, n - d);
  };

  // Greedy by descending height: each round takes the tallest candidate that
  // clears min_sep from everything already accepted.
  std::vector<int> peaks;
  peaks.reserve(k);
  static thread_local std::vector<char> used;
  used.assign(candidates.size(), 0);
  while (static_cast<int>(peaks.size()) < k) {
    int best = -1;
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
      if (used[ci]) continue;
      if (best >= 0 && !(filtered[candidates[ci]] > filtered[candidates[best]]))
        continue;
      bool ok = true;
      for (int p : peaks)
        if (circ_dist(candidates[ci], p) < min_sep) {
          ok = false;
          break;
        }
      if (ok)
        best = static_cast<int>(ci);
      else
        used[ci] = 1;
    }
    if (best < 0) break;
    used[best] = 1;
    peaks.push_back(candidates[best]);
  }
  return peaks;
}

EchoMoments extract_moments(std::span<const std::uint32_t> hist, int peak,
                            int window, int center_offset) {
  if (window < 1) throw ConfigError("dsp: window must be >= 1");
  WindowMoments m = window_moments(hist.data(), static_cast<int>(hist.size()),
                                   peak, window, center_offset);
  return {m.counts, m.mean, m.var, m.degenerate};
}

double estimate_background(std::span<const std::uint32_t> hist, int range_lo,
                           int range_hi, double floor_photons) {
  const int n = static_cast<int>(hist.size());
  range_lo = std::clamp(range_lo, 0, n);
  range_hi = std::clamp(range_hi, 0, n);
  if (range_hi <= range_lo) throw ConfigError("dsp: empty noise window");
  double sum = 0.0;
  for (int i = range_lo; i < range_hi; ++i) sum += hist[i];
  const int len = range_hi - range_lo;
  const double mean = sum / len;
  const double floor_per_bin = floor_photons / len;
  return std::max(mean, floor_per_bin);
}

DspParams DspParams::defaults_for(const Waveform& wf) {
  DspParams p;
  // Nearest odd to 2 x FWHM; odd windows sit symmetrically on the peak, which
  // keeps the pileup variance tables monotone from the low-flux end.
  p.fit_window_bins =
      std::max(3, 2 * static_cast<int>(std::floor(wf.fwhm_bins())) + 1);
  p.min_sep_bins = p.fit_window_bins;
  return p;
}

EchoSet extract_echoes(const HistogramCube& cube, const Waveform& wf,
                       const DspParams& p, int threads) {
  const int rows = cube.counts.rows();
  const int cols = cube.counts.cols();
  const int bins = cube.counts.bins();
  if (wf.bins() != bins) throw ConfigError("dsp: waveform length mismatch");
  if (p.noise_tail_bins < 1 || p.noise_tail_bins > bins)
    throw ConfigError("dsp: noise window must fit in the histogram");
  if (p.k_echoes < 1 || p.k_echoes > 255)
    throw ConfigError("dsp: k_echoes must be in [1, 255]");

  const std::size_t npx = static_cast<std::size_t>(rows) * cols;
  // Fixed-capacity slots per pixel, compacted afterwards.
  std::vector<Echo> slots(npx * p.k_echoes);
  std::vector<std::uint8_t> n_echoes(npx, 0);

  parallel_for(static_cast<std::int64_t>(npx), threads,
               [&](std::int64_t lo, std::int64_t hi) {
                 for (std::int64_t i = lo; i < hi; ++i) {
                   const int r = static_cast<int>(i / cols);
                   const int c = static_cast<int>(i % cols);
                   std::span<const std::uint32_t> hist(cube.counts.pixel(r, c),
                                                       static_cast<std::size_t>(bins));
                   const double bg = estimate_background(
                       hist, bins - p.noise_tail_bins, bins, p.bg_floor_photons);
                   static thread_local std::vector<float> filtered;
                   filtered.resize(bins);
                   matched_filter_into(hist, wf, filtered.data());
                   // Pure background filters to its own mean; peaks must rise
                   // above it.
                   const auto peaks = find_peaks(filtered, p.k_echoes,
                                                 p.min_sep_bins,
                                                 static_cast<float>(bg));
                   Echo* out = slots.data() + i * p.k_echoes;
                   for (int pk : peaks) {
                     const EchoMoments m = extract_moments(
                         hist, pk, p.fit_window_bins, p.window_offset_bins);
                     Echo& e = out[n_echoes[i]++];
                     e.pixel = {r, c};
                     e.peak_bin = pk;
                     e.counts = m.counts;
                     e.mean_tof = m.mean_tof;
                     e.var_tof = m.var_tof;
                     e.background = bg;
                     e.degenerate = m.degenerate;
                   }
                 }
               });

  EchoSet set;
  set.rows = rows;
  set.cols = cols;
  set.offsets.resize(npx + 1);
  set.offsets[0] = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < npx; ++i) {
    total += n_echoes[i];
    set.offsets[i + 1] = static_cast<std::uint32_t>(total);
  }
  set.echoes.resize(total);
  for (std::size_t i = 0; i < npx; ++i)
    std::copy(slots.begin() + i * p.k_echoes,
              slots.begin() + i * p.k_echoes + n_echoes[i],
              set.echoes.begin() + set.offsets[i]);
  return set;
}

}  // namespace spad::dsp
