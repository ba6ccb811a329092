#include "spad/baseline.hpp"

#include "spad/kernels.hpp"
#include "spad/parallel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>

namespace spad::baseline {

SharpenOperator decompose_gsf(const gsf::GsfMeasurement& meas) {
  meas.validate();
  const double total = meas.total();
  const double a0 = meas.raw(meas.source.row, meas.source.col);

  SharpenOperator op;
  op.anchor = meas.source;
  op.outscatter = 1.0 - a0 / total;
  op.kernel = Grid2<double>(meas.raw.rows(), meas.raw.cols(), 0.0);
  if (op.outscatter <= 0.0) {
    op.degenerate = true;
    op.outscatter = 0.0;
    return op;
  }
  const double off_total = total - a0;
  for (int r = 0; r < meas.raw.rows(); ++r)
    for (int c = 0; c < meas.raw.cols(); ++c) op.kernel(r, c) = meas.raw(r, c) / off_total;
  op.kernel(meas.source.row, meas.source.col) = 0.0;
  return op;
}

SharpenOperator from_normalized(const gsf::NormalizedGsf& g) {
  SharpenOperator op;
  op.anchor = {static_cast<int>(std::lround(g.source.row)),
               static_cast<int>(std::lround(g.source.col))};
  op.outscatter = g.outscatter;
  op.kernel = g.map;
  return op;
}

namespace {

// Kernel support bounding box size (rows, cols) above a tiny threshold.
std::pair<int, int> kernel_support(const Grid2<double>& k) {
  int r0 = k.rows(), r1 = -1, c0 = k.cols(), c1 = -1;
  for (int r = 0; r < k.rows(); ++r)
    for (int c = 0; c < k.cols(); ++c)
      if (k(r, c) > 0.0) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
  if (r1 < 0) return {0, 0};
  return {r1 - r0 + 1, c1 - c0 + 1};
}

Grid2<double> convolve_direct(const Grid2<double>& y, const Grid2<double>& kernel,
                              PixelCoord anchor) {
  const int R = y.rows(), C = y.cols();
  Grid2<double> out(R, C, 0.0);
  for (int kr = 0; kr < R; ++kr)
    for (int kc = 0; kc < C; ++kc) {
      const double w = kernel(kr, kc);
      if (w == 0.0) continue;
      const int dr = kr - anchor.row;
      const int dc = kc - anchor.col;
      for (int r = 0; r < R; ++r) {
        int sr = r - dr;
        sr -= R * static_cast<int>(std::floor(static_cast<double>(sr) / R));
        for (int c = 0; c < C; ++c) {
          int sc = c - dc;
          sc -= C * static_cast<int>(std::floor(static_cast<double>(sc) / C));
          out(r, c) += w * y(sr, sc);
        }
      }
    }
  return out;
}

std::mutex fftw_plan_mutex;

// Circular convolution helper with a cached kernel spectrum.
class FftConvolver {
 public:
  FftConvolver(const Grid2<double>& kernel, PixelCoord anchor)
      : rows_(kernel.rows()), cols_(kernel.cols()), nc_(cols_ / 2 + 1) {
    buf_ = fftw_alloc_real(static_cast<std::size_t>(rows_) * cols_);
    spec_ = fftw_alloc_complex(static_cast<std::size_t>(rows_) * nc_);
    kspec_ = fftw_alloc_complex(static_cast<std::size_t>(rows_) * nc_);
    {
      std::lock_guard<std::mutex> lock(fftw_plan_mutex);
      fwd_ = fftw_plan_dft_r2c_2d(rows_, cols_, buf_, spec_, FFTW_ESTIMATE);
      inv_ = fftw_plan_dft_c2r_2d(rows_, cols_, spec_, buf_, FFTW_ESTIMATE);
    }
    // Kernel recentered so the anchor maps to the origin.
    for (int r = 0; r < rows_; ++r)
      for (int c = 0; c < cols_; ++c)
        buf_[static_cast<std::size_t>(r) * cols_ + c] =
            kernel((r + anchor.row) % rows_, (c + anchor.col) % cols_);
    fftw_execute(fwd_);
    std::copy(&spec_[0][0], &spec_[0][0] + 2 * static_cast<std::size_t>(rows_) * nc_,
              &kspec_[0][0]);
  }

  ~FftConvolver() {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex);
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(buf_);
    fftw_free(spec_);
    fftw_free(kspec_);
  }

  void convolve(const Grid2<double>& y, Grid2<double>& out) {
    const std::size_t n = static_cast<std::size_t>(rows_) * cols_;
    std::copy(y.data(), y.data() + n, buf_);
    fftw_execute(fwd_);
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < static_cast<std::size_t>(rows_) * nc_; ++i) {
      const double re = spec_[i][0] * kspec_[i][0] - spec_[i][1] * kspec_[i][1];
      const double im = spec_[i][0] * kspec_[i][1] + spec_[i][1] * kspec_[i][0];
      spec_[i][0] = re * scale;
      spec_[i][1] = im * scale;
    }
    fftw_execute(inv_);
    std::copy(buf_, buf_ + n, out.data());
  }

 private:
  int rows_, cols_, nc_;
  double* buf_;
  fftw_complex* spec_;
  fftw_complex* kspec_;
  fftw_plan fwd_, inv_;
};

constexpr int kDirectSupportLimit = 15;

}  // namespace

Grid2<double> deglare_slice(const Grid2<double>& slice, const SharpenOperator& op,
                            bool clamp_negative, SliceStats* stats) {
  if (op.degenerate || op.outscatter == 0.0) {
    if (stats) {
      stats->preclamp_sum = 0.0;
      for (std::size_t i = 0; i < slice.size(); ++i) stats->preclamp_sum += slice[i];
      stats->clamped = 0;
    }
    return slice;
  }
  if (op.kernel.rows() != slice.rows() || op.kernel.cols() != slice.cols())
    throw ConfigError("baseline: kernel does not match slice");

  auto [sr, sc] = kernel_support(op.kernel);
  Grid2<double> conv(slice.rows(), slice.cols(), 0.0);
  if (sr <= kDirectSupportLimit && sc <= kDirectSupportLimit) {
    conv = convolve_direct(slice, op.kernel, op.anchor);
  } else {
    FftConvolver fft(op.kernel, op.anchor);
    fft.convolve(slice, conv);
  }

  Grid2<double> out(slice.rows(), slice.cols(), 0.0);
  const double a = op.outscatter;
  double sum = 0.0;
  long clamped = 0;
  for (std::size_t i = 0; i < slice.size(); ++i) {
    double v = (1.0 + a) * slice[i] - a * conv[i];
    sum += v;
    if (clamp_negative && v < 0.0) {
      v = 0.0;
      ++clamped;
    }
    out[i] = v;
  }
  if (stats) {
    stats->preclamp_sum = sum;
    stats->clamped = clamped;
  }
  return out;
}

BaselineResult baseline_depth(const HistogramCube& cube, const SharpenOperator& op,
                              const Waveform& wf, const SensorConfig& cfg,
                              const dsp::DspParams& dsp_params, int threads) {
  const int rows = cube.counts.rows();
  const int cols = cube.counts.cols();
  const int bins = cube.counts.bins();
  if (!op.degenerate &&
      (op.kernel.rows() != rows || op.kernel.cols() != cols))
    throw ConfigError("baseline: kernel does not match the cube");
  const int noise_tail = std::clamp(dsp_params.noise_tail_bins, 1, bins);

  BaselineResult result;
  result.depth.depth_m = Grid2<float>(rows, cols, depth_no_return());
  result.depth.source = Grid2<std::uint8_t>(
      rows, cols, static_cast<std::uint8_t>(DepthSource::no_return));

  Cube<float> cleaned(rows, cols, bins, 0.0f);

  const bool identity = op.degenerate || op.outscatter == 0.0;
  auto [ksr, ksc] = identity ? std::pair<int, int>{0, 0} : kernel_support(op.kernel);
  const bool use_fft = !identity &&
                       (ksr > kDirectSupportLimit || ksc > kDirectSupportLimit);
  std::unique_ptr<FftConvolver> fft;
  if (use_fft) fft = std::make_unique<FftConvolver>(op.kernel, op.anchor);

  Grid2<double> slice(rows, cols, 0.0);
  Grid2<double> conv(rows, cols, 0.0);
  const double a = op.outscatter;
  for (int t = 0; t < bins; ++t) {
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        slice(r, c) = static_cast<double>(cube.counts.at(r, c, t));
    if (identity) {
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          cleaned.at(r, c, t) = static_cast<float>(slice(r, c));
      continue;
    }
    if (use_fft)
      fft->convolve(slice, conv);
    else
      conv = convolve_direct(slice, op.kernel, op.anchor);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        double v = (1.0 + a) * slice(r, c) - a * conv(r, c);
        if (v < 0.0) {
          ++result.clamped_entries;
          result.clamped_mass -= v;
          v = 0.0;
        }
        cleaned.at(r, c, t) = static_cast<float>(v);
      }
  }

  // Brightest filtered peak per pixel on the cleaned cube.
  parallel_for(static_cast<std::int64_t>(rows) * cols, threads,
               [&](std::int64_t lo, std::int64_t hi) {
                 for (std::int64_t p = lo; p < hi; ++p) {
                   const int r = static_cast<int>(p / cols);
                   const int c = static_cast<int>(p % cols);
                   const float* px = cleaned.pixel(r, c);

                   // Background gate from the cleaned histogram's noise tail.
                   double bg = 0.0;
                   for (int t = bins - noise_tail; t < bins; ++t) bg += px[t];
                   bg /= noise_tail;
                   bg = std::max(bg, dsp_params.bg_floor_photons / noise_tail);

                   const auto filtered = dsp::matched_filter_f(
                       std::span<const float>(px, static_cast<std::size_t>(bins)), wf);
                   int peak = -1;
                   float best = static_cast<float>(bg);
                   for (int t = 0; t < bins; ++t)
                     if (filtered[t] > best) {
                       best = filtered[t];
                       peak = t;
                     }
                   if (peak < 0) continue;
                   result.depth.depth_m(r, c) =
                       static_cast<float>(peak * cfg.range_per_bin_m);
                   result.depth.source(r, c) =
                       static_cast<std::uint8_t>(DepthSource::clean);
                 }
               });
  return result;
}

}  // namespace spad::baseline
