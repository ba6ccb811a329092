#include "spad/baseline.hpp"

#include "spad/kernels.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace spad;
using namespace spad::baseline;

namespace {

double grid_sum(const Grid2<double>& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m[i];
  return s;
}

// Circulant spread map on a torus: value depends on the offset from the
// source, so the dense operator and the convolution agree exactly.
Grid2<double> circulant_kernel(int rows, int cols, PixelCoord anchor,
                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Grid2<double> offset(rows, cols, 0.0);
  double total = 0.0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (r == 0 && c == 0) continue;
      offset(r, c) = uni(rng);
      total += offset(r, c);
    }
  Grid2<double> kernel(rows, cols, 0.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      kernel((r + anchor.row) % rows, (c + anchor.col) % cols) =
          offset(r, c) / total;
  return kernel;
}

Grid2<double> convolve_ref(const Grid2<double>& y, const Grid2<double>& kernel,
                           PixelCoord anchor) {
  const int R = y.rows(), C = y.cols();
  Grid2<double> out(R, C, 0.0);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int kr = 0; kr < R; ++kr)
        for (int kc = 0; kc < C; ++kc) {
          const int sr = ((r - (kr - anchor.row)) % R + R) % R;
          const int sc = ((c - (kc - anchor.col)) % C + C) % C;
          acc += kernel(kr, kc) * y(sr, sc);
        }
      out(r, c) = acc;
    }
  return out;
}

}  // namespace

TEST_CASE("decompose_gsf basics") {
  SUBCASE("99/1 split") {
    gsf::GsfMeasurement meas;
    meas.raw = Grid2<double>(1, 2, 0.0);
    meas.raw(0, 0) = 99.0;
    meas.raw(0, 1) = 1.0;
    meas.source = {0, 0};
    SharpenOperator op = decompose_gsf(meas);
    CHECK(op.outscatter == doctest::Approx(0.01));
    CHECK(op.kernel(0, 1) == doctest::Approx(1.0));
    CHECK(op.kernel(0, 0) == 0.0);
    CHECK(!op.degenerate);
  }
  SUBCASE("all counts at the peak degrades to the identity") {
    gsf::GsfMeasurement meas;
    meas.raw = Grid2<double>(2, 2, 0.0);
    meas.raw(1, 0) = 10.0;
    meas.source = {1, 0};
    SharpenOperator op = decompose_gsf(meas);
    CHECK(op.degenerate);
    Grid2<double> slice(2, 2, 3.0);
    Grid2<double> out = deglare_slice(slice, op);
    CHECK(out == slice);
  }
  SUBCASE("kernel sums to one on random maps") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int t = 0; t < 10; ++t) {
      gsf::GsfMeasurement meas;
      meas.raw = Grid2<double>(5, 5, 0.0);
      for (std::size_t i = 0; i < meas.raw.size(); ++i) meas.raw[i] = uni(rng);
      meas.source = {2, 2};
      meas.raw(2, 2) = 8.0;
      SharpenOperator op = decompose_gsf(meas);
      CHECK(grid_sum(op.kernel) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("deglare_slice conserves energy before clamping") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> uni(0.0, 10.0);
  SharpenOperator op;
  op.anchor = {3, 4};
  op.outscatter = 0.2;
  op.kernel = circulant_kernel(8, 8, op.anchor, 5);

  Grid2<double> slice(8, 8, 0.0);
  for (std::size_t i = 0; i < slice.size(); ++i) slice[i] = uni(rng);

  SliceStats stats;
  deglare_slice(slice, op, true, &stats);
  CHECK(stats.preclamp_sum ==
        doctest::Approx(grid_sum(slice)).epsilon(1e-9));
}

TEST_CASE("deglare_slice matches the reference convolution (direct and fft)") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> uni(0.0, 5.0);

  SUBCASE("small support goes through the direct path") {
    SharpenOperator op;
    op.anchor = {4, 4};
    op.outscatter = 0.15;
    op.kernel = Grid2<double>(32, 32, 0.0);
    op.kernel(4, 5) = 0.5;
    op.kernel(5, 4) = 0.5;
    Grid2<double> slice(32, 32, 0.0);
    for (std::size_t i = 0; i < slice.size(); ++i) slice[i] = uni(rng);
    Grid2<double> ref = convolve_ref(slice, op.kernel, op.anchor);
    Grid2<double> out = deglare_slice(slice, op, false);
    for (std::size_t i = 0; i < out.size(); ++i)
      CHECK(out[i] ==
            doctest::Approx((1.15) * slice[i] - 0.15 * ref[i]).epsilon(1e-9));
  }
  SUBCASE("wide support goes through the fft path") {
    SharpenOperator op;
    op.anchor = {9, 11};
    op.outscatter = 0.1;
    op.kernel = circulant_kernel(24, 20, op.anchor, 6);
    Grid2<double> slice(24, 20, 0.0);
    for (std::size_t i = 0; i < slice.size(); ++i) slice[i] = uni(rng);
    Grid2<double> ref = convolve_ref(slice, op.kernel, op.anchor);
    Grid2<double> out = deglare_slice(slice, op, false);
    for (std::size_t i = 0; i < out.size(); ++i)
      CHECK(out[i] ==
            doctest::Approx(1.1 * slice[i] - 0.1 * ref[i]).epsilon(1e-9));
  }
}

TEST_CASE("sharpening bias identity on an 8x8 torus") {
  // With y = A x formed exactly, x_hat - x = -a^2 (I-B)^2 x.
  const int R = 8, C = 8;
  const double a = 0.12;
  SharpenOperator op;
  op.anchor = {3, 5};
  op.outscatter = a;
  op.kernel = circulant_kernel(R, C, op.anchor, 13);

  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> uni(1.0, 9.0);
  Grid2<double> x(R, C, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = uni(rng);

  Grid2<double> bx = convolve_ref(x, op.kernel, op.anchor);
  Grid2<double> y(R, C, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = (1.0 - a) * x[i] + a * bx[i];

  Grid2<double> xhat = deglare_slice(y, op, false);

  // (I - B)^2 x = x - 2 Bx + B(Bx)
  Grid2<double> bbx = convolve_ref(bx, op.kernel, op.anchor);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double bias = -a * a * (x[i] - 2.0 * bx[i] + bbx[i]);
    CHECK(xhat[i] - x[i] == doctest::Approx(bias).epsilon(1e-9));
  }
}

TEST_CASE("baseline_depth recovers depths on a glare-free cube") {
  SensorConfig cfg;
  cfg.rows = 8;
  cfg.cols = 8;
  cfg.bins = 128;
  cfg.pulses_per_frame = 1000;
  cfg.range_per_bin_m = 0.03;
  const Waveform wf = Waveform::gaussian(cfg.bins, 2.0);

  HistogramCube cube;
  cube.pulses_per_frame = cfg.pulses_per_frame;
  cube.counts = Cube<std::uint32_t>(8, 8, cfg.bins, 0u);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) {
      std::vector<double> flux(cfg.bins, 0.5);
      add_shifted_waveform(flux.data(), cfg.bins, wf, 40.0 + r, 400.0);
      for (int t = 0; t < cfg.bins; ++t)
        cube.counts.at(r, c, t) = static_cast<std::uint32_t>(std::lround(flux[t]));
    }

  SharpenOperator op;
  op.anchor = {4, 4};
  op.outscatter = 0.1;
  op.kernel = circulant_kernel(8, 8, op.anchor, 3);

  dsp::DspParams dp = dsp::DspParams::defaults_for(wf);
  dp.noise_tail_bins = 32;
  dp.bg_floor_photons = 0.0;
  BaselineResult res = baseline_depth(cube, op, wf, cfg, dp);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) {
      REQUIRE(std::isfinite(res.depth.depth_m(r, c)));
      CHECK(std::abs(res.depth.depth_m(r, c) / cfg.range_per_bin_m -
                     (40.0 + r)) <= 1.5);
    }
}
