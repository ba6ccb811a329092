#include "spad/sim.hpp"

#include "spad/kernels.hpp"
#include "spad/pileup.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace spad;
using namespace spad::sim;

namespace {

SensorConfig small_cfg(int rows = 4, int cols = 4, int bins = 128) {
  SensorConfig cfg;
  cfg.rows = rows;
  cfg.cols = cols;
  cfg.bins = bins;
  cfg.dead_time_bins = 16;
  cfg.pulses_per_frame = 1000;
  cfg.clip_limit = 100000;
  return cfg;
}

// Single-entry atlas whose spread is uniform over the off-source pixels.
gsf::GsfAtlas uniform_atlas(int rows, int cols, double outscatter) {
  gsf::GsfAtlas atlas;
  atlas.rows = rows;
  atlas.cols = cols;
  atlas.band_rows = 4 * rows;  // band never clips on these sensors
  gsf::NormalizedGsf g;
  g.source = {static_cast<double>(rows / 2), static_cast<double>(cols / 2)};
  g.outscatter = outscatter;
  g.map = Grid2<double>(rows, cols, 1.0 / (rows * cols - 1));
  g.map(rows / 2, cols / 2) = 0.0;
  atlas.entries.push_back(g);
  return atlas;
}

double pixel_sum(const Cube<float>& cube, int r, int c) {
  double s = 0.0;
  const float* px = cube.pixel(r, c);
  for (int t = 0; t < cube.bins(); ++t) s += px[t];
  return s;
}

}  // namespace

TEST_CASE("render: zero scene renders zero flux") {
  SensorConfig cfg = small_cfg();
  const Waveform wf = Waveform::gaussian(cfg.bins, 2.0);
  SceneSpec scene = SceneSpec::flat(cfg.rows, cfg.cols, 0.0, 0.0, 0.0);
  IdealTransient t = render_ideal_transient(scene, wf, cfg);
  for (std::size_t i = 0; i < t.flux.size(); ++i) CHECK(t.flux.data()[i] == 0.0f);
}

TEST_CASE("render: unit pulse at integer depth sums to alpha") {
  SensorConfig cfg = small_cfg(1, 1, 256);
  const Waveform wf = Waveform::gaussian(cfg.bins, 2.0);
  SceneSpec scene = SceneSpec::flat(1, 1, 77.0, 1.0, 0.0);
  IdealTransient t = render_ideal_transient(scene, wf, cfg);
  CHECK(pixel_sum(t.flux, 0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  // First moment sits at the requested depth.
  double m = 0.0;
  for (int i = 0; i < cfg.bins; ++i) m += t.flux.at(0, 0, i) * i;
  CHECK(m == doctest::Approx(77.0).epsilon(1e-5));
}

TEST_CASE("render: doubling alpha doubles the signal part") {
  SensorConfig cfg = small_cfg(1, 2, 256);
  const Waveform wf = Waveform::gaussian(cfg.bins, 2.0);
  SceneSpec scene = SceneSpec::flat(1, 2, 60.0, 1.0, 0.0);
  scene.depth_bin(0, 1) = 130.0;
  scene.signal_alpha(0, 1) = 2.0;
  IdealTransient t = render_ideal_transient(scene, wf, cfg);
  for (int i = 0; i < cfg.bins; ++i) {
    const float a = t.flux.at(0, 0, i);
    const float b = t.flux.at(0, 1, wrap_bin(i + 70, cfg.bins));
    CHECK(b == doctest::Approx(2.0 * a).epsilon(1e-5));
  }
}

TEST_CASE("glare: zero outscatter atlas is the identity") {
  SensorConfig cfg = small_cfg();
  const Waveform wf = Waveform::gaussian(cfg.bins, 2.0);
  SceneSpec scene = SceneSpec::flat(cfg.rows, cfg.cols, 40.0, 0.5, 0.2);
  IdealTransient t = render_ideal_transient(scene, wf, cfg);

  gsf::GsfAtlas atlas = uniform_atlas(cfg.rows, cfg.cols, 0.5);
  for (auto& e : atlas.entries) e.outscatter = 0.0;
  GlareOptions opt;
  opt.line_scan = false;
  IdealTransient out = apply_glare(t, atlas, cfg, opt);
  for (std::size_t i = 0; i < t.flux.size(); ++i)
    CHECK(out.flux.data()[i] == t.flux.data()[i]);
}

TEST_CASE("glare: single aggressor spreads outscatter * map * flux") {
  SensorConfig cfg = small_cfg(3, 3, 64);
  const Waveform wf = Waveform::gaussian(cfg.bins, 1.5);
  SceneSpec scene = SceneSpec::flat(3, 3, 0.0, 0.0, 0.0);
  scene.depth_bin(1, 1) = 30.0;
  scene.signal_alpha(1, 1) = 4.0;
  IdealTransient t = render_ideal_transient(scene, wf, cfg);

  gsf::GsfAtlas atlas = uniform_atlas(3, 3, 0.25);
  GlareOptions opt;
  opt.line_scan = false;
  IdealTransient out = apply_glare(t, atlas, cfg, opt);

  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      if (r == 1 && c == 1) continue;
      for (int i = 0; i < cfg.bins; ++i)
        CHECK(out.flux.at(r, c, i) ==
              doctest::Approx(0.25 * (1.0 / 8.0) * t.flux.at(1, 1, i))
                  .epsilon(1e-5));
    }
  for (int i = 0; i < cfg.bins; ++i)
    CHECK(out.flux.at(1, 1, i) ==
          doctest::Approx(0.75 * t.flux.at(1, 1, i)).epsilon(1e-5));
}

TEST_CASE("glare: per-slice flux conserved and operator is linear") {
  SensorConfig cfg = small_cfg(4, 4, 32);
  gsf::GsfAtlas atlas;
  atlas.rows = 4;
  atlas.cols = 4;
  atlas.band_rows = 97;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int k = 0; k < 2; ++k) {
    gsf::GsfMeasurement meas;
    meas.raw = Grid2<double>(4, 4, 0.0);
    for (std::size_t i = 0; i < meas.raw.size(); ++i) meas.raw[i] = 0.2 + uni(rng);
    meas.source = {k, 2 * k + 1};
    meas.raw(meas.source.row, meas.source.col) = 30.0;
    atlas.entries.push_back(gsf::normalize_gsf(meas));
  }

  IdealTransient t;
  t.flux = Cube<float>(4, 4, 32, 0.0f);
  for (std::size_t i = 0; i < t.flux.size(); ++i)
    t.flux.data()[i] = static_cast<float>(uni(rng));

  GlareOptions opt;
  opt.line_scan = false;
  IdealTransient out = apply_glare(t, atlas, cfg, opt);

  SUBCASE("per-slice totals match") {
    for (int slice = 0; slice < 32; ++slice) {
      double before = 0.0, after = 0.0;
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
          before += t.flux.at(r, c, slice);
          after += out.flux.at(r, c, slice);
        }
      CHECK(after == doctest::Approx(before).epsilon(1e-5));
    }
  }

  SUBCASE("scaling the input scales the output") {
    // A power-of-two factor scales IEEE products and sums exactly, so the
    // operator's linearity shows up bit-for-bit even in f32 storage.
    IdealTransient t2;
    t2.flux = t.flux;
    for (std::size_t i = 0; i < t2.flux.size(); ++i) t2.flux.data()[i] *= 4.0f;
    IdealTransient out2 = apply_glare(t2, atlas, cfg, opt);
    for (std::size_t i = 0; i < out.flux.size(); ++i)
      CHECK(out2.flux.data()[i] ==
            doctest::Approx(4.0 * out.flux.data()[i]).epsilon(1e-12));

    IdealTransient t3;
    t3.flux = t.flux;
    for (std::size_t i = 0; i < t3.flux.size(); ++i) t3.flux.data()[i] *= 3.0f;
    IdealTransient out3 = apply_glare(t3, atlas, cfg, opt);
    for (std::size_t i = 0; i < out.flux.size(); ++i)
      CHECK(out3.flux.data()[i] ==
            doctest::Approx(3.0 * out.flux.data()[i]).epsilon(1e-5));
  }

  SUBCASE("time slices are independent (permutation commutes)") {
    IdealTransient perm;
    perm.flux = Cube<float>(4, 4, 32, 0.0f);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        for (int s = 0; s < 32; ++s)
          perm.flux.at(r, c, s) = t.flux.at(r, c, (s + 11) % 32);
    IdealTransient out_perm = apply_glare(perm, atlas, cfg, opt);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        for (int s = 0; s < 32; ++s)
          CHECK(out_perm.flux.at(r, c, s) ==
                doctest::Approx(out.flux.at(r, c, (s + 11) % 32)).epsilon(1e-6));
  }
}

TEST_CASE("montecarlo: zero flux gives zero counts") {
  SensorConfig cfg = small_cfg(2, 2, 64);
  IdealTransient t;
  t.flux = Cube<float>(2, 2, 64, 0.0f);
  HistogramCube cube = simulate_spad_montecarlo(t, cfg, 1);
  for (std::size_t i = 0; i < cube.counts.size(); ++i)
    CHECK(cube.counts.data()[i] == 0);
}

TEST_CASE("montecarlo: single-bin detection probability") {
  SensorConfig cfg = small_cfg(1, 1, 64);
  cfg.pulses_per_frame = 10000;
  cfg.dead_time_bins = 64;  // covers the pulse train
  IdealTransient t;
  t.flux = Cube<float>(1, 1, 64, 0.0f);
  t.flux.at(0, 0, 20) = 2.0f;
  HistogramCube cube = simulate_spad_montecarlo(t, cfg, 42);
  const double p = 1.0 - std::exp(-2.0);
  const double sigma = std::sqrt(cfg.pulses_per_frame * p * (1 - p));
  CHECK(std::abs(cube.counts.at(0, 0, 20) - cfg.pulses_per_frame * p) < 3 * sigma);
  for (int i = 0; i < 64; ++i)
    if (i != 20) CHECK(cube.counts.at(0, 0, i) == 0);
}

TEST_CASE("expectation sampler mean converges to pulses * q") {
  SensorConfig cfg = small_cfg(1, 1, 96);
  cfg.pulses_per_frame = 2000;
  cfg.dead_time_bins = 12;
  const Waveform wf = Waveform::gaussian(cfg.bins, 2.0);
  SceneSpec scene = SceneSpec::flat(1, 1, 40.0, 3.0, 0.5);
  IdealTransient t = render_ideal_transient(scene, wf, cfg);

  std::vector<double> lam(cfg.bins);
  for (int i = 0; i < cfg.bins; ++i) lam[i] = t.flux.at(0, 0, i);
  const auto q = pileup::q_from_flux(lam, cfg.dead_time_bins);

  const int n_seeds = 400;
  std::vector<double> mean(cfg.bins, 0.0);
  for (int s = 0; s < n_seeds; ++s) {
    HistogramCube cube = simulate_spad_expectation(t, cfg, 1000 + s);
    for (int i = 0; i < cfg.bins; ++i) mean[i] += cube.counts.at(0, 0, i);
  }
  for (int i = 0; i < cfg.bins; ++i) {
    mean[i] /= n_seeds;
    const double expected = cfg.pulses_per_frame * q[i];
    const double sigma =
        std::sqrt(cfg.pulses_per_frame * q[i] * (1 - q[i]) / n_seeds) + 1e-9;
    CHECK(std::abs(mean[i] - expected) < 4 * sigma + 0.05);
  }
}

TEST_CASE("montecarlo and expectation agree on a pulse with pileup") {
  SensorConfig cfg = small_cfg(1, 1, 256);
  cfg.pulses_per_frame = 100000;
  cfg.dead_time_bins = 32;
  const Waveform wf = Waveform::gaussian(cfg.bins, 3.0);
  SceneSpec scene = SceneSpec::flat(1, 1, 120.0, 5.0, 1.0);
  IdealTransient t = render_ideal_transient(scene, wf, cfg);

  std::vector<double> lam(cfg.bins);
  for (int i = 0; i < cfg.bins; ++i) lam[i] = t.flux.at(0, 0, i);
  const auto q = pileup::q_from_flux(lam, cfg.dead_time_bins);

  HistogramCube mc = simulate_spad_montecarlo(t, cfg, 7);
  int failures = 0;
  for (int i = 0; i < cfg.bins; ++i) {
    const double expected = cfg.pulses_per_frame * q[i];
    const double sigma =
        std::sqrt(cfg.pulses_per_frame * q[i] * (1 - q[i]));
    if (std::abs(mc.counts.at(0, 0, i) - expected) > 3 * sigma + 1e-9) ++failures;
  }
  CHECK(failures <= 2);
}

TEST_CASE("montecarlo matches analytic q with zero dead time") {
  SensorConfig cfg = small_cfg(1, 1, 128);
  cfg.pulses_per_frame = 100000;
  cfg.dead_time_bins = 0;  // only the immediately preceding bin censors
  const Waveform wf = Waveform::gaussian(cfg.bins, 2.0);
  SceneSpec scene = SceneSpec::flat(1, 1, 60.0, 2.0, 0.5);
  IdealTransient t = render_ideal_transient(scene, wf, cfg);

  std::vector<double> lam(cfg.bins);
  for (int i = 0; i < cfg.bins; ++i) lam[i] = t.flux.at(0, 0, i);
  const auto q = pileup::q_from_flux(lam, cfg.dead_time_bins);

  HistogramCube mc = simulate_spad_montecarlo(t, cfg, 15);
  int failures = 0;
  for (int i = 0; i < cfg.bins; ++i) {
    const double expected = cfg.pulses_per_frame * q[i];
    const double sigma = std::sqrt(cfg.pulses_per_frame * q[i] * (1 - q[i]));
    if (std::abs(mc.counts.at(0, 0, i) - expected) > 3 * sigma + 1e-9) ++failures;
  }
  CHECK(failures <= 2);
}

TEST_CASE("clipping bounds histogram counts") {
  SensorConfig cfg = small_cfg(1, 1, 32);
  cfg.pulses_per_frame = 5000;
  cfg.clip_limit = 100;
  cfg.dead_time_bins = 0;
  IdealTransient t;
  t.flux = Cube<float>(1, 1, 32, 0.0f);
  t.flux.at(0, 0, 5) = 10.0f;
  HistogramCube mc = simulate_spad_montecarlo(t, cfg, 3);
  HistogramCube ex = simulate_spad_expectation(t, cfg, 3);
  CHECK(mc.counts.at(0, 0, 5) == 100);
  CHECK(ex.counts.at(0, 0, 5) == 100);
}

TEST_CASE("samplers are schedule independent") {
  SensorConfig cfg = small_cfg(6, 5, 64);
  cfg.pulses_per_frame = 500;
  const Waveform wf = Waveform::gaussian(cfg.bins, 2.0);
  SceneSpec scene = SceneSpec::flat(6, 5, 30.0, 1.0, 0.3);
  IdealTransient t = render_ideal_transient(scene, wf, cfg);
  HistogramCube a = simulate_spad_montecarlo(t, cfg, 9, 1);
  HistogramCube b = simulate_spad_montecarlo(t, cfg, 9, 4);
  CHECK(a == b);
  HistogramCube c = simulate_spad_expectation(t, cfg, 9, 1);
  HistogramCube d = simulate_spad_expectation(t, cfg, 9, 4);
  CHECK(c == d);
}
