#include "spad/sim.hpp"

#include "spad/kernels.hpp"
#include "spad/parallel.hpp"
#include "spad/pileup.hpp"
#include "spad/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace spad::sim {

IdealTransient render_ideal_transient(const SceneSpec& scene, const Waveform& wf,
                                      const SensorConfig& cfg, int threads) {
  scene.validate(cfg);
  if (wf.bins() != cfg.bins)
    throw ConfigError("sim: waveform length does not match sensor bins");

  IdealTransient out;
  out.flux = Cube<float>(cfg.rows, cfg.cols, cfg.bins, 0.0f);
  parallel_for(static_cast<std::int64_t>(cfg.rows) * cfg.cols, threads,
               [&](std::int64_t lo, std::int64_t hi) {
                 for (std::int64_t p = lo; p < hi; ++p) {
                   const int r = static_cast<int>(p / cfg.cols);
                   const int c = static_cast<int>(p % cfg.cols);
                   float* px = out.flux.pixel(r, c);
                   const float bg = static_cast<float>(scene.beta(r, c) / cfg.bins);
                   for (int t = 0; t < cfg.bins; ++t) px[t] = bg;
                   add_shifted_waveform(px, cfg.bins, wf, scene.depth_bin(r, c),
                                        scene.signal_alpha(r, c));
                 }
               });
  return out;
}

IdealTransient apply_glare(const IdealTransient& ideal, const gsf::GsfAtlas& atlas,
                           const SensorConfig& cfg, const GlareOptions& opt,
                           int threads) {
  const int rows = ideal.flux.rows();
  const int cols = ideal.flux.cols();
  const int bins = ideal.flux.bins();
  if (rows != cfg.rows || cols != cfg.cols || bins != cfg.bins)
    throw ConfigError("sim: transient does not match sensor");
  if (atlas.entries.empty()) throw ConfigError("sim: atlas has no entries");
  if (atlas.rows != rows || atlas.cols != cols)
    throw ConfigError("sim: atlas does not cover the sensor");

  // Select source pixels that spread.
  std::vector<std::pair<int, int>> sources;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const float* px = ideal.flux.pixel(r, c);
      double total = 0.0;
      for (int t = 0; t < bins; ++t) total += px[t];
      if (total > 0.0 && total >= opt.min_source_flux) sources.push_back({r, c});
    }

  IdealTransient out;
  out.flux = ideal.flux;

  struct SpreadPlan {
    int sr, sc;
    gsf::BandedBlend blend;
    double scale = 0.0;  // outscatter / band_sum
  };
  std::vector<SpreadPlan> plans(sources.size());
  {
    std::vector<PixelCoord> coords(sources.size());
    for (std::size_t i = 0; i < sources.size(); ++i)
      coords[i] = {sources[i].first, sources[i].second};
    std::vector<std::size_t> row_starts;
    for (std::size_t i = 0; i < coords.size(); ++i)
      if (i == 0 || coords[i].row != coords[i - 1].row) row_starts.push_back(i);
    row_starts.push_back(coords.size());
    parallel_for(static_cast<std::int64_t>(row_starts.size()) - 1, threads,
                 [&](std::int64_t lo, std::int64_t hi) {
                   const std::size_t b_lo = row_starts[lo];
                   const std::size_t b_hi = row_starts[hi];
                   auto blends = gsf::banded_blend_batch(
                       atlas,
                       std::span<const PixelCoord>(coords.data() + b_lo,
                                                   b_hi - b_lo),
                       opt.line_scan);
                   for (std::size_t i = 0; i < blends.size(); ++i) {
                     SpreadPlan& p = plans[b_lo + i];
                     p.sr = coords[b_lo + i].row;
                     p.sc = coords[b_lo + i].col;
                     p.blend = std::move(blends[i]);
                     p.scale = p.blend.band_sum > 0
                                   ? p.blend.outscatter / p.blend.band_sum
                                   : 0.0;
                   }
                 });
  }

  // Sources ordered by pixel index; accumulate per victim row so any thread
  // count produces the same sums.
  std::vector<std::vector<std::uint32_t>> by_victim_row(rows);
  for (std::size_t i = 0; i < plans.size(); ++i) {
    if (plans[i].scale <= 0.0) continue;
    for (int r = plans[i].blend.band_lo; r <= plans[i].blend.band_hi; ++r)
      by_victim_row[r].push_back(static_cast<std::uint32_t>(i));
  }

  // Remove the outscattered fraction at each source.
  for (const auto& p : plans) {
    if (p.scale <= 0.0) continue;
    float* px = out.flux.pixel(p.sr, p.sc);
    const float keep = static_cast<float>(1.0 - p.blend.outscatter);
    for (int t = 0; t < bins; ++t) px[t] *= keep;
  }

  parallel_for(rows, threads, [&](std::int64_t r_lo, std::int64_t r_hi) {
    for (std::int64_t r = r_lo; r < r_hi; ++r) {
      for (std::uint32_t pi : by_victim_row[r]) {
        const SpreadPlan& p = plans[pi];
        const float* src = ideal.flux.pixel(p.sr, p.sc);
        const int br = static_cast<int>(r) - p.blend.band_lo;
        for (int c = 0; c < cols; ++c) {
          if (static_cast<int>(r) == p.sr && c == p.sc) continue;
          const double a = p.scale * p.blend.values(br, c);
          if (a <= 0.0) continue;
          float* dst = out.flux.pixel(static_cast<int>(r), c);
          const float af = static_cast<float>(a);
          for (int t = 0; t < bins; ++t) dst[t] += af * src[t];
        }
      }
    }
  });
  return out;
}

namespace {

// Walker alias table for sampling bin indices proportional to flux.
struct AliasTable {
  std::vector<double> prob;
  std::vector<int> alias;

  explicit AliasTable(std::span<const double> wgt) {
    const int n = static_cast<int>(wgt.size());
    prob.assign(n, 0.0);
    alias.assign(n, 0);
    double total = 0.0;
    for (double v : wgt) total += v;
    std::vector<double> scaled(n);
    for (int i = 0; i < n; ++i) scaled[i] = wgt[i] * n / total;
    std::vector<int> small, large;
    small.reserve(n);
    large.reserve(n);
    for (int i = 0; i < n; ++i)
      (scaled[i] < 1.0 ? small : large).push_back(i);
    while (!small.empty() && !large.empty()) {
      int s = small.back();
      small.pop_back();
      int l = large.back();
      prob[s] = scaled[s];
      alias[s] = l;
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    for (int i : large) prob[i] = 1.0;
    for (int i : small) prob[i] = 1.0;
  }

  int draw(std::mt19937_64& rng, std::uniform_real_distribution<double>& uni) const {
    const int n = static_cast<int>(prob.size());
    const double u = uni(rng) * n;
    int i = std::min(static_cast<int>(u), n - 1);
    return (u - i) < prob[i] ? i : alias[i];
  }
};

void montecarlo_pixel(const float* flux, const SensorConfig& cfg,
                      std::mt19937_64& rng, std::uint32_t* counts) {
  const int bins = cfg.bins;
  std::vector<double> lam(bins);
  double total = 0.0;
  for (int t = 0; t < bins; ++t) {
    if (!(flux[t] >= 0.0f)) throw ModelError("sim: negative flux");
    lam[t] = flux[t];
    total += lam[t];
  }
  std::fill(counts, counts + bins, 0u);
  if (total <= 0.0) return;

  const AliasTable table(lam);
  std::poisson_distribution<int> arrivals(total);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const long win = std::min(cfg.dead_time_bins + 1, bins - 1);

  std::vector<int> pulse_bins;
  long last_arrival = std::numeric_limits<long>::min() / 2;
  for (int pulse = 0; pulse < cfg.pulses_per_frame; ++pulse) {
    const long base = static_cast<long>(pulse) * bins;
    const int m = arrivals(rng);
    pulse_bins.clear();
    for (int k = 0; k < m; ++k) pulse_bins.push_back(table.draw(rng, uni));
    std::sort(pulse_bins.begin(), pulse_bins.end());
    for (int b : pulse_bins) {
      const long abs_t = base + b;
      if (abs_t == last_arrival) continue;  // same-bin arrival, already handled
      if (abs_t - last_arrival > win) ++counts[b];
      last_arrival = abs_t;
    }
  }
  for (int t = 0; t < bins; ++t) counts[t] = std::min(counts[t], cfg.clip_limit);
}

}  // namespace

HistogramCube simulate_spad_montecarlo(const IdealTransient& flux,
                                       const SensorConfig& cfg, std::uint64_t seed,
                                       int threads) {
  const int rows = flux.flux.rows(), cols = flux.flux.cols();
  if (rows != cfg.rows || cols != cfg.cols || flux.flux.bins() != cfg.bins)
    throw ConfigError("sim: transient does not match sensor");
  HistogramCube cube;
  cube.counts = Cube<std::uint32_t>(rows, cols, cfg.bins, 0u);
  cube.pulses_per_frame = cfg.pulses_per_frame;
  parallel_for(static_cast<std::int64_t>(rows) * cols, threads,
               [&](std::int64_t lo, std::int64_t hi) {
                 for (std::int64_t p = lo; p < hi; ++p) {
                   const int r = static_cast<int>(p / cols);
                   const int c = static_cast<int>(p % cols);
                   auto rng = make_stream(seed, RngPurpose::montecarlo,
                                          static_cast<std::uint64_t>(p));
                   montecarlo_pixel(flux.flux.pixel(r, c), cfg, rng,
                                    cube.counts.pixel(r, c));
                 }
               });
  return cube;
}

HistogramCube simulate_spad_expectation(const IdealTransient& flux,
                                        const SensorConfig& cfg, std::uint64_t seed,
                                        int threads) {
  const int rows = flux.flux.rows(), cols = flux.flux.cols();
  if (rows != cfg.rows || cols != cfg.cols || flux.flux.bins() != cfg.bins)
    throw ConfigError("sim: transient does not match sensor");
  HistogramCube cube;
  cube.counts = Cube<std::uint32_t>(rows, cols, cfg.bins, 0u);
  cube.pulses_per_frame = cfg.pulses_per_frame;
  parallel_for(static_cast<std::int64_t>(rows) * cols, threads,
               [&](std::int64_t lo, std::int64_t hi) {
                 std::vector<double> lam(cfg.bins);
                 for (std::int64_t p = lo; p < hi; ++p) {
                   const int r = static_cast<int>(p / cols);
                   const int c = static_cast<int>(p % cols);
                   const float* px = flux.flux.pixel(r, c);
                   for (int t = 0; t < cfg.bins; ++t) lam[t] = px[t];
                   std::vector<double> q =
                       pileup::q_from_flux(lam, cfg.dead_time_bins);
                   auto rng = make_stream(seed, RngPurpose::expectation,
                                          static_cast<std::uint64_t>(p));
                   std::uint32_t* counts = cube.counts.pixel(r, c);
                   for (int t = 0; t < cfg.bins; ++t) {
                     if (q[t] <= 0.0) {
                       counts[t] = 0;
                       continue;
                     }
                     std::binomial_distribution<int> bin(cfg.pulses_per_frame, q[t]);
                     counts[t] = std::min(static_cast<std::uint32_t>(bin(rng)),
                                          cfg.clip_limit);
                   }
                 }
               });
  return cube;
}

}  // namespace spad::sim
