#include "spad/deglare.hpp"

#include "spad/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace spad::deglare {

double temporal_overlap(double dt, int window_bins, const Waveform& wf) {
  if (window_bins < 1) throw ConfigError("overlap: window must be >= 1");
  const auto& shape = wf.shape();
  const double half = window_bins / 2.0;
  const double mu = wf.mean();
  double o = 0.0;
  for (int k = wf.support_lo(); k <= wf.support_hi(); ++k) {
    // Bin k occupies [tau-0.5, tau+0.5) around the pulse mean; count the
    // covered fraction inside the window [-half, half].
    const double tau = k - mu + dt;
    const double lo = std::max(tau - 0.5, -half);
    const double hi = std::min(tau + 0.5, half);
    if (hi > lo) o += shape[k] * (hi - lo);
  }
  return o;
}

OverlapTable::OverlapTable(const Waveform& wf, int window_bins) {
  if (window_bins < 1) throw ConfigError("overlap: window must be >= 1");
  const double mu = wf.mean();
  const int extent =
      std::max(std::abs(wf.support_hi() - static_cast<int>(mu)),
               std::abs(wf.support_lo() - static_cast<int>(mu)));
  radius_ = window_bins / 2 + extent + 2;
  table_.assign(2 * radius_ + 1, 0.0);
  for (int dt = -radius_; dt <= radius_; ++dt)
    table_[dt + radius_] = temporal_overlap(dt, window_bins, wf);
}

double OverlapTable::at(double dt) const {
  if (dt <= -radius_ || dt >= radius_) return 0.0;
  const double x = dt + radius_;
  const int i = static_cast<int>(std::floor(x));
  const double f = x - i;
  return table_[i] * (1.0 - f) + table_[i + 1] * f;
}

GlarePrediction predict_glare(const CorrectedEchoSet& echoes,
                              const gsf::GsfAtlas& atlas,
                              const OverlapTable& overlap,
                              const SensorConfig& cfg, const GlareParams& params,
                              int threads) {
  const int rows = echoes.rows;
  const int cols = echoes.cols;
  if (atlas.rows != rows || atlas.cols != cols)
    throw ConfigError("deglare: atlas does not cover the sensor");

  struct Aggressor {
    int row, col;
    gsf::BandedBlend blend;
    double scale = 0.0;                          // outscatter / band_sum
    std::vector<std::pair<double, double>> src;  // (time, strength)
  };

  // Bright echoes grouped by pixel, in pixel scan order.
  std::vector<Aggressor> aggressors;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      Aggressor a;
      a.row = r;
      a.col = c;
      for (std::uint32_t i = echoes.begin(r, c); i < echoes.end(r, c); ++i) {
        const CorrectedEcho& e = echoes.echoes[i];
        if (e.base.counts / cfg.pulses_per_frame <= params.aggressor_floor_per_pulse)
          continue;
        const double strength =
            (params.use_gamma_prime ? e.gamma_prime : e.alpha_hat) *
            cfg.pulses_per_frame;
        a.src.push_back({e.mean_corrected, strength});
      }
      if (!a.src.empty()) aggressors.push_back(std::move(a));
    }

  {
    std::vector<PixelCoord> coords(aggressors.size());
    for (std::size_t i = 0; i < aggressors.size(); ++i)
      coords[i] = {aggressors[i].row, aggressors[i].col};
    // Chunked by whole source rows so every chunk keeps the batch's row reuse.
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
                       params.line_scan);
                   for (std::size_t i = 0; i < blends.size(); ++i) {
                     Aggressor& a = aggressors[b_lo + i];
                     a.blend = std::move(blends[i]);
                     a.scale = a.blend.band_sum > 0
                                   ? a.blend.outscatter / a.blend.band_sum
                                   : 0.0;
                   }
                 });
  }

  std::vector<std::vector<std::uint32_t>> by_victim_row(rows);
  for (std::size_t i = 0; i < aggressors.size(); ++i)
    for (int r = aggressors[i].blend.band_lo; r <= aggressors[i].blend.band_hi; ++r)
      by_victim_row[r].push_back(static_cast<std::uint32_t>(i));

  // Victim echo times packed flat so the inner pass streams through memory.
  std::vector<double> victim_time(echoes.echoes.size());
  for (std::size_t i = 0; i < echoes.echoes.size(); ++i)
    victim_time[i] = echoes.echoes[i].mean_corrected;

  GlarePrediction pred;
  pred.g.assign(echoes.echoes.size(), 0.0);

  parallel_for(rows, threads, [&](std::int64_t r_lo, std::int64_t r_hi) {
    for (std::int64_t r = r_lo; r < r_hi; ++r) {
      const std::uint32_t* row_off =
          echoes.offsets.data() + static_cast<std::size_t>(r) * cols;
      for (std::uint32_t ai : by_victim_row[r]) {
        const Aggressor& a = aggressors[ai];
        const double* vals =
            &a.blend.values(static_cast<int>(r) - a.blend.band_lo, 0);
        const double scale = a.scale;
        const auto* src = a.src.data();
        const int n_src = static_cast<int>(a.src.size());
        const bool self_row = a.row == static_cast<int>(r);
        for (int c = 0; c < cols; ++c) {
          const std::uint32_t e_lo = row_off[c];
          const std::uint32_t e_hi = row_off[c + 1];
          if (e_lo == e_hi) continue;
          if (self_row && a.col == c) continue;  // zero diagonal
          const double spread = scale * vals[c];
          if (spread <= 0.0) continue;
          for (std::uint32_t e = e_lo; e < e_hi; ++e) {
            const double t_victim = victim_time[e];
            double acc = 0.0;
            for (int s = 0; s < n_src; ++s)
              acc += overlap.at(src[s].first - t_victim) * src[s].second;
            pred.g[e] += spread * acc;
          }
        }
      }
    }
  });
  return pred;
}

double binomial_confidence(double detected, int pulses, double p_glare,
                           double cap) {
  if (detected < 0 || detected > pulses)
    throw InputError("confidence: detected counts outside [0, pulses]");
  if (p_glare < 0 || p_glare > 1)
    throw InputError("confidence: glare probability outside [0, 1]");
  const double expected = pulses * p_glare;
  if (detected < expected) return 0.0;
  if (p_glare == 0.0) return detected > 0 ? cap : 0.0;
  if (p_glare == 1.0) return 0.0;  // detected == pulses here, probability 1

  const double n = pulses;
  const double y = detected;
  const double log_p = std::lgamma(n + 1.0) - std::lgamma(y + 1.0) -
                       std::lgamma(n - y + 1.0) + y * std::log(p_glare) +
                       (n - y) * std::log1p(-p_glare);
  return std::clamp(-log_p, 0.0, cap);
}

Selection select_depth(const CorrectedEchoSet& echoes,
                       const GlarePrediction& glare, const pileup::PileupLuts& luts,
                       const SensorConfig& cfg, const SelectParams& params,
                       int threads) {
  const int rows = echoes.rows;
  const int cols = echoes.cols;
  if (glare.g.size() != echoes.echoes.size())
    throw InputError("select: glare prediction does not match echo set");

  Selection sel;
  sel.depth.depth_m = Grid2<float>(rows, cols, depth_no_return());
  sel.depth.source =
      Grid2<std::uint8_t>(rows, cols, static_cast<std::uint8_t>(DepthSource::no_return));
  sel.conf.c = Grid2<float>(rows, cols, depth_no_return());
  sel.conf.chosen = Grid2<std::int8_t>(rows, cols, -1);
  sel.expected_glare_counts.assign(echoes.echoes.size(), 0.0);
  sel.confidence.assign(echoes.echoes.size(), 0.0);

  parallel_for(static_cast<std::int64_t>(rows) * cols, threads,
               [&](std::int64_t lo, std::int64_t hi) {
                 for (std::int64_t p = lo; p < hi; ++p) {
                   const int r = static_cast<int>(p / cols);
                   const int c = static_cast<int>(p % cols);
                   const std::uint32_t e_lo = echoes.begin(r, c);
                   const std::uint32_t e_hi = echoes.end(r, c);
                   if (e_lo == e_hi) continue;

                   int best = -1;
                   double best_conf = 0.0;
                   int first_survivor = -1;  // default brightest-peak choice
                   int best_fb = -1;
                   double best_fb_weight = 0.0;

                   for (std::uint32_t e = e_lo; e < e_hi; ++e) {
                     const CorrectedEcho& ce = echoes.echoes[e];
                     const double bg_window =
                         ce.base.background * params.fit_window_bins;
                     const double gate =
                         bg_window + params.five_sigma_gate * std::sqrt(bg_window);
                     if (ce.base.degenerate || ce.base.counts < gate) continue;

                     const double beta_hat =
                         ce.base.background * cfg.bins / cfg.pulses_per_frame;
                     const double g_flux = glare.g[e] / cfg.pulses_per_frame;
                     const double G = pileup::glare_flux_to_expected_counts(
                         g_flux, beta_hat, luts, cfg.pulses_per_frame,
                         params.pileup_threshold_per_pulse);
                     sel.expected_glare_counts[e] = G;

                     const double y = std::min(
                         ce.base.counts, static_cast<double>(cfg.pulses_per_frame));
                     const double p_glare =
                         std::clamp(G / cfg.pulses_per_frame, 0.0, 1.0);
                     const double conf = binomial_confidence(
                         y, cfg.pulses_per_frame, p_glare, params.conf_cap);
                     sel.confidence[e] = conf;

                     const int idx = static_cast<int>(e - e_lo);
                     if (first_survivor < 0) first_survivor = idx;
                     if (conf > best_conf) {
                       best_conf = conf;
                       best = idx;
                     }
                     const double w =
                         1.0 / (1.0 + std::exp(-(ce.base.counts - G) / params.sigmoid_T));
                     if (best_fb < 0 || w > best_fb_weight) {
                       best_fb_weight = w;
                       best_fb = idx;
                     }
                   }

                   DepthSource tag;
                   int chosen;
                   if (best >= 0) {
                     chosen = best;
                     tag = (best == first_survivor) ? DepthSource::clean
                                                    : DepthSource::deglared;
                   } else if (best_fb >= 0) {
                     chosen = best_fb;
                     tag = DepthSource::fallback;
                   } else {
                     continue;  // stays no-return
                   }

                   const CorrectedEcho& win = echoes.echoes[e_lo + chosen];
                   sel.depth.depth_m(r, c) =
                       static_cast<float>(win.mean_corrected * cfg.range_per_bin_m);
                   sel.depth.source(r, c) = static_cast<std::uint8_t>(tag);
                   sel.conf.c(r, c) =
                       static_cast<float>(sel.confidence[e_lo + chosen]);
                   sel.conf.chosen(r, c) = static_cast<std::int8_t>(chosen);
                 }
               });
  return sel;
}

}  // namespace spad::deglare
