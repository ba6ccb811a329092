#include "spad/pipeline.hpp"

#include "spad/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace spad::pipeline {

RunConfig RunConfig::from_config(io::ConfigMap& cm) {
  RunConfig rc;
  rc.sensor.rows = static_cast<int>(cm.take_long("rows", rc.sensor.rows));
  rc.sensor.cols = static_cast<int>(cm.take_long("cols", rc.sensor.cols));
  rc.sensor.bins = static_cast<int>(cm.take_long("bins", rc.sensor.bins));
  rc.sensor.bin_width_s = cm.take_double("bin_width_s", rc.sensor.bin_width_s);
  rc.sensor.dead_time_bins =
      static_cast<int>(cm.take_long("dead_time_bins", rc.sensor.dead_time_bins));
  rc.sensor.pulses_per_frame = static_cast<int>(
      cm.take_long("pulses_per_frame", rc.sensor.pulses_per_frame));
  rc.sensor.clip_limit = static_cast<std::uint32_t>(
      cm.take_long("clip_limit", static_cast<long>(rc.sensor.clip_limit)));
  rc.sensor.range_per_bin_m =
      cm.take_double("range_per_bin_m", rc.sensor.range_per_bin_m);

  rc.waveform_path = cm.take_string("waveform", rc.waveform_path);
  rc.waveform_sigma_bins =
      cm.take_double("waveform_sigma_bins", rc.waveform_sigma_bins);
  rc.atlas_path = cm.take_string("atlas", rc.atlas_path);
  rc.luts_path = cm.take_string("luts", rc.luts_path);

  rc.k_echoes = static_cast<int>(cm.take_long("k_echoes", rc.k_echoes));
  rc.fit_window_bins =
      static_cast<int>(cm.take_long("fit_window_bins", rc.fit_window_bins));
  rc.min_sep_bins = static_cast<int>(cm.take_long("min_sep_bins", rc.min_sep_bins));
  rc.noise_tail_bins =
      static_cast<int>(cm.take_long("noise_tail_bins", rc.noise_tail_bins));
  rc.bg_floor_photons = cm.take_double("bg_floor_photons", rc.bg_floor_photons);
  rc.window_offset_bins =
      static_cast<int>(cm.take_long("window_offset_bins", rc.window_offset_bins));

  rc.band_rows = static_cast<int>(cm.take_long("band_rows", rc.band_rows));
  rc.line_scan = cm.take_bool("line_scan", rc.line_scan);
  rc.decay_w = cm.take_double("decay_w", rc.decay_w);
  rc.decay_sign = static_cast<int>(cm.take_long("decay_sign", rc.decay_sign));

  rc.pileup_threshold_per_pulse =
      cm.take_double("pileup_threshold_per_pulse", rc.pileup_threshold_per_pulse);
  rc.aggressor_floor_per_pulse =
      cm.take_double("aggressor_floor_per_pulse", rc.aggressor_floor_per_pulse);
  rc.sigmoid_T = cm.take_double("sigmoid_T", rc.sigmoid_T);
  rc.five_sigma_gate = cm.take_double("five_sigma_gate", rc.five_sigma_gate);
  rc.conf_cap = cm.take_double("conf_cap", rc.conf_cap);
  rc.use_gamma_prime =
      cm.take_string("glare_source_intensity", "gamma_prime") == "gamma_prime";

  rc.lut_alpha_min = cm.take_double("lut_alpha_min", rc.lut_alpha_min);
  rc.lut_alpha_max = cm.take_double("lut_alpha_max", rc.lut_alpha_max);
  rc.lut_alpha_count =
      static_cast<int>(cm.take_long("lut_alpha_count", rc.lut_alpha_count));
  rc.lut_beta_min = cm.take_double("lut_beta_min", rc.lut_beta_min);
  rc.lut_beta_max = cm.take_double("lut_beta_max", rc.lut_beta_max);
  rc.lut_beta_count =
      static_cast<int>(cm.take_long("lut_beta_count", rc.lut_beta_count));

  rc.seed = static_cast<std::uint64_t>(cm.take_long("seed", 0));
  rc.threads = static_cast<int>(cm.take_long("threads", rc.threads));
  rc.eval_missing_policy =
      cm.take_string("eval_missing_policy", rc.eval_missing_policy);
  rc.validate();
  return rc;
}

void RunConfig::validate() const {
  sensor.validate();
  if (k_echoes < 1 || k_echoes > 127) throw ConfigError("k_echoes must be in [1, 127]");
  if (fit_window_bins < 0 || min_sep_bins < 0)
    throw ConfigError("window sizes must be >= 0");
  if (noise_tail_bins < 1) throw ConfigError("noise_tail_bins must be >= 1");
  if (band_rows < 1) throw ConfigError("band_rows must be >= 1");
  if (decay_sign != 1 && decay_sign != -1)
    throw ConfigError("decay_sign must be +1 or -1");
  if (pileup_threshold_per_pulse < 0 || aggressor_floor_per_pulse < 0 ||
      sigmoid_T <= 0 || five_sigma_gate < 0 || conf_cap <= 0 || decay_w < 0)
    throw ConfigError("thresholds must be nonnegative");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (eval_missing_policy != "exclude" && eval_missing_policy != "penalize")
    throw ConfigError("eval_missing_policy must be exclude or penalize");
}

Waveform RunConfig::make_waveform() const {
  if (!waveform_path.empty())
    return io::read_waveform_text(waveform_path, sensor.bins);
  return Waveform::gaussian(sensor.bins, waveform_sigma_bins);
}

dsp::DspParams RunConfig::dsp_params(const Waveform& wf) const {
  dsp::DspParams p = dsp::DspParams::defaults_for(wf);
  p.k_echoes = k_echoes;
  if (fit_window_bins > 0) p.fit_window_bins = fit_window_bins;
  p.min_sep_bins = min_sep_bins > 0 ? min_sep_bins : p.fit_window_bins;
  p.noise_tail_bins = std::min(noise_tail_bins, sensor.bins);
  p.bg_floor_photons = bg_floor_photons;
  p.window_offset_bins = window_offset_bins;
  return p;
}

deglare::GlareParams RunConfig::glare_params() const {
  deglare::GlareParams g;
  g.aggressor_floor_per_pulse = aggressor_floor_per_pulse;
  g.line_scan = line_scan;
  g.use_gamma_prime = use_gamma_prime;
  return g;
}

deglare::SelectParams RunConfig::select_params(const Waveform& wf) const {
  deglare::SelectParams s;
  s.fit_window_bins = dsp_params(wf).fit_window_bins;
  s.five_sigma_gate = five_sigma_gate;
  s.sigmoid_T = sigmoid_T;
  s.conf_cap = conf_cap;
  s.pileup_threshold_per_pulse = pileup_threshold_per_pulse;
  return s;
}

pileup::LutBuildParams RunConfig::lut_params(const Waveform& wf) const {
  pileup::LutBuildParams p;
  p.alpha_grid = pileup::log_spaced(lut_alpha_min, lut_alpha_max, lut_alpha_count);
  p.beta_grid = pileup::lin_spaced(lut_beta_min, lut_beta_max, lut_beta_count);
  p.window = dsp_params(wf).fit_window_bins;
  p.dead_time_bins = sensor.dead_time_bins;
  p.bins = sensor.bins;
  return p;
}

SceneSpec read_scene(io::ConfigMap& cm, const SensorConfig& sensor,
                     double* glare_source_floor) {
  const double wall_depth = cm.take_double("wall_depth_bin", 0.0);
  const double wall_alpha = cm.take_double("wall_alpha", 0.0);
  const double beta = cm.take_double("beta_per_pulse", 0.0);
  if (glare_source_floor)
    *glare_source_floor = cm.take_double("glare_source_floor", 0.0);

  SceneSpec scene = SceneSpec::flat(sensor.rows, sensor.cols, wall_depth,
                                    wall_alpha, beta);
  // rect_N = r0 c0 r1 c1 depth_bin alpha [retro]
  for (auto& [key, value] : cm.take_prefixed("rect_")) {
    std::istringstream is(value);
    SceneRect rect;
    std::string tag;
    if (!(is >> rect.r0 >> rect.c0 >> rect.r1 >> rect.c1 >> rect.depth_bin >>
          rect.alpha))
      throw ConfigError("scene: bad rectangle in " + key);
    is >> tag;
    scene.paint(rect, tag == "retro");
  }
  scene.validate(sensor);
  return scene;
}

PipelineResult run_pipeline(const HistogramCube& cube, const Waveform& wf,
                            const gsf::GsfAtlas* atlas,
                            const pileup::PileupLuts& luts, const RunConfig& rc,
                            bool enable_deglare) {
  if (cube.pulses_per_frame < 1)
    throw InputError("pipeline: cube has no pulse count");
  SensorConfig cfg = rc.sensor;
  cfg.rows = cube.counts.rows();
  cfg.cols = cube.counts.cols();
  cfg.bins = cube.counts.bins();
  cfg.pulses_per_frame = cube.pulses_per_frame;

  const dsp::DspParams dp = rc.dsp_params(wf);
  if (luts.window != dp.fit_window_bins)
    throw ConfigError("pipeline: tables were built with window " +
                      std::to_string(luts.window) + " but the fitting window is " +
                      std::to_string(dp.fit_window_bins));
  EchoSet raw = dsp::extract_echoes(cube, wf, dp, rc.threads);

  PipelineResult res;
  res.echoes.rows = raw.rows;
  res.echoes.cols = raw.cols;
  res.echoes.offsets = raw.offsets;
  res.echoes.echoes.resize(raw.echoes.size());
  res.beta_hat.resize(static_cast<std::size_t>(raw.rows) * raw.cols, 0.0);

  parallel_for(static_cast<std::int64_t>(raw.echoes.size()), rc.threads,
               [&](std::int64_t lo, std::int64_t hi) {
                 for (std::int64_t i = lo; i < hi; ++i) {
                   const Echo& e = raw.echoes[i];
                   const double beta_hat =
                       e.background * cfg.bins / cfg.pulses_per_frame;
                   res.echoes.echoes[i] = pileup::correct_echo(
                       e, beta_hat, luts, cfg, rc.pileup_threshold_per_pulse);
                 }
               });
  for (std::size_t p = 0; p + 1 < raw.offsets.size(); ++p)
    if (raw.offsets[p] < raw.offsets[p + 1])
      res.beta_hat[p] = raw.echoes[raw.offsets[p]].background * cfg.bins /
                        static_cast<double>(cfg.pulses_per_frame);

  if (enable_deglare) {
    if (!atlas) throw ConfigError("pipeline: glare stage requires an atlas");
    deglare::OverlapTable overlap(wf, dp.fit_window_bins);
    res.glare = deglare::predict_glare(res.echoes, *atlas, overlap, cfg,
                                       rc.glare_params(), rc.threads);
  } else {
    res.glare.g.assign(res.echoes.echoes.size(), 0.0);
  }
  res.selection = deglare::select_depth(res.echoes, res.glare, luts, cfg,
                                        rc.select_params(wf), rc.threads);
  return res;
}

std::vector<io::EchoRow> make_echo_rows(const PipelineResult& res) {
  std::vector<io::EchoRow> rows;
  rows.reserve(res.echoes.echoes.size());
  for (int r = 0; r < res.echoes.rows; ++r)
    for (int c = 0; c < res.echoes.cols; ++c) {
      const std::uint32_t lo = res.echoes.begin(r, c);
      const std::uint32_t hi = res.echoes.end(r, c);
      for (std::uint32_t i = lo; i < hi; ++i) {
        const CorrectedEcho& e = res.echoes.echoes[i];
        io::EchoRow row;
        row.row = r;
        row.col = c;
        row.echo = static_cast<int>(i - lo);
        row.counts = e.base.counts;
        row.mean_bin = e.base.mean_tof;
        row.var_bin2 = e.base.var_tof;
        row.background = e.base.background;
        row.alpha_hat = e.alpha_hat;
        row.mean_corr_bin = e.mean_corrected;
        row.glare_pred = res.glare.g[i];
        row.g_expected = res.selection.expected_glare_counts[i];
        row.confidence = res.selection.confidence[i];
        const bool winner =
            res.selection.conf.chosen(r, c) == static_cast<std::int8_t>(i - lo);
        row.source_tag =
            winner ? to_string(static_cast<DepthSource>(res.selection.depth.source(r, c)))
                   : "-";
        rows.push_back(row);
      }
    }
  return rows;
}

HistogramCube accumulate_frames(const std::vector<HistogramCube>& frames) {
  if (frames.empty()) throw InputError("accumulate: no frames");
  HistogramCube sum = frames[0];
  for (std::size_t f = 1; f < frames.size(); ++f) {
    const HistogramCube& c = frames[f];
    if (c.counts.rows() != sum.counts.rows() || c.counts.cols() != sum.counts.cols() ||
        c.counts.bins() != sum.counts.bins())
      throw InputError("accumulate: frame dimensions differ");
    for (std::size_t i = 0; i < sum.counts.size(); ++i)
      sum.counts.data()[i] += c.counts.data()[i];
    sum.pulses_per_frame += c.pulses_per_frame;
  }
  return sum;
}

}  // namespace spad::pipeline
