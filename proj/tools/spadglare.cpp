// Command-line front end: simulate, calibrate-gsf, build-luts, pipeline,
// baseline, eval. Flags override config-file values, which override defaults.
#include "spad/baseline.hpp"
#include "spad/io.hpp"
#include "spad/metrics.hpp"
#include "spad/pipeline.hpp"
#include "spad/sim.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>

namespace {

using namespace spad;

constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;
constexpr int kExitStage = 4;

// Config keys mirrored as --key flags; flag > file > default.
struct CliOverrides {
  std::vector<std::pair<std::string, std::string>> kv;

  void add_to(CLI::App* cmd) {
    static const char* keys[] = {
        "rows", "cols", "bins", "bin_width_s", "dead_time_bins",
        "pulses_per_frame", "clip_limit", "range_per_bin_m", "waveform",
        "waveform_sigma_bins", "atlas", "luts", "k_echoes", "fit_window_bins",
        "min_sep_bins", "noise_tail_bins", "bg_floor_photons",
        "window_offset_bins", "band_rows", "line_scan", "decay_w", "decay_sign",
        "pileup_threshold_per_pulse", "aggressor_floor_per_pulse", "sigmoid_T",
        "five_sigma_gate", "conf_cap", "glare_source_intensity",
        "lut_alpha_min", "lut_alpha_max", "lut_alpha_count", "lut_beta_min",
        "lut_beta_max", "lut_beta_count", "seed", "threads",
        "eval_missing_policy"};
    for (const char* key : keys) {
      cmd->add_option_function<std::string>(
          std::string("--") + key,
          [this, key](const std::string& v) { kv.push_back({key, v}); });
    }
  }

  pipeline::RunConfig resolve(const std::string& config_path) const {
    io::ConfigMap cm = config_path.empty()
                           ? io::ConfigMap::from_string("", "<defaults>")
                           : io::ConfigMap::from_file(config_path);
    for (const auto& [k, v] : kv) cm.set(k, v);
    pipeline::RunConfig rc = pipeline::RunConfig::from_config(cm);
    cm.finish();
    return rc;
  }
};

gsf::GsfAtlas load_atlas(const pipeline::RunConfig& rc) {
  if (rc.atlas_path.empty()) throw ConfigError("an atlas file is required");
  gsf::GsfAtlas atlas = io::read_gsfa(rc.atlas_path);
  atlas.band_rows = rc.band_rows;
  atlas.decay_w = rc.decay_w;
  atlas.decay_sign = rc.decay_sign;
  return atlas;
}

pileup::PileupLuts load_or_build_luts(const pipeline::RunConfig& rc,
                                      const Waveform& wf) {
  if (!rc.luts_path.empty() && std::filesystem::exists(rc.luts_path))
    return io::read_plut(rc.luts_path);
  pileup::PileupLuts luts = pileup::build_luts(wf, rc.lut_params(wf), rc.threads);
  if (!rc.luts_path.empty()) io::write_plut(rc.luts_path, luts);
  return luts;
}

int cmd_simulate(const pipeline::RunConfig& rc, const std::string& scene_path,
                 const std::string& out_path, const std::string& sampler,
                 int frames) {
  if (sampler != "expectation" && sampler != "montecarlo")
    throw ConfigError("simulate: sampler must be expectation or montecarlo");
  if (frames < 1) throw ConfigError("simulate: frames must be >= 1");
  io::ConfigMap sm = io::ConfigMap::from_file(scene_path);
  double source_floor = 0.0;
  SceneSpec scene = pipeline::read_scene(sm, rc.sensor, &source_floor);
  sm.finish();

  const Waveform wf = rc.make_waveform();
  IdealTransient ideal = sim::render_ideal_transient(scene, wf, rc.sensor, rc.threads);
  if (!rc.atlas_path.empty()) {
    gsf::GsfAtlas atlas = load_atlas(rc);
    sim::GlareOptions opt;
    opt.line_scan = rc.line_scan;
    opt.min_source_flux = source_floor;
    ideal = sim::apply_glare(ideal, atlas, rc.sensor, opt, rc.threads);
  }

  std::vector<HistogramCube> cubes;
  for (int f = 0; f < frames; ++f) {
    const std::uint64_t seed = rc.seed + static_cast<std::uint64_t>(f);
    cubes.push_back(sampler == "montecarlo"
                        ? sim::simulate_spad_montecarlo(ideal, rc.sensor, seed,
                                                        rc.threads)
                        : sim::simulate_spad_expectation(ideal, rc.sensor, seed,
                                                         rc.threads));
  }
  HistogramCube cube = pipeline::accumulate_frames(cubes);
  io::write_sphc(out_path, cube);
  std::cout << "wrote " << out_path << " (" << frames << " frame(s), "
            << cube.pulses_per_frame << " pulses)\n";
  return 0;
}

int cmd_calibrate(const pipeline::RunConfig& rc,
                  const std::vector<std::string>& cube_paths,
                  const std::string& out_path, bool apply_decay) {
  if (cube_paths.empty()) throw ConfigError("calibrate-gsf: no input cubes");
  gsf::GsfAtlas atlas;
  for (const auto& path : cube_paths) {
    HistogramCube cube = io::read_sphc(path);
    if (atlas.entries.empty()) {
      atlas.rows = cube.counts.rows();
      atlas.cols = cube.counts.cols();
    } else if (cube.counts.rows() != atlas.rows ||
               cube.counts.cols() != atlas.cols) {
      throw ConfigError("calibrate-gsf: capture dimensions differ: " + path);
    }
    // Time-summed map; the bright spot is the source.
    gsf::GsfMeasurement meas;
    meas.raw = Grid2<double>(cube.counts.rows(), cube.counts.cols(), 0.0);
    double best = -1.0;
    for (int r = 0; r < cube.counts.rows(); ++r)
      for (int c = 0; c < cube.counts.cols(); ++c) {
        double sum = 0.0;
        const std::uint32_t* px = cube.counts.pixel(r, c);
        for (int t = 0; t < cube.counts.bins(); ++t) sum += px[t];
        meas.raw(r, c) = sum;
        if (sum > best) {
          best = sum;
          meas.source = {r, c};
        }
      }
    gsf::NormalizedGsf g = gsf::normalize_gsf(meas);
    if (apply_decay) g = gsf::distance_weight(g, rc.decay_w, rc.decay_sign);
    atlas.entries.push_back(std::move(g));
  }
  atlas.band_rows = rc.band_rows;
  atlas.decay_w = rc.decay_w;
  atlas.decay_sign = rc.decay_sign;
  io::write_gsfa(out_path, atlas);
  std::cout << "wrote " << out_path << " (" << atlas.entries.size()
            << " positions)\n";
  return 0;
}

int cmd_build_luts(const pipeline::RunConfig& rc, const std::string& out_path) {
  const Waveform wf = rc.make_waveform();
  pileup::PileupLuts luts = pileup::build_luts(wf, rc.lut_params(wf), rc.threads);
  io::write_plut(out_path, luts);
  std::cout << "wrote " << out_path << " (" << luts.n_alpha() << " x "
            << luts.n_beta() << ", invertible to alpha="
            << luts.invertible_alpha_max() << ")\n";
  return 0;
}

int cmd_pipeline(const pipeline::RunConfig& rc,
                 const std::vector<std::string>& cube_paths,
                 const std::string& out_dir, bool no_deglare,
                 const std::string& truth_path) {
  std::vector<HistogramCube> cubes;
  for (const auto& p : cube_paths) cubes.push_back(io::read_sphc(p));
  HistogramCube cube = pipeline::accumulate_frames(cubes);

  const Waveform wf = rc.make_waveform();
  pileup::PileupLuts luts = load_or_build_luts(rc, wf);
  gsf::GsfAtlas atlas;
  const gsf::GsfAtlas* atlas_ptr = nullptr;
  if (!no_deglare) {
    atlas = load_atlas(rc);
    atlas_ptr = &atlas;
  }

  pipeline::PipelineResult res =
      pipeline::run_pipeline(cube, wf, atlas_ptr, luts, rc, !no_deglare);

  std::filesystem::create_directories(out_dir);
  io::write_depth(out_dir + "/depth.dpth", res.selection.depth.depth_m, false);
  io::write_depth(out_dir + "/confidence.conf", res.selection.conf.c, true);
  io::write_echo_csv(out_dir + "/echoes.csv", pipeline::make_echo_rows(res));

  if (!truth_path.empty()) {
    Grid2<float> truth = io::read_depth(truth_path, false);
    metrics::EvalParams ep;
    ep.policy = rc.eval_missing_policy == "penalize"
                    ? metrics::MissingPolicy::penalize
                    : metrics::MissingPolicy::exclude;
    ep.penalty_depth_m = rc.sensor.bins * rc.sensor.range_per_bin_m;
    metrics::EvalReport rep =
        metrics::evaluate(truth, res.selection.depth.depth_m, ep);
    std::ofstream out(out_dir + "/report.txt");
    out << rep.to_kv();
    std::cout << rep.to_kv();
  }
  std::cout << "wrote " << out_dir << "/depth.dpth, confidence.conf, echoes.csv\n";
  return 0;
}

int cmd_baseline(const pipeline::RunConfig& rc,
                 const std::vector<std::string>& cube_paths,
                 const std::string& out_dir) {
  std::vector<HistogramCube> cubes;
  for (const auto& p : cube_paths) cubes.push_back(io::read_sphc(p));
  HistogramCube cube = pipeline::accumulate_frames(cubes);

  const Waveform wf = rc.make_waveform();
  gsf::GsfAtlas atlas = load_atlas(rc);
  // Single spread map, the one measured closest to the array center.
  const double cr = (atlas.rows - 1) / 2.0;
  const double cc = (atlas.cols - 1) / 2.0;
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::max();
  for (std::size_t i = 0; i < atlas.entries.size(); ++i) {
    const auto& s = atlas.entries[i].source;
    const double d = (s.row - cr) * (s.row - cr) + (s.col - cc) * (s.col - cc);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  gsf::NormalizedGsf center = atlas.entries[best];
  if (rc.line_scan) {
    center.map = gsf::apply_band_mask(
        center.map, static_cast<int>(std::lround(center.source.row)),
        atlas.band_rows);
  }
  baseline::SharpenOperator op = baseline::from_normalized(center);

  baseline::BaselineResult res =
      baseline::baseline_depth(cube, op, wf, rc.sensor,
                               rc.dsp_params(wf), rc.threads);
  std::filesystem::create_directories(out_dir);
  io::write_depth(out_dir + "/depth.dpth", res.depth.depth_m, false);
  std::ofstream stats(out_dir + "/clamp_stats.txt");
  stats << "clamped_entries = " << res.clamped_entries << "\n"
        << "clamped_mass = " << res.clamped_mass << "\n";
  std::cout << "wrote " << out_dir << "/depth.dpth (clamped "
            << res.clamped_entries << " entries)\n";
  return 0;
}

int cmd_eval(const pipeline::RunConfig& rc, const std::string& truth_path,
             const std::string& pred_path, const std::string& before_path,
             double ghost_depth_m, double ghost_tol_m,
             const std::string& out_csv) {
  Grid2<float> truth = io::read_depth(truth_path, false);
  Grid2<float> pred = io::read_depth(pred_path, false);
  metrics::EvalParams ep;
  ep.policy = rc.eval_missing_policy == "penalize"
                  ? metrics::MissingPolicy::penalize
                  : metrics::MissingPolicy::exclude;
  ep.penalty_depth_m = rc.sensor.bins * rc.sensor.range_per_bin_m;
  metrics::EvalReport rep = metrics::evaluate(truth, pred, ep);
  if (ghost_depth_m > 0) {
    rep.n_ghost_after = metrics::count_ghosts(truth, pred, ghost_depth_m, ghost_tol_m);
    if (!before_path.empty()) {
      Grid2<float> before = io::read_depth(before_path, false);
      rep.n_ghost_before =
          metrics::count_ghosts(truth, before, ghost_depth_m, ghost_tol_m);
    }
  }
  std::cout << rep.to_kv();
  if (!out_csv.empty()) {
    std::ofstream out(out_csv);
    out << rep.to_csv_row(true);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SPAD LiDAR glare simulation and mitigation toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  if (const char* env = std::getenv("SPADGLARE_CONFIG")) config_path = env;

  CliOverrides overrides;

  std::string scene_path, out_path, out_dir, sampler = "expectation";
  std::string truth_path, pred_path, before_path, out_csv;
  std::vector<std::string> cube_paths;
  int frames = 1;
  bool no_deglare = false;
  bool no_decay = false;
  double ghost_depth_m = 0.0, ghost_tol_m = 0.06;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value config file");
    overrides.add_to(cmd);
  };

  CLI::App* sim_cmd = app.add_subcommand("simulate", "render a scene into an SPHC cube");
  add_common(sim_cmd);
  sim_cmd->add_option("--scene", scene_path, "scene config")->required();
  sim_cmd->add_option("--out", out_path, "output .sphc")->required();
  sim_cmd->add_option("--sampler", sampler, "expectation | montecarlo");
  sim_cmd->add_option("--frames", frames, "frames to accumulate (clipped per frame)");

  CLI::App* cal_cmd =
      app.add_subcommand("calibrate-gsf", "build a GSFA atlas from spot captures");
  add_common(cal_cmd);
  cal_cmd->add_option("cubes", cube_paths, "per-position SPHC cubes")->required();
  cal_cmd->add_option("--out", out_path, "output .gsfa")->required();
  cal_cmd->add_flag("--no-distance-weight", no_decay,
                    "skip the exponential distance weighting");

  CLI::App* lut_cmd = app.add_subcommand("build-luts", "precompute pileup tables");
  add_common(lut_cmd);
  lut_cmd->add_option("--out", out_path, "output .plut")->required();

  CLI::App* pipe_cmd =
      app.add_subcommand("pipeline", "histograms -> echoes -> corrected depth");
  add_common(pipe_cmd);
  pipe_cmd->add_option("cubes", cube_paths, "input SPHC cubes (summed)")->required();
  pipe_cmd->add_option("--out-dir", out_dir, "output directory")->required();
  pipe_cmd->add_flag("--no-deglare", no_deglare,
                     "skip glare prediction; select the brightest echo");
  pipe_cmd->add_option("--truth", truth_path, "DPTH ground truth for a report");

  CLI::App* base_cmd =
      app.add_subcommand("baseline", "photographic per-slice de-glare depth");
  add_common(base_cmd);
  base_cmd->add_option("cubes", cube_paths, "input SPHC cubes (summed)")->required();
  base_cmd->add_option("--out-dir", out_dir, "output directory")->required();

  CLI::App* eval_cmd = app.add_subcommand("eval", "compare two depth maps");
  add_common(eval_cmd);
  eval_cmd->add_option("truth", truth_path, "DPTH ground truth")->required();
  eval_cmd->add_option("pred", pred_path, "DPTH prediction")->required();
  eval_cmd->add_option("--before", before_path, "uncorrected DPTH for ghost counts");
  eval_cmd->add_option("--ghost-depth-m", ghost_depth_m, "ghost depth to count");
  eval_cmd->add_option("--ghost-tol-m", ghost_tol_m, "ghost depth tolerance");
  eval_cmd->add_option("--out-csv", out_csv, "write a machine-readable row");

  CLI11_PARSE(app, argc, argv);

  try {
    const pipeline::RunConfig rc = overrides.resolve(config_path);
    if (sim_cmd->parsed())
      return cmd_simulate(rc, scene_path, out_path, sampler, frames);
    if (cal_cmd->parsed()) return cmd_calibrate(rc, cube_paths, out_path, !no_decay);
    if (lut_cmd->parsed()) return cmd_build_luts(rc, out_path);
    if (pipe_cmd->parsed())
      return cmd_pipeline(rc, cube_paths, out_dir, no_deglare, truth_path);
    if (base_cmd->parsed()) return cmd_baseline(rc, cube_paths, out_dir);
    if (eval_cmd->parsed())
      return cmd_eval(rc, truth_path, pred_path, before_path, ghost_depth_m,
                      ghost_tol_m, out_csv);
  } catch (const spad::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const spad::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  }
  return kExitUsage;
}
