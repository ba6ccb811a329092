#include "spad/types.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

namespace spad {

namespace {

std::uint64_t hash_samples(const std::vector<double>& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double x : s) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(x));
    std::memcpy(&bits, &x, sizeof(bits));
    h = (h ^ bits) * 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Waveform Waveform::from_samples(std::vector<double> s) {
  if (s.empty()) throw ConfigError("waveform: no samples");
  double total = 0.0;
  for (double x : s) {
    if (!(x >= 0.0)) throw ConfigError("waveform: negative or NaN sample");
    total += x;
  }
  if (total <= 0.0) throw ConfigError("waveform: all samples zero");
  for (double& x : s) x /= total;
  Waveform wf;
  wf.shape_ = std::move(s);
  wf.finalize();
  return wf;
}

Waveform Waveform::gaussian(int bins, double sigma_bins) {
  if (bins < 1) throw ConfigError("waveform: bins must be >= 1");
  if (!(sigma_bins > 0)) throw ConfigError("waveform: sigma must be positive");
  // Pulse placed with its mean at ceil(5*sigma), support truncated at 5 sigma.
  double center = std::ceil(5.0 * sigma_bins);
  std::vector<double> s(bins, 0.0);
  for (int i = 0; i < bins; ++i) {
    double d = (i - center) / sigma_bins;
    if (std::abs(d) <= 5.0) s[i] = std::exp(-0.5 * d * d);
  }
  return from_samples(std::move(s));
}

void Waveform::finalize() {
  const int n = bins();
  double m = 0.0;
  for (int i = 0; i < n; ++i) m += shape_[i] * i;
  mean_ = m;

  double peak = *std::max_element(shape_.begin(), shape_.end());
  double tiny = peak * 1e-12;
  support_lo_ = 0;
  while (support_lo_ < n - 1 && shape_[support_lo_] <= tiny) ++support_lo_;
  support_hi_ = n - 1;
  while (support_hi_ > 0 && shape_[support_hi_] <= tiny) --support_hi_;

  // FWHM via linear interpolation of the half-maximum crossings.
  int ipeak = static_cast<int>(std::max_element(shape_.begin(), shape_.end()) -
                               shape_.begin());
  double half = peak / 2.0;
  double left = ipeak, right = ipeak;
  for (int i = ipeak; i > 0; --i) {
    if (shape_[i - 1] < half) {
      left = (i - 1) + (half - shape_[i - 1]) / (shape_[i] - shape_[i - 1]);
      break;
    }
    left = i - 1;
  }
  for (int i = ipeak; i < n - 1; ++i) {
    if (shape_[i + 1] < half) {
      right = i + (shape_[i] - half) / (shape_[i] - shape_[i + 1]);
      break;
    }
    right = i + 1;
  }
  fwhm_ = std::max(1.0, right - left);
  id_hash_ = hash_samples(shape_);
}

SceneSpec SceneSpec::flat(int rows, int cols, double depth, double alpha, double beta_pp) {
  SceneSpec s;
  s.rows = rows;
  s.cols = cols;
  s.depth_bin = Grid2<double>(rows, cols, depth);
  s.signal_alpha = Grid2<double>(rows, cols, alpha);
  s.beta = Grid2<double>(rows, cols, beta_pp);
  return s;
}

void SceneSpec::paint(const SceneRect& r, bool retro) {
  for (int rr = std::max(0, r.r0); rr < std::min(rows, r.r1); ++rr)
    for (int cc = std::max(0, r.c0); cc < std::min(cols, r.c1); ++cc) {
      depth_bin(rr, cc) = r.depth_bin;
      signal_alpha(rr, cc) = r.alpha;
    }
  if (retro) retro_regions.push_back(r);
}

void SceneSpec::validate(const SensorConfig& cfg) const {
  if (rows != cfg.rows || cols != cfg.cols)
    throw ConfigError("scene dimensions do not match sensor");
  for (std::size_t i = 0; i < depth_bin.size(); ++i) {
    if (!(depth_bin[i] >= 0.0) || depth_bin[i] >= cfg.bins)
      throw ConfigError("scene depth outside [0, bins)");
    if (!(signal_alpha[i] >= 0.0)) throw ConfigError("scene alpha must be >= 0");
    if (!(beta[i] >= 0.0)) throw ConfigError("scene beta must be >= 0");
  }
}

}  // namespace spad
