#include "spad/pileup.hpp"

#include "spad/kernels.hpp"
#include "spad/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace spad::pileup {

std::vector<double> q_from_flux(std::span<const double> flux, int dead_time_bins) {
  const int bins = static_cast<int>(flux.size());
  if (bins < 1) throw ConfigError("pileup: empty flux vector");
  if (dead_time_bins < 0) throw ConfigError("pileup: negative dead time");
  for (double v : flux)
    if (!(v >= 0.0)) throw ModelError("pileup: flux must be nonnegative");

  const int win = std::min(dead_time_bins + 1, bins - 1);

  // Circular prefix sums give each bin's preceding-window flux in O(1).
  std::vector<double> prefix(bins + 1, 0.0);
  for (int i = 0; i < bins; ++i) prefix[i + 1] = prefix[i] + flux[i];

  auto window_sum = [&](int i) {
    // Sum over bins [i-win, i-1] mod bins.
    long lo = static_cast<long>(i) - win;
    if (lo >= 0) return prefix[i] - prefix[lo];
    return (prefix[i] - prefix[0]) + (prefix[bins] - prefix[bins + lo]);
  };

  std::vector<double> q(bins, 0.0);
  for (int i = 0; i < bins; ++i) {
    const double lam = flux[i];
    if (lam <= 0.0) continue;
    // ln q = ln(1 - e^-lam) - sum of preceding flux.
    const double lnp = std::log(-std::expm1(-lam));
    const double s = win > 0 ? window_sum(i) : 0.0;
    double qi = std::exp(lnp - s);
    if (!(qi >= 0.0 && qi <= 1.0)) throw ModelError("pileup: q outside [0,1]");
    q[i] = qi;
  }
  return q;
}

std::vector<double> pileup_forward_q(double alpha, double beta, const Waveform& wf,
                                     double depth_bin, int dead_time_bins,
                                     int bins) {
  if (alpha < 0 || beta < 0) throw ModelError("pileup: alpha and beta must be >= 0");
  std::vector<double> lam(bins, beta / bins);
  add_shifted_waveform(lam.data(), bins, wf, depth_bin, alpha);
  return q_from_flux(lam, dead_time_bins);
}

std::vector<double> log_spaced(double lo, double hi, int n) {
  if (n < 2 || !(lo > 0) || !(hi > lo)) throw ConfigError("pileup: bad log grid");
  std::vector<double> g(n);
  const double l0 = std::log(lo), l1 = std::log(hi);
  for (int i = 0; i < n; ++i) g[i] = std::exp(l0 + (l1 - l0) * i / (n - 1));
  g.front() = lo;
  g.back() = hi;
  return g;
}

std::vector<double> lin_spaced(double lo, double hi, int n) {
  if (n < 2 || !(hi > lo)) throw ConfigError("pileup: bad linear grid");
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = lo + (hi - lo) * i / (n - 1);
  return g;
}

namespace {

int argmax(const std::vector<double>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

void check_grid(const std::vector<double>& g, const char* name) {
  if (g.size() < 2)
    throw ConfigError(std::string("pileup: grid needs at least two points: ") + name);
  for (std::size_t i = 1; i < g.size(); ++i)
    if (!(g[i] > g[i - 1]))
      throw ConfigError(std::string("pileup: grid not strictly increasing: ") + name);
}

// Index i and fraction f with x between grid[i] and grid[i+1], clamped.
struct GridPos {
  int i;
  double f;
};

GridPos locate(const std::vector<double>& grid, double x,
               bool log_domain, bool* clamped = nullptr) {
  const int n = static_cast<int>(grid.size());
  if (x <= grid.front()) {
    if (clamped && x < grid.front()) *clamped = true;
    return {0, 0.0};
  }
  if (x >= grid.back()) {
    if (clamped && x > grid.back()) *clamped = true;
    return {n - 2, 1.0};
  }
  int lo = static_cast<int>(std::upper_bound(grid.begin(), grid.end(), x) -
                            grid.begin()) - 1;
  lo = std::clamp(lo, 0, n - 2);
  double a = grid[lo], b = grid[lo + 1];
  double f = log_domain ? (std::log(x) - std::log(a)) / (std::log(b) - std::log(a))
                        : (x - a) / (b - a);
  return {lo, std::clamp(f, 0.0, 1.0)};
}

double bilinear(const PileupLuts& L, const std::vector<double>& t, double alpha,
                double beta) {
  GridPos pa = locate(L.alpha_grid, alpha, /*log=*/true);
  GridPos pb = locate(L.beta_grid, beta, /*log=*/false);
  auto v = [&](int ia, int ib) { return L.at(t, ia, ib); };
  double v0 = v(pa.i, pb.i) * (1 - pb.f) + v(pa.i, pb.i + 1) * pb.f;
  double v1 = v(pa.i + 1, pb.i) * (1 - pb.f) + v(pa.i + 1, pb.i + 1) * pb.f;
  return v0 * (1 - pa.f) + v1 * pa.f;
}

}  // namespace

double PileupLuts::gamma_at(double alpha, double beta) const {
  return bilinear(*this, gamma, alpha, beta);
}
double PileupLuts::mu_at(double alpha, double beta) const {
  return bilinear(*this, mu, alpha, beta);
}
double PileupLuts::var_at(double alpha, double beta) const {
  return bilinear(*this, var, alpha, beta);
}

double PileupLuts::invertible_alpha_max() const {
  int hi = n_alpha() - 1;
  for (int ib = 0; ib < n_beta(); ++ib) {
    int am = 0;
    for (int ia = 1; ia < n_alpha(); ++ia)
      if (at(var, ia, ib) > at(var, am, ib)) am = ia;
    int row_hi = am;
    while (row_hi + 1 < n_alpha() && at(var, row_hi + 1, ib) < at(var, row_hi, ib))
      ++row_hi;
    hi = std::min(hi, row_hi);
  }
  return alpha_grid[hi];
}

double PileupLuts::invertible_alpha_min() const {
  int lo = 0;
  for (int ib = 0; ib < n_beta(); ++ib) {
    int am = 0;
    for (int ia = 1; ia < n_alpha(); ++ia)
      if (at(var, ia, ib) > at(var, am, ib)) am = ia;
    lo = std::max(lo, am);
  }
  return alpha_grid[lo];
}

PileupLuts build_luts(const Waveform& wf, const LutBuildParams& p, int threads) {
  check_grid(p.alpha_grid, "alpha");
  check_grid(p.beta_grid, "beta");
  if (p.window < 1) throw ConfigError("pileup: window must be >= 1");

  PileupLuts L;
  L.alpha_grid = p.alpha_grid;
  L.beta_grid = p.beta_grid;
  L.window = p.window;
  L.waveform_id = std::to_string(wf.id_hash());
  const int na = L.n_alpha();
  const int nb = L.n_beta();
  L.gamma.assign(static_cast<std::size_t>(na) * nb, 0.0);
  L.mu.assign(static_cast<std::size_t>(na) * nb, 0.0);
  L.var.assign(static_cast<std::size_t>(na) * nb, 0.0);

  const double depth = p.depth_bin >= 0 ? p.depth_bin : p.bins / 2.0;

  parallel_for(na, threads, [&](std::int64_t a_lo, std::int64_t a_hi) {
    for (std::int64_t ia = a_lo; ia < a_hi; ++ia) {
      for (int ib = 0; ib < nb; ++ib) {
        const double alpha = L.alpha_grid[ia];
        const double beta = L.beta_grid[ib];
        std::vector<double> lam(p.bins, beta / p.bins);
        add_shifted_waveform(lam.data(), p.bins, wf, depth, alpha);
        std::vector<double> q = q_from_flux(lam, p.dead_time_bins);

        double gsum = 0.0;
        for (double v : q) gsum += v;

        WindowMoments mq =
            window_moments(q.data(), p.bins, argmax(q), p.window);
        WindowMoments ml =
            window_moments(lam.data(), p.bins, argmax(lam), p.window);

        const std::size_t idx = static_cast<std::size_t>(ia) * nb + ib;
        L.gamma[idx] = gsum;
        // Float dust can leave a tiny negative at the no-pileup end.
        L.mu[idx] = std::max(0.0, ml.mean - mq.mean);
        L.var[idx] = mq.var;
      }
    }
  });

  if (p.declared_alpha_max > 0.0) {
    double inv_max = L.invertible_alpha_max();
    if (inv_max < p.declared_alpha_max)
      throw CalibrationError(
          "pileup: var not strictly decreasing up to declared alpha max (invertible up to " +
          std::to_string(inv_max) + ")");
  }
  return L;
}

InvertResult invert_variance(double var_measured, double beta_hat,
                             const PileupLuts& L) {
  InvertResult res;
  GridPos pb = locate(L.beta_grid, beta_hat, /*log=*/false, &res.beta_clamped);

  auto row_var = [&](int ia) {
    return L.at(L.var, ia, pb.i) * (1 - pb.f) + L.at(L.var, ia, pb.i + 1) * pb.f;
  };

  // The invertible branch starts at the row's variance maximum and runs over
  // its strictly decreasing tail.
  int am = 0;
  for (int ia = 1; ia < L.n_alpha(); ++ia)
    if (row_var(ia) > row_var(am)) am = ia;
  int hi = am;
  while (hi + 1 < L.n_alpha() && row_var(hi + 1) < row_var(hi)) ++hi;

  if (var_measured >= row_var(am)) {
    res.alpha_hat = 0.0;
    return res;
  }
  if (var_measured <= row_var(hi)) {
    res.alpha_hat = L.alpha_grid[hi];
    res.saturated = true;
    return res;
  }

  // Binary search on the decreasing run, then interpolate in ln(alpha).
  int lo = am;
  int up = hi;
  while (up - lo > 1) {
    int mid = (lo + up) / 2;
    if (row_var(mid) > var_measured)
      lo = mid;
    else
      up = mid;
  }
  const double v0 = row_var(lo), v1 = row_var(up);
  const double f = (v0 - var_measured) / (v0 - v1);
  res.alpha_hat = std::exp(std::log(L.alpha_grid[lo]) +
                           f * (std::log(L.alpha_grid[up]) - std::log(L.alpha_grid[lo])));
  return res;
}

CorrectedEcho correct_echo(const Echo& echo, double beta_hat_per_pulse,
                           const PileupLuts& luts, const SensorConfig& cfg,
                           double threshold_per_pulse) {
  CorrectedEcho out;
  out.base = echo;
  out.mean_corrected = echo.mean_tof;
  const double detected_per_pulse = echo.counts / cfg.pulses_per_frame;

  if (echo.degenerate || detected_per_pulse <= threshold_per_pulse) {
    out.alpha_hat = detected_per_pulse;
    out.gamma_prime = detected_per_pulse;
    out.total_energy = out.alpha_hat * cfg.pulses_per_frame;
    return out;
  }

  InvertResult inv = invert_variance(echo.var_tof, beta_hat_per_pulse, luts);
  if (inv.alpha_hat <= 0.0) {
    // Measured variance sits above the no-pileup level; leave the echo alone.
    out.alpha_hat = detected_per_pulse;
    out.gamma_prime = detected_per_pulse;
    out.total_energy = out.alpha_hat * cfg.pulses_per_frame;
    return out;
  }

  out.alpha_hat = inv.alpha_hat;
  out.saturated = inv.saturated;
  out.pileup_applied = true;
  out.gamma_prime = luts.gamma_at(inv.alpha_hat, beta_hat_per_pulse);
  out.total_energy = out.alpha_hat * cfg.pulses_per_frame;

  double mean = echo.mean_tof + luts.mu_at(inv.alpha_hat, beta_hat_per_pulse);
  if (mean < 0.0 || mean >= cfg.bins) {
    mean = std::clamp(mean, 0.0, std::nextafter(static_cast<double>(cfg.bins), 0.0));
    out.mean_clamped = true;
  }
  out.mean_corrected = mean;
  return out;
}

double glare_flux_to_expected_counts(double glare_flux_per_pulse,
                                     double beta_hat_per_pulse,
                                     const PileupLuts& luts, int pulses,
                                     double threshold_per_pulse) {
  if (glare_flux_per_pulse < 0)
    throw ModelError("pileup: glare flux must be >= 0");
  if (glare_flux_per_pulse <= threshold_per_pulse)
    return pulses * glare_flux_per_pulse;
  return pulses * luts.gamma_at(glare_flux_per_pulse, beta_hat_per_pulse);
}

}  // namespace spad::pileup
