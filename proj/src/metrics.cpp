#include "spad/metrics.hpp"

#include <cmath>
#include <sstream>

namespace spad::metrics {

Grid2<std::uint8_t> valid_mask(const Grid2<float>& truth, const Grid2<float>& pred) {
  if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
    throw InputError("metrics: maps are not aligned");
  Grid2<std::uint8_t> mask(truth.rows(), truth.cols(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = std::isfinite(truth[i]) && std::isfinite(pred[i]) ? 1 : 0;
  return mask;
}

double rmse(const Grid2<float>& truth, const Grid2<float>& pred,
            const Grid2<std::uint8_t>& mask) {
  double acc = 0.0;
  long n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const double d = static_cast<double>(truth[i]) - pred[i];
    acc += d * d;
    ++n;
  }
  if (n == 0) throw UndefinedMetricError("metrics: empty mask");
  return std::sqrt(acc / n);
}

double delta_i(const Grid2<float>& truth, const Grid2<float>& pred, int percent,
               const Grid2<std::uint8_t>& mask) {
  const double limit = 1.0 + percent / 100.0;
  long n = 0, pass = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const double d = truth[i];
    const double dh = pred[i];
    if (!(d > 0.0) || !(dh > 0.0))
      throw InputError("metrics: nonpositive depth inside the mask");
    const double ratio = std::max(d / dh, dh / d);
    if (ratio < limit) ++pass;
    ++n;
  }
  if (n == 0) throw UndefinedMetricError("metrics: empty mask");
  return static_cast<double>(pass) / n;
}

EvalReport evaluate(const Grid2<float>& truth, const Grid2<float>& pred,
                    const EvalParams& params) {
  Grid2<float> p = pred;
  if (params.policy == MissingPolicy::penalize) {
    for (std::size_t i = 0; i < p.size(); ++i)
      if (!std::isfinite(p[i]) && std::isfinite(truth[i]))
        p[i] = static_cast<float>(params.penalty_depth_m);
  }
  const auto mask = valid_mask(truth, p);
  EvalReport rep;
  rep.rmse_m = rmse(truth, p, mask);
  for (int t : params.delta_thresholds) rep.delta[t] = delta_i(truth, p, t, mask);
  for (std::size_t i = 0; i < mask.size(); ++i) rep.n_valid += mask[i];
  return rep;
}

long count_ghosts(const Grid2<float>& truth, const Grid2<float>& pred,
                  double ghost_depth_m, double tol_m) {
  long n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!std::isfinite(pred[i])) continue;
    const bool pred_at_ghost = std::abs(pred[i] - ghost_depth_m) <= tol_m;
    const bool truth_at_ghost =
        std::isfinite(truth[i]) && std::abs(truth[i] - ghost_depth_m) <= tol_m;
    if (pred_at_ghost && !truth_at_ghost) ++n;
  }
  return n;
}

std::string EvalReport::to_kv() const {
  std::ostringstream os;
  os.precision(17);
  os << "rmse_m = " << rmse_m << "\n";
  for (const auto& [t, v] : delta) os << "delta_" << t << " = " << v << "\n";
  os << "n_valid = " << n_valid << "\n";
  if (n_ghost_before >= 0) os << "n_ghost_before = " << n_ghost_before << "\n";
  if (n_ghost_after >= 0) os << "n_ghost_after = " << n_ghost_after << "\n";
  return os.str();
}

std::string EvalReport::to_csv_row(bool with_header) const {
  std::ostringstream os;
  os.precision(17);
  if (with_header) {
    os << "rmse_m";
    for (const auto& [t, v] : delta) os << ",delta_" << t;
    os << ",n_valid,n_ghost_before,n_ghost_after\n";
  }
  os << rmse_m;
  for (const auto& [t, v] : delta) os << "," << v;
  os << "," << n_valid << "," << n_ghost_before << "," << n_ghost_after << "\n";
  return os.str();
}

}  // namespace spad::metrics
