// Depth-map evaluation: RMSE and ratio-threshold accuracy against ground
// truth over a validity mask.
#pragma once

#include "spad/types.hpp"

#include <map>

namespace spad::metrics {

enum class MissingPolicy {
  exclude,   // mask out pixels missing in either map
  penalize,  // missing predictions scored at penalty_depth_m
};

struct EvalParams {
  MissingPolicy policy = MissingPolicy::exclude;
  double penalty_depth_m = 0.0;
  std::vector<int> delta_thresholds = {1, 2, 3};
};

struct EvalReport {
  double rmse_m = 0.0;
  std::map<int, double> delta;  // threshold percent -> fraction
  long n_valid = 0;
  long n_ghost_before = -1;  // -1 when not evaluated
  long n_ghost_after = -1;

  std::string to_kv() const;
  std::string to_csv_row(bool with_header) const;
};

// Validity mask under the policy; with `penalize`, missing predictions are
// treated as penalty_depth_m instead of dropped.
Grid2<std::uint8_t> valid_mask(const Grid2<float>& truth, const Grid2<float>& pred);

double rmse(const Grid2<float>& truth, const Grid2<float>& pred,
            const Grid2<std::uint8_t>& mask);

// Fraction of masked pixels with max(d/d_hat, d_hat/d) < 1 + percent/100.
double delta_i(const Grid2<float>& truth, const Grid2<float>& pred, int percent,
               const Grid2<std::uint8_t>& mask);

EvalReport evaluate(const Grid2<float>& truth, const Grid2<float>& pred,
                    const EvalParams& params = {});

// Pixels where pred sits within tol of ghost_depth while truth does not.
long count_ghosts(const Grid2<float>& truth, const Grid2<float>& pred,
                  double ghost_depth_m, double tol_m);

}  // namespace spad::metrics
