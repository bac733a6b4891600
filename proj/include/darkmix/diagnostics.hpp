#pragma once

#include <utility>
#include <vector>

#include "darkmix/em.hpp"
#include "darkmix/panel.hpp"

namespace darkmix {

/// Block-averaged raw covariance: the E*r x E*r sample covariance collapsed
/// to E x E by averaging each r x r block; diagonal blocks exclude the
/// variance (main diagonal) entries.
struct BlockCovariance {
  Matrix values;           // E x E
  Eigen::MatrixXi counts;  // elements averaged per cell
};

/// Multiplicative-structure check: fit log c_ef = lambda + phi_e + phi_f by
/// least squares over the strictly positive cells.
struct HmTestReport {
  double lambda = 0.0;
  Vector phi;                       // E effects, sum constrained to zero
  double residual_variance = 0.0;   // mean squared residual, original scale
  double mean_positive_cell = 0.0;
  double residual_to_mean_ratio = 0.0;
  int excluded_cells = 0;           // non-positive cells left out of the fit
  bool multiplicative_structure = false;
  bool weighted = false;  // cells enter unweighted regardless of element count
};

struct QqReport {
  std::vector<std::pair<double, double>> pairs;  // (theoretical, empirical)
  double slope = 0.0;  // least-squares slope of empirical on theoretical
  double mean = 0.0;
  double sd = 0.0;
};

struct ClassifyResult {
  std::vector<int> labels;       // 1-based component labels (argmax)
  Vector max_posterior;
  std::vector<long> hot_pixels;  // label > 1 under the grand-mean ordering
};

struct XregResult {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_sd = 0.0;
  long n_kept = 0;
};

/// Keep pixels whose grand mean is <= threshold.
std::vector<bool> trim_by_mean(const PanelStats& stats, double threshold);
std::vector<bool> trim_by_mean(const Panel& panel,
                               const ExperimentDesign& design,
                               double threshold);

/// Requires r >= 2 (diagonal blocks need off-diagonal elements) and n >= 2.
/// An optional mask restricts the pixels entering the covariance.
BlockCovariance block_avg_cov(const Panel& panel,
                              const ExperimentDesign& design,
                              const std::vector<bool>* mask = nullptr);

HmTestReport hm_test(const BlockCovariance& block_cov);

/// Normal quantile-quantile pairs at plotting positions (i - 0.5)/n, with
/// the empirical side standardized by sample mean and SD. Needs >= 10
/// non-constant values.
QqReport qq_data(const std::vector<double>& values);

/// argmax posterior per pixel, ties toward the lower index.
ClassifyResult classify(const FitResult& fit_result);

/// OLS of avg_b on avg_a over the subset with avg_a <= threshold.
XregResult cross_condition_regression(const Vector& avg_a, const Vector& avg_b,
                                      double threshold);

}  // namespace darkmix
