#include "darkmix/diagnostics.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <string>

#include "darkmix/error.hpp"

namespace darkmix {

std::vector<bool> trim_by_mean(const PanelStats& stats, double threshold) {
  require(std::isfinite(threshold), ErrorCode::invalid_argument,
          "threshold must be finite");
  const long n = stats.n_pixels();
  std::vector<bool> mask(static_cast<std::size_t>(n), false);
  long kept = 0;
  for (long i = 0; i < n; ++i) {
    if (stats.grand_mean[i] <= threshold) {
      mask[static_cast<std::size_t>(i)] = true;
      ++kept;
    }
  }
  require(kept > 0, ErrorCode::empty_selection,
          "no pixel has grand mean <= " + std::to_string(threshold));
  return mask;
}

std::vector<bool> trim_by_mean(const Panel& panel,
                               const ExperimentDesign& design,
                               double threshold) {
  return trim_by_mean(build_panel_stats(panel, design), threshold);
}

BlockCovariance block_avg_cov(const Panel& panel,
                              const ExperimentDesign& design,
                              const std::vector<bool>* mask) {
  check_panel_design(panel, design);
  const int r = design.replicates();
  const int e_count = design.n_conditions();
  require(r >= 2, ErrorCode::insufficient_data,
          "block-averaged covariance needs r >= 2: with a single replicate "
          "the diagonal blocks have no off-diagonal elements to average");

  std::vector<long> rows;
  if (mask) {
    require(static_cast<long>(mask->size()) == panel.n_pixels(),
            ErrorCode::dimension_mismatch, "mask length != pixel count");
    for (long i = 0; i < panel.n_pixels(); ++i) {
      if ((*mask)[static_cast<std::size_t>(i)]) rows.push_back(i);
    }
  } else {
    rows.resize(static_cast<std::size_t>(panel.n_pixels()));
    for (long i = 0; i < panel.n_pixels(); ++i) {
      rows[static_cast<std::size_t>(i)] = i;
    }
  }
  const long n = static_cast<long>(rows.size());
  require(n >= 2, ErrorCode::insufficient_data,
          "covariance needs at least two pixels");

  const int width = design.width();
  Matrix centered(n, width);
  for (long i = 0; i < n; ++i) centered.row(i) = panel.data.row(rows[i]);
  const Eigen::RowVectorXd col_means = centered.colwise().mean();
  centered.rowwise() -= col_means;
  const Matrix cov = centered.transpose() * centered / double(n - 1);

  BlockCovariance out;
  out.values = Matrix::Zero(e_count, e_count);
  out.counts = Eigen::MatrixXi::Zero(e_count, e_count);
  for (int e = 0; e < e_count; ++e) {
    for (int f = 0; f < e_count; ++f) {
      double sum = 0.0;
      int count = 0;
      for (int j = 0; j < r; ++j) {
        for (int jp = 0; jp < r; ++jp) {
          if (e == f && j == jp) continue;  // skip variance entries
          sum += cov(e * r + j, f * r + jp);
          ++count;
        }
      }
      out.values(e, f) = sum / count;
      out.counts(e, f) = count;
    }
  }
  return out;
}

HmTestReport hm_test(const BlockCovariance& block_cov) {
  const int e_count = static_cast<int>(block_cov.values.rows());
  require(e_count >= 2, ErrorCode::insufficient_data,
          "need at least two conditions");

  struct Cell {
    int e, f;
    double log_value;
  };
  std::vector<Cell> cells;
  int excluded = 0;
  double positive_sum = 0.0;
  for (int e = 0; e < e_count; ++e) {
    for (int f = 0; f < e_count; ++f) {
      const double v = block_cov.values(e, f);
      if (v > 0.0) {
        cells.push_back({e, f, std::log(v)});
        positive_sum += v;
      } else {
        ++excluded;
      }
    }
  }
  require(static_cast<int>(cells.size()) >= e_count + 1,
          ErrorCode::insufficient_data,
          "too few positive cells (" + std::to_string(cells.size()) +
              ") to fit " + std::to_string(e_count) + " symmetric effects");

  // Effects are identified up to a constant; parameterize phi = Q psi with
  // Q spanning the sum-zero subspace, then solve unweighted least squares.
  Matrix q_basis = Matrix::Zero(e_count, e_count - 1);
  for (int j = 0; j < e_count - 1; ++j) {
    q_basis(j, j) = 1.0;
    q_basis(e_count - 1, j) = -1.0;
  }
  const long m = static_cast<long>(cells.size());
  Matrix design(m, e_count);  // [1 | effect incidence * Q]
  Vector target(m);
  for (long idx = 0; idx < m; ++idx) {
    const auto& cell = cells[static_cast<std::size_t>(idx)];
    design(idx, 0) = 1.0;
    Eigen::RowVectorXd incidence = Eigen::RowVectorXd::Zero(e_count);
    incidence[cell.e] += 1.0;
    incidence[cell.f] += 1.0;
    design.row(idx).tail(e_count - 1) = incidence * q_basis;
    target[idx] = cell.log_value;
  }
  const Vector coeffs = design.colPivHouseholderQr().solve(target);

  HmTestReport report;
  report.lambda = coeffs[0];
  report.phi = q_basis * coeffs.tail(e_count - 1);
  report.excluded_cells = excluded;
  report.mean_positive_cell = positive_sum / static_cast<double>(m);

  double rss = 0.0;
  for (long idx = 0; idx < m; ++idx) {
    const auto& cell = cells[static_cast<std::size_t>(idx)];
    const double fitted =
        std::exp(report.lambda + report.phi[cell.e] + report.phi[cell.f]);
    const double resid = std::exp(cell.log_value) - fitted;
    rss += resid * resid;
  }
  report.residual_variance = rss / static_cast<double>(m);
  report.residual_to_mean_ratio =
      report.residual_variance / report.mean_positive_cell;
  report.multiplicative_structure =
      excluded <= (e_count * e_count) / 10 &&
      report.residual_to_mean_ratio < 0.15;
  return report;
}

QqReport qq_data(const std::vector<double>& values) {
  const long n = static_cast<long>(values.size());
  require(n >= 10, ErrorCode::insufficient_data,
          "need at least 10 values, got " + std::to_string(n));

  QqReport report;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  require(sd > 0.0, ErrorCode::invalid_argument,
          "values are constant; quantiles are undefined");
  report.mean = mean;
  report.sd = sd;

  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const boost::math::normal standard_normal;
  report.pairs.reserve(static_cast<std::size_t>(n));
  double sxy = 0.0, sxx = 0.0, sx = 0.0, sy = 0.0;
  for (long i = 0; i < n; ++i) {
    const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double theo = boost::math::quantile(standard_normal, p);
    const double emp = (sorted[static_cast<std::size_t>(i)] - mean) / sd;
    report.pairs.emplace_back(theo, emp);
    sx += theo;
    sy += emp;
    sxy += theo * emp;
    sxx += theo * theo;
  }
  const double dn = static_cast<double>(n);
  report.slope = (sxy - sx * sy / dn) / (sxx - sx * sx / dn);
  return report;
}

ClassifyResult classify(const FitResult& fit_result) {
  const Responsibilities& resp = fit_result.responsibilities;
  const long n = resp.n_pixels();
  const int k_count = resp.n_components();
  ClassifyResult out;
  out.labels.resize(static_cast<std::size_t>(n));
  out.max_posterior.resize(n);
  for (long i = 0; i < n; ++i) {
    int best = 0;
    double best_p = resp.e(i, 0);
    for (int k = 1; k < k_count; ++k) {
      if (resp.e(i, k) > best_p) {  // strict: ties break toward lower index
        best_p = resp.e(i, k);
        best = k;
      }
    }
    out.labels[static_cast<std::size_t>(i)] = best + 1;
    out.max_posterior[i] = best_p;
    if (best > 0) out.hot_pixels.push_back(i);
  }
  return out;
}

XregResult cross_condition_regression(const Vector& avg_a, const Vector& avg_b,
                                      double threshold) {
  require(avg_a.size() == avg_b.size(), ErrorCode::dimension_mismatch,
          "average vectors must have equal length");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  long kept = 0;
  for (long i = 0; i < avg_a.size(); ++i) {
    if (avg_a[i] > threshold) continue;
    ++kept;
    sx += avg_a[i];
    sy += avg_b[i];
    sxx += avg_a[i] * avg_a[i];
    sxy += avg_a[i] * avg_b[i];
  }
  require(kept >= 3, ErrorCode::insufficient_data,
          "fewer than 3 pixels below the threshold");
  const double dn = static_cast<double>(kept);
  const double var_x = sxx - sx * sx / dn;
  require(var_x > 0.0, ErrorCode::invalid_argument,
          "regressor is constant on the kept subset");

  XregResult out;
  out.n_kept = kept;
  out.slope = (sxy - sx * sy / dn) / var_x;
  out.intercept = (sy - out.slope * sx) / dn;

  double rss = 0.0;
  for (long i = 0; i < avg_a.size(); ++i) {
    if (avg_a[i] > threshold) continue;
    const double resid = avg_b[i] - out.intercept - out.slope * avg_a[i];
    rss += resid * resid;
  }
  out.residual_sd = std::sqrt(rss / std::max(dn - 2.0, 1.0));
  return out;
}

}  // namespace darkmix
