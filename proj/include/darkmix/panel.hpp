#pragma once

#include <Eigen/Dense>
#include <vector>

#include "darkmix/model.hpp"

namespace darkmix {

/// n x (E*r) measurement matrix, one pixel per row, columns condition-major
/// with the replicate index varying fastest. Row-major storage so a pixel's
/// measurements are contiguous.
using PanelMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Panel {
  PanelMatrix data;

  long n_pixels() const { return data.rows(); }
  long width() const { return data.cols(); }
};

void check_panel_design(const Panel& panel, const ExperimentDesign& design);

/// Per-pixel, per-condition sufficient statistics. For every component the
/// structured likelihood, its score and the information matrix depend on a
/// pixel's data only through the replicate mean m and the centered
/// within-condition sum of squares css, so the EM engine runs on these
/// n x E arrays instead of the raw panel. Centering also avoids the
/// cancellation that plagues raw sum-of-squares identities when residuals
/// are tiny relative to the signal level (~263 counts).
struct PanelStats {
  PanelMatrix replicate_mean;  // n x E
  PanelMatrix centered_ss;     // n x E
  Vector grand_mean;           // n, mean over all E*r cells
  int replicates = 0;

  long n_pixels() const { return replicate_mean.rows(); }
  int n_conditions() const { return static_cast<int>(replicate_mean.cols()); }
};

PanelStats build_panel_stats(const Panel& panel, const ExperimentDesign& design,
                             int threads = 0);

/// Row-gather for bootstrap resamples: stats of panel[rows, :].
PanelStats resample_stats(const PanelStats& stats,
                          const std::vector<long>& rows);

}  // namespace darkmix
