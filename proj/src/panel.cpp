#include "darkmix/panel.hpp"

#include <string>

#include "darkmix/error.hpp"
#include "darkmix/parallel.hpp"

namespace darkmix {

void check_panel_design(const Panel& panel, const ExperimentDesign& design) {
  require(panel.width() == design.width(), ErrorCode::dimension_mismatch,
          "panel has " + std::to_string(panel.width()) +
              " columns but the design implies " +
              std::to_string(design.width()));
}

PanelStats build_panel_stats(const Panel& panel,
                             const ExperimentDesign& design, int threads) {
  check_panel_design(panel, design);
  const long n = panel.n_pixels();
  const int e_count = design.n_conditions();
  const int r = design.replicates();

  PanelStats stats;
  stats.replicate_mean.resize(n, e_count);
  stats.centered_ss.resize(n, e_count);
  stats.grand_mean.resize(n);
  stats.replicates = r;

  parallel_chunks(static_cast<std::size_t>(n), threads,
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    for (std::size_t i = begin; i < end; ++i) {
                      const auto row = panel.data.row(static_cast<long>(i));
                      if (!row.allFinite()) {
                        fail(ErrorCode::non_finite_input,
                             "pixel " + std::to_string(i + 1) +
                                 " contains non-finite measurements");
                      }
                      double total = 0.0;
                      for (int e = 0; e < e_count; ++e) {
                        double sum = 0.0;
                        for (int j = 0; j < r; ++j) sum += row[e * r + j];
                        const double mean = sum / r;
                        double css = 0.0;
                        for (int j = 0; j < r; ++j) {
                          const double d = row[e * r + j] - mean;
                          css += d * d;
                        }
                        stats.replicate_mean(i, e) = mean;
                        stats.centered_ss(i, e) = css;
                        total += sum;
                      }
                      stats.grand_mean[i] = total / (e_count * r);
                    }
                  });
  return stats;
}

PanelStats resample_stats(const PanelStats& stats,
                          const std::vector<long>& rows) {
  PanelStats out;
  const long n = static_cast<long>(rows.size());
  out.replicate_mean.resize(n, stats.n_conditions());
  out.centered_ss.resize(n, stats.n_conditions());
  out.grand_mean.resize(n);
  out.replicates = stats.replicates;
  for (long i = 0; i < n; ++i) {
    const long src = rows[static_cast<std::size_t>(i)];
    out.replicate_mean.row(i) = stats.replicate_mean.row(src);
    out.centered_ss.row(i) = stats.centered_ss.row(src);
    out.grand_mean[i] = stats.grand_mean[src];
  }
  return out;
}

}  // namespace darkmix
