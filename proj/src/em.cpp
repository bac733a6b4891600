#include "darkmix/em.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <string>

#include "darkmix/error.hpp"
#include "darkmix/parallel.hpp"
#include "darkmix/rng.hpp"

namespace darkmix {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kTauFloor = 1e-3;

/// Per-component quantities reused across every pixel. The structured
/// likelihood depends on a pixel only through its per-condition replicate
/// means and centered sums of squares, so everything here is O(E) per pixel.
struct CompKernel {
  Vector mu;
  Vector inv_s2;      // 1/sigma_e^2
  Vector tos2;        // tau_e/sigma_e^2
  Vector tau;
  Vector sigma2;
  double cap = 1.0;   // 1 + r sum tau^2/sigma^2
  double log_det = 0.0;
  double norm_const = 0.0;  // E r log(2 pi)
  int r = 1;
  int e_count = 0;

  static CompKernel make(const ComponentParameters& comp,
                         const ExperimentDesign& design) {
    CompKernel ker;
    const StructuredCov cov = component_cov(comp, design);
    ker.mu = mean_vector(comp, design);
    ker.inv_s2 = cov.inv_sigma2();
    ker.tos2 = cov.tau_over_sigma2();
    ker.tau = cov.tau();
    ker.sigma2 = cov.sigma().array().square().matrix();
    ker.cap = cov.capacitance();
    ker.log_det = cov.log_det();
    ker.r = design.replicates();
    ker.e_count = design.n_conditions();
    ker.norm_const = static_cast<double>(ker.e_count) * ker.r * kLog2Pi;
    return ker;
  }

  double loglik(const double* m, const double* css) const {
    double u_dinv_r = 0.0;
    double diag_quad = 0.0;
    for (int e = 0; e < e_count; ++e) {
      const double delta = m[e] - mu[e];
      u_dinv_r += tos2[e] * (r * delta);
      diag_quad += (css[e] + r * delta * delta) * inv_s2[e];
    }
    const double quad = diag_quad - u_dinv_r * u_dinv_r / cap;
    return -0.5 * (log_det + quad + norm_const);
  }
};

int mean_param_count(const ComponentParameters& comp) {
  return comp.mean_param_count();
}

/// Jacobian of the mean vector with respect to the mean parameters
/// (E x P_mean); identity for NPM, chain rule for LEI.
Matrix mean_jacobian(const ComponentParameters& comp,
                     const ExperimentDesign& design) {
  const int e_count = design.n_conditions();
  if (comp.is_npm()) return Matrix::Identity(e_count, e_count);
  const auto& lei = std::get<LeiMeans>(comp.mean);
  const int d_groups = lei.n_groups();
  Matrix jac = Matrix::Zero(e_count, lei.n_params());
  const double rate = std::exp(lei.log_rate);
  for (int e = 0; e < e_count; ++e) {
    const auto& c = design.conditions()[e];
    const int g = lei.condition_group[e];
    const double expo = std::exp(lei.deltas[g] + lei.beta_temp * c.temp_c);
    jac(e, 0) = 1.0;
    jac(e, 1) = rate * c.duration_s;
    jac(e, 2 + g) = expo;
    jac(e, 2 + d_groups) = expo * c.temp_c;
  }
  return jac;
}

/// Everything the per-pixel score kernel needs beyond CompKernel.
struct ScoreKernel {
  CompKernel base;
  Matrix z_std;        // E x 3
  Matrix mean_jac;     // E x P_mean
  Vector trace_diag;   // tr(Sigma^{-1} dSigma/dalpha_q), q = 0..2
  Vector trace_tau;    // tr(Sigma^{-1} dSigma/dgamma_q)
  int p_mean = 0;
  int p_total = 0;

  static ScoreKernel make(const ComponentParameters& comp,
                          const ExperimentDesign& design) {
    ScoreKernel ker;
    ker.base = CompKernel::make(comp, design);
    ker.z_std = design.covariate_rows_std();
    ker.mean_jac = mean_jacobian(comp, design);
    ker.p_mean = mean_param_count(comp);
    ker.p_total = ker.p_mean + 6;
    const StructuredCov cov = component_cov(comp, design);
    ker.trace_diag.resize(3);
    ker.trace_tau.resize(3);
    for (int q = 0; q < 3; ++q) {
      ker.trace_diag[q] = cov.directional_trace(
          StructuredCov::DerivFamily::diag_sigma, ker.z_std.col(q));
      ker.trace_tau[q] = cov.directional_trace(
          StructuredCov::DerivFamily::tau_outer, ker.z_std.col(q));
    }
    return ker;
  }

  /// Per-pixel score contribution s_i and log-likelihood l_i.
  double score(const double* m, const double* css, Vector& s,
               Vector& cond_sum, Vector& cond_sq) const {
    const auto& k = base;
    double u_dinv_r = 0.0;
    double diag_quad = 0.0;
    for (int e = 0; e < k.e_count; ++e) {
      const double delta = m[e] - k.mu[e];
      u_dinv_r += k.tos2[e] * (k.r * delta);
      diag_quad += (css[e] + k.r * delta * delta) * k.inv_s2[e];
    }
    const double quad = diag_quad - u_dinv_r * u_dinv_r / k.cap;
    const double loglik = -0.5 * (k.log_det + quad + k.norm_const);

    // cond_sum[e] = sum_j (Sigma^{-1} resid)_(e,j);
    // cond_sq[e]  = sum_j (Sigma^{-1} resid)_(e,j)^2.
    const double shrink = u_dinv_r / k.cap;
    for (int e = 0; e < k.e_count; ++e) {
      const double delta = m[e] - k.mu[e];
      const double off = k.tos2[e] * shrink;
      cond_sum[e] = k.r * (delta * k.inv_s2[e] - off);
      cond_sq[e] = k.inv_s2[e] * k.inv_s2[e] * (css[e] + k.r * delta * delta) -
                   2.0 * k.inv_s2[e] * off * k.r * delta + k.r * off * off;
    }

    // Mean block: J' (per-condition solve sums).
    s.head(p_mean).noalias() = mean_jac.transpose() * cond_sum;

    // Variance blocks: dl/deta = -1/2 [trace - resid' S^-1 dS S^-1 resid].
    double u_s = 0.0;  // u' Sigma^{-1} resid aggregated by condition
    for (int e = 0; e < k.e_count; ++e) u_s += k.tau[e] * cond_sum[e];
    for (int q = 0; q < 3; ++q) {
      double sq_term = 0.0;  // sum_e sigma_e^2 z_eq cond_sq[e]
      double a_s = 0.0;      // (tau .* z_q)' cond_sum
      for (int e = 0; e < k.e_count; ++e) {
        sq_term += k.sigma2[e] * z_std(e, q) * cond_sq[e];
        a_s += k.tau[e] * z_std(e, q) * cond_sum[e];
      }
      s[p_mean + q] = -0.5 * trace_diag[q] + sq_term;
      s[p_mean + 3 + q] = -0.5 * trace_tau[q] + a_s * u_s;
    }
    return loglik;
  }
};

void check_resp_column(const Vector& resp_column, long n) {
  require(resp_column.size() == n, ErrorCode::dimension_mismatch,
          "responsibility column length does not match pixel count");
  for (long i = 0; i < resp_column.size(); ++i) {
    require(resp_column[i] >= 0.0 && resp_column[i] <= 1.0,
            ErrorCode::invalid_argument,
            "responsibilities must lie in [0, 1]");
  }
}

/// L_k = sum_i w_i l_ki only (no gradient); used by step halving.
double weighted_loglik_only(const ComponentParameters& comp,
                            const PanelStats& stats,
                            const ExperimentDesign& design,
                            const Vector& resp_column, int threads) {
  const CompKernel kernel = CompKernel::make(comp, design);
  const long n = stats.n_pixels();
  const std::size_t n_chunks = chunk_count(static_cast<std::size_t>(n));
  std::vector<long double> partial(n_chunks, 0.0L);
  parallel_chunks(static_cast<std::size_t>(n), threads,
                  [&](std::size_t c, std::size_t begin, std::size_t end) {
                    long double acc = 0.0L;
                    for (std::size_t i = begin; i < end; ++i) {
                      const double w = resp_column[static_cast<long>(i)];
                      if (w == 0.0) continue;
                      acc += static_cast<long double>(w) *
                             kernel.loglik(&stats.replicate_mean(i, 0),
                                           &stats.centered_ss(i, 0));
                    }
                    partial[c] = acc;
                  });
  long double total = 0.0L;
  for (std::size_t c = 0; c < n_chunks; ++c) total += partial[c];
  return static_cast<double>(total);
}

}  // namespace

double component_loglik(const Vector& y_row, const Vector& mean_vec,
                        const StructuredCov& cov) {
  require(y_row.size() == cov.dim(), ErrorCode::dimension_mismatch,
          "pixel row length does not match covariance dimension");
  require(mean_vec.size() == cov.n_conditions(), ErrorCode::dimension_mismatch,
          "mean vector length does not match condition count");
  require(y_row.allFinite() && mean_vec.allFinite(),
          ErrorCode::non_finite_input,
          "component_loglik requires finite inputs");
  const int r = cov.replicates();
  Vector resid(y_row.size());
  for (int e = 0; e < cov.n_conditions(); ++e) {
    for (int j = 0; j < r; ++j) {
      resid[e * r + j] = y_row[e * r + j] - mean_vec[e];
    }
  }
  const double quad = cov.quad_form(resid);
  return -0.5 * (cov.log_det() + quad + cov.dim() * kLog2Pi);
}

Responsibilities e_step(const PanelStats& stats, const MixtureModel& model,
                        int threads) {
  require(stats.n_conditions() == model.design.n_conditions() &&
              stats.replicates == model.design.replicates(),
          ErrorCode::dimension_mismatch,
          "panel statistics do not match the model design");
  const long n = stats.n_pixels();
  const int k_count = model.n_components();

  std::vector<CompKernel> kernels;
  kernels.reserve(k_count);
  for (const auto& comp : model.components) {
    kernels.push_back(CompKernel::make(comp, model.design));
  }
  const Vector pi = model.mixing_proportions();
  const Vector log_pi = pi.array().log().matrix();

  Responsibilities resp;
  resp.e.resize(n, k_count);

  const std::size_t n_chunks = chunk_count(static_cast<std::size_t>(n));
  std::vector<long double> partial(n_chunks, 0.0L);

  parallel_chunks(
      static_cast<std::size_t>(n), threads,
      [&](std::size_t c, std::size_t begin, std::size_t end) {
        std::vector<double> v(k_count);
        long double acc = 0.0L;
        for (std::size_t i = begin; i < end; ++i) {
          const double* m = &stats.replicate_mean(i, 0);
          const double* css = &stats.centered_ss(i, 0);
          double vmax = -std::numeric_limits<double>::infinity();
          for (int k = 0; k < k_count; ++k) {
            v[k] = log_pi[k] + kernels[k].loglik(m, css);
            vmax = std::max(vmax, v[k]);
          }
          if (!std::isfinite(vmax)) {
            fail(ErrorCode::degenerate_posterior,
                 "pixel " + std::to_string(i + 1) +
                     " has zero likelihood under every component");
          }
          double sum = 0.0;
          for (int k = 0; k < k_count; ++k) sum += std::exp(v[k] - vmax);
          const double lse = vmax + std::log(sum);
          for (int k = 0; k < k_count; ++k) {
            resp.e(static_cast<long>(i), k) = std::exp(v[k] - lse);
          }
          acc += lse;
        }
        partial[c] = acc;
      });

  long double total = 0.0L;
  for (std::size_t c = 0; c < n_chunks; ++c) total += partial[c];
  resp.manifest_loglik = static_cast<double>(total);
  return resp;
}

Responsibilities e_step(const Panel& panel, const MixtureModel& model,
                        int threads) {
  return e_step(build_panel_stats(panel, model.design, threads), model,
                threads);
}

MixtureWeights m_step_weights(const Responsibilities& resp) {
  const long n = resp.n_pixels();
  require(n >= 1, ErrorCode::invalid_argument, "empty responsibilities");
  const int k_count = resp.n_components();
  Vector pi(k_count);
  for (int k = 0; k < k_count; ++k) {
    const double col_sum = resp.e.col(k).sum();
    if (col_sum == 0.0) {
      fail(ErrorCode::component_death,
           "component " + std::to_string(k + 1) +
               " received zero posterior mass");
    }
    pi[k] = col_sum / static_cast<double>(n);
  }
  if (k_count == 1) return MixtureWeights{Vector(0)};
  return MixtureWeights{logits_from_weights(pi)};
}

Vector pack_component(const ComponentParameters& component,
                      const ExperimentDesign& design) {
  const int p_mean = mean_param_count(component);
  Vector packed(p_mean + 6);
  if (component.is_npm()) {
    packed.head(p_mean) = std::get<NpmMeans>(component.mean).values;
  } else {
    const auto& lei = std::get<LeiMeans>(component.mean);
    packed[0] = lei.beta1;
    packed[1] = lei.log_rate;
    packed.segment(2, lei.n_groups()) = lei.deltas;
    packed[2 + lei.n_groups()] = lei.beta_temp;
  }
  packed.segment(p_mean, 3) = to_standardized_coeffs(component.alpha, design);
  packed.segment(p_mean + 3, 3) =
      to_standardized_coeffs(component.gamma, design);
  return packed;
}

ComponentParameters unpack_component(const Vector& packed,
                                     const ComponentParameters& prototype,
                                     const ExperimentDesign& design) {
  const int p_mean = mean_param_count(prototype);
  require(packed.size() == p_mean + 6, ErrorCode::dimension_mismatch,
          "packed parameter vector has wrong length");
  ComponentParameters out = prototype;
  if (prototype.is_npm()) {
    std::get<NpmMeans>(out.mean).values = packed.head(p_mean);
  } else {
    auto& lei = std::get<LeiMeans>(out.mean);
    lei.beta1 = packed[0];
    lei.log_rate = packed[1];
    lei.deltas = packed.segment(2, lei.n_groups());
    lei.beta_temp = packed[2 + lei.n_groups()];
  }
  out.alpha = to_raw_coeffs(packed.segment(p_mean, 3), design);
  out.gamma = to_raw_coeffs(packed.segment(p_mean + 3, 3), design);
  return out;
}

ScoreResult weighted_score(const ComponentParameters& component,
                           const PanelStats& stats,
                           const ExperimentDesign& design,
                           const Vector& resp_column, int threads,
                           bool with_information) {
  require(stats.n_conditions() == design.n_conditions() &&
              stats.replicates == design.replicates(),
          ErrorCode::dimension_mismatch,
          "panel statistics do not match the design");
  const long n = stats.n_pixels();
  check_resp_column(resp_column, n);

  const ScoreKernel kernel = ScoreKernel::make(component, design);
  const int p = kernel.p_total;
  const std::size_t n_chunks = chunk_count(static_cast<std::size_t>(n));

  std::vector<Vector> g_part(n_chunks);
  std::vector<Matrix> f_part(with_information ? n_chunks : 0);
  std::vector<long double> l_part(n_chunks, 0.0L);
  std::vector<double> w_part(n_chunks, 0.0);

  parallel_chunks(
      static_cast<std::size_t>(n), threads,
      [&](std::size_t c, std::size_t begin, std::size_t end) {
        Vector g = Vector::Zero(p);
        Matrix f;
        if (with_information) f = Matrix::Zero(p, p);
        Vector s(p), cond_sum(kernel.base.e_count), cond_sq(kernel.base.e_count);
        long double l_acc = 0.0L;
        double w_acc = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
          const double w = resp_column[static_cast<long>(i)];
          if (w == 0.0) continue;
          const double li = kernel.score(&stats.replicate_mean(i, 0),
                                         &stats.centered_ss(i, 0), s, cond_sum,
                                         cond_sq);
          l_acc += static_cast<long double>(w) * li;
          w_acc += w;
          g.noalias() += w * s;
          if (with_information) {
            f.selfadjointView<Eigen::Lower>().rankUpdate(s, w);
          }
        }
        g_part[c] = std::move(g);
        if (with_information) f_part[c] = std::move(f);
        l_part[c] = l_acc;
        w_part[c] = w_acc;
      });

  ScoreResult result;
  result.gradient = Vector::Zero(p);
  if (with_information) result.information = Matrix::Zero(p, p);
  long double l_total = 0.0L;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    result.gradient += g_part[c];
    if (with_information) result.information += f_part[c];
    l_total += l_part[c];
    result.weight_sum += w_part[c];
  }
  if (with_information) {
    result.information =
        result.information.selfadjointView<Eigen::Lower>();
  }
  result.weighted_loglik = static_cast<double>(l_total);
  return result;
}

ComponentParameters scoring_update(const ComponentParameters& component,
                                   const PanelStats& stats,
                                   const ExperimentDesign& design,
                                   const Vector& resp_column,
                                   const FitConfig& config) {
  ComponentParameters current = component;
  Vector x = pack_component(current, design);
  double current_l = std::numeric_limits<double>::quiet_NaN();

  for (int iter = 0; iter < config.scoring_max_iters; ++iter) {
    const ScoreResult sr =
        weighted_score(current, stats, design, resp_column, config.threads,
                       /*with_information=*/true);
    if (iter == 0) current_l = sr.weighted_loglik;
    if (sr.gradient.norm() < config.scoring_grad_tol) break;

    const double mean_diag = sr.information.diagonal().mean();
    const double ridge =
        std::max(config.scoring_ridge * mean_diag, 1e-300);
    Matrix damped = sr.information;
    damped.diagonal().array() += ridge;
    const Eigen::LDLT<Matrix> ldlt(damped);
    Vector step;
    if (ldlt.info() == Eigen::Success) step = ldlt.solve(sr.gradient);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      const auto d = ldlt.vectorD();
      const double cond =
          d.cwiseAbs().maxCoeff() / std::max(d.cwiseAbs().minCoeff(), 1e-300);
      fail(ErrorCode::singular_information,
           "empirical information is numerically singular after ridge "
           "(condition estimate " +
               std::to_string(cond) + ")");
    }

    // Step halving: never accept a decrease of L_k.
    bool accepted = false;
    double scale = 1.0;
    for (int h = 0; h < 20; ++h) {
      const Vector candidate_x = x + scale * step;
      ComponentParameters candidate =
          unpack_component(candidate_x, current, design);
      const double candidate_l = weighted_loglik_only(
          candidate, stats, design, resp_column, config.threads);
      if (std::isfinite(candidate_l) && candidate_l >= current_l) {
        current = std::move(candidate);
        x = candidate_x;
        current_l = candidate_l;
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) break;  // no improving step in this direction
  }
  return current;
}

namespace {

/// Group assignment -> moment-based component estimate.
ComponentParameters moment_component(const PanelStats& stats,
                                     const ExperimentDesign& design,
                                     const std::vector<long>& members,
                                     MeanSpec mean_spec) {
  const int e_count = design.n_conditions();
  const int r = design.replicates();
  const double n_grp = static_cast<double>(members.size());

  Vector mu = Vector::Zero(e_count);
  Vector m2 = Vector::Zero(e_count);
  Vector css = Vector::Zero(e_count);
  for (long i : members) {
    for (int e = 0; e < e_count; ++e) {
      const double m = stats.replicate_mean(i, e);
      mu[e] += m;
      m2[e] += m * m;
      css[e] += stats.centered_ss(i, e);
    }
  }
  mu /= n_grp;

  Vector sigma2(e_count), tau(e_count);
  for (int e = 0; e < e_count; ++e) {
    const double var_means = std::max(0.0, m2[e] / n_grp - mu[e] * mu[e]);
    double s2;
    if (r >= 2) {
      s2 = css[e] / (n_grp * (r - 1));
    } else {
      // r = 1: within-replicate variance is not observable; split the
      // between-pixel variance between the two components.
      s2 = 0.75 * var_means;
    }
    sigma2[e] = std::max(s2, 1e-6);
    const double tau2 = r >= 2 ? var_means - sigma2[e] / r : 0.25 * var_means;
    tau[e] = std::sqrt(std::max(tau2, kTauFloor * kTauFloor));
  }

  // Link coefficients: least squares on the log of the moment estimates,
  // in the standardized basis.
  const Matrix& z = design.covariate_rows_std();
  const Vector log_sigma = (0.5 * sigma2.array().log()).matrix();
  const Vector log_tau = tau.array().log().matrix();
  const Vector alpha_std = z.colPivHouseholderQr().solve(log_sigma);
  const Vector gamma_std = z.colPivHouseholderQr().solve(log_tau);

  ComponentParameters comp;
  comp.alpha = to_raw_coeffs(alpha_std, design);
  comp.gamma = to_raw_coeffs(gamma_std, design);

  if (mean_spec == MeanSpec::npm) {
    comp.mean = NpmMeans{mu};
    return comp;
  }

  // LEI heuristic start: anchor the intercept below the smallest mean, get
  // the linear rate from a one-covariate regression on duration, then fill
  // the group intercepts with left-over level.
  int n_groups = 0;
  std::vector<int> groups = lei_duration_groups(design, n_groups);
  LeiMeans lei;
  lei.condition_group = groups;
  lei.beta1 = mu.minCoeff() - 1.0;
  double sxy = 0.0, sxx = 0.0;
  const double dbar = design.covariate_rows().col(2).mean();
  const double mbar = mu.mean();
  for (int e = 0; e < e_count; ++e) {
    const double dx = design.conditions()[e].duration_s - dbar;
    sxy += dx * (mu[e] - mbar);
    sxx += dx * dx;
  }
  const double slope = sxx > 0.0 ? std::max(sxy / sxx, 1e-8) : 1e-8;
  lei.log_rate = std::log(slope);
  lei.deltas = Vector::Zero(n_groups);
  for (int g = 0; g < n_groups; ++g) {
    double resid_sum = 0.0;
    int count = 0;
    for (int e = 0; e < e_count; ++e) {
      if (groups[e] != g) continue;
      resid_sum +=
          mu[e] - lei.beta1 - slope * design.conditions()[e].duration_s;
      ++count;
    }
    lei.deltas[g] = std::log(std::max(resid_sum / std::max(count, 1), 0.05));
  }
  lei.beta_temp = 0.0;
  comp.mean = lei;
  return comp;
}

}  // namespace

MixtureModel initialize_model(const PanelStats& stats,
                              const ExperimentDesign& design, int k,
                              MeanSpec mean_spec, InitStrategy strategy,
                              std::uint64_t seed) {
  const long n = stats.n_pixels();
  require(k >= 1, ErrorCode::invalid_argument, "K must be >= 1");
  require(n >= k, ErrorCode::invalid_argument,
          "need at least K pixels to initialize K components");

  std::vector<std::vector<long>> groups(k);

  if (strategy == InitStrategy::quantile || k == 1) {
    // Hot pixels are an upper tail: seed groups by ranking grand means and
    // cutting at geometric tail fractions (0.985 / 0.998 for K = 3).
    std::vector<long> order(n);
    std::iota(order.begin(), order.end(), 0L);
    std::stable_sort(order.begin(), order.end(), [&](long a, long b) {
      return stats.grand_mean[a] < stats.grand_mean[b];
    });
    std::vector<double> tail(k - 1);
    double g = 0.015;
    for (int j = k - 2; j >= 0; --j) {
      tail[j] = g;
      g *= 2.0 / 15.0;
    }
    std::vector<long> bounds(k + 1, 0);
    bounds[k] = n;
    for (int j = 1; j < k; ++j) {
      bounds[j] = std::min<long>(
          n - (k - j),
          static_cast<long>(std::floor((1.0 - tail[j - 1]) * n)));
    }
    for (int j = k - 1; j >= 1; --j) {
      bounds[j] = std::min(bounds[j], bounds[j + 1] - 1);  // non-empty groups
    }
    for (int j = 0; j < k; ++j) {
      for (long i = bounds[j]; i < bounds[j + 1]; ++i) {
        groups[j].push_back(order[i]);
      }
    }
  } else {
    // k-center style random start: K random pixels seed the groups, every
    // pixel joins the nearest seed in replicate-mean space.
    SequentialRng rng(seed, 0, RngDomain::init);
    std::vector<long> centers;
    while (static_cast<int>(centers.size()) < k) {
      const long c = static_cast<long>(rng.uniform_index(n));
      if (std::find(centers.begin(), centers.end(), c) == centers.end()) {
        centers.push_back(c);
      }
    }
    for (long i = 0; i < n; ++i) {
      int best = 0;
      double best_dist = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        const double dist = (stats.replicate_mean.row(i) -
                             stats.replicate_mean.row(centers[j]))
                                .squaredNorm();
        if (dist < best_dist) {
          best_dist = dist;
          best = j;
        }
      }
      groups[best].push_back(i);
    }
    for (int j = 0; j < k; ++j) {
      if (groups[j].empty()) groups[j].push_back(centers[j]);
    }
  }

  MixtureModel model;
  model.design = design;
  Vector pi(k);
  for (int j = 0; j < k; ++j) {
    model.components.push_back(
        moment_component(stats, design, groups[j], mean_spec));
    pi[j] = std::max(static_cast<double>(groups[j].size()), 0.5) /
            static_cast<double>(n);
  }
  pi /= pi.sum();
  model.weights.theta =
      k == 1 ? Vector(0) : logits_from_weights(pi);
  sort_components_by_grand_mean(model);
  return model;
}

namespace {

FitResult fit_once(const PanelStats& stats, const ExperimentDesign& design,
                   int k, const FitConfig& config, MixtureModel model) {
  const long n = stats.n_pixels();
  FitResult result;
  result.trace.reserve(64);

  Responsibilities resp;
  double prev_ll = -std::numeric_limits<double>::infinity();
  bool converged = false;
  int iter = 0;
  bool model_dirty = false;  // parameters changed since the last E-step

  for (iter = 0; iter < config.max_em_iters; ++iter) {
    resp = e_step(stats, model, config.threads);
    model_dirty = false;
    const double ll = resp.manifest_loglik;
    if (!result.trace.empty() && ll < prev_ll - 1e-10) {
      fail(ErrorCode::monotonicity_violation,
           "manifest log-likelihood decreased by " +
               std::to_string(prev_ll - ll) + " at iteration " +
               std::to_string(iter + 1));
    }
    result.trace.push_back(ll);
    if (std::isfinite(prev_ll) &&
        std::abs(ll - prev_ll) <= config.rel_tol * (std::abs(ll) + 1.0)) {
      converged = true;
      break;
    }
    prev_ll = ll;

    MixtureWeights weights = m_step_weights(resp);
    const Vector pi = weights_from_logits(weights.theta);
    for (int j = 0; j < k; ++j) {
      if (pi[j] < 1.0 / static_cast<double>(n)) {
        fail(ErrorCode::component_death,
             "component " + std::to_string(j + 1) +
                 " collapsed (pi < 1/n); try a smaller K");
      }
    }
    model.weights = std::move(weights);
    for (int j = 0; j < k; ++j) {
      model.components[j] = scoring_update(model.components[j], stats, design,
                                           resp.e.col(j), config);
    }
    model_dirty = true;
  }

  if (model_dirty) {
    resp = e_step(stats, model, config.threads);
    if (!result.trace.empty() &&
        resp.manifest_loglik < result.trace.back() - 1e-10) {
      fail(ErrorCode::monotonicity_violation,
           "manifest log-likelihood decreased on the final E-step");
    }
    result.trace.push_back(resp.manifest_loglik);
  }

  const std::vector<int> order = sort_components_by_grand_mean(model);
  Matrix reordered(resp.e.rows(), resp.e.cols());
  for (int j = 0; j < k; ++j) reordered.col(j) = resp.e.col(order[j]);
  resp.e = std::move(reordered);

  result.model = std::move(model);
  result.responsibilities = std::move(resp);
  result.converged = converged;
  result.iterations = iter;
  return result;
}

}  // namespace

FitResult fit(const PanelStats& stats, const ExperimentDesign& design, int k,
              MeanSpec mean_spec, const FitConfig& config,
              const std::optional<MixtureModel>& initial) {
  require(k >= 1, ErrorCode::invalid_argument, "K must be >= 1");
  require(stats.n_pixels() >= k, ErrorCode::invalid_argument,
          "need at least K pixels");
  require(config.rel_tol > 0.0 && config.scoring_grad_tol > 0.0,
          ErrorCode::invalid_argument, "tolerances must be positive");
  require(config.restarts >= 1, ErrorCode::invalid_argument,
          "restarts must be >= 1");
  if (initial) {
    validate_model(*initial);
    require(initial->n_components() == k, ErrorCode::dimension_mismatch,
            "initial model has wrong number of components");
    require(initial->design == design, ErrorCode::dimension_mismatch,
            "initial model was built for a different design");
  }

  std::optional<FitResult> best;
  std::exception_ptr last_error;
  for (int attempt = 0; attempt < config.restarts; ++attempt) {
    try {
      MixtureModel start;
      if (initial && attempt == 0) {
        start = *initial;
      } else {
        const InitStrategy strategy =
            attempt == 0 ? config.init_strategy : InitStrategy::random;
        start = initialize_model(stats, design, k, mean_spec, strategy,
                                 config.seed + static_cast<std::uint64_t>(attempt));
      }
      FitResult candidate = fit_once(stats, design, k, config, std::move(start));
      if (!best || candidate.responsibilities.manifest_loglik >
                       best->responsibilities.manifest_loglik) {
        best = std::move(candidate);
      }
    } catch (const Error&) {
      last_error = std::current_exception();
    }
  }
  if (!best) std::rethrow_exception(last_error);
  return std::move(*best);
}

FitResult fit(const Panel& panel, const ExperimentDesign& design, int k,
              MeanSpec mean_spec, const FitConfig& config,
              const std::optional<MixtureModel>& initial) {
  return fit(build_panel_stats(panel, design, config.threads), design, k,
             mean_spec, config, initial);
}

}  // namespace darkmix
