#include "darkmix/inference.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <limits>

#include "darkmix/error.hpp"
#include "darkmix/parallel.hpp"
#include "darkmix/rng.hpp"

namespace darkmix {

double posterior_entropy(const Responsibilities& resp) {
  // 0 log 0 = 0; accumulate chunk-wise for determinism.
  const long n = resp.n_pixels();
  const int k_count = resp.n_components();
  const std::size_t n_chunks = chunk_count(static_cast<std::size_t>(n));
  std::vector<long double> partial(n_chunks, 0.0L);
  parallel_chunks(static_cast<std::size_t>(n), 1,
                  [&](std::size_t c, std::size_t begin, std::size_t end) {
                    long double acc = 0.0L;
                    for (std::size_t i = begin; i < end; ++i) {
                      for (int k = 0; k < k_count; ++k) {
                        const double p = resp.e(static_cast<long>(i), k);
                        if (p > 0.0) acc -= static_cast<long double>(p) * std::log(p);
                      }
                    }
                    partial[c] = acc;
                  });
  long double total = 0.0L;
  for (auto p : partial) total += p;
  return static_cast<double>(total);
}

int parameter_count(const MixtureModel& model) {
  int p = model.n_components() - 1;
  for (const auto& comp : model.components) {
    p += comp.mean_param_count() + 6;
  }
  return p;
}

CriteriaRow criteria(const FitResult& fit_result, long n_pixels,
                     std::optional<double> loglik_k1) {
  CriteriaRow row;
  row.k = fit_result.model.n_components();
  row.loglik = fit_result.responsibilities.manifest_loglik;
  row.params = parameter_count(fit_result.model);
  row.bic = -2.0 * row.loglik + row.params * std::log(static_cast<double>(n_pixels));
  row.entropy = posterior_entropy(fit_result.responsibilities);
  row.icl = row.bic + 2.0 * row.entropy;
  if (row.k >= 2 && loglik_k1) {
    const double gain = row.loglik - *loglik_k1;
    if (!(gain > 0.0)) {
      fail(ErrorCode::nec_undefined,
           "NEC is undefined: L(K) does not exceed the K = 1 baseline");
    }
    row.nec = row.entropy / gain;
  }
  return row;
}

SweepResult sweep_k(const PanelStats& stats, const ExperimentDesign& design,
                    const std::vector<int>& ks, MeanSpec mean_spec,
                    const FitConfig& config) {
  require(!ks.empty(), ErrorCode::invalid_argument, "no K values requested");
  require(std::is_sorted(ks.begin(), ks.end()), ErrorCode::invalid_argument,
          "K values must be ascending");
  require(ks.front() >= 2, ErrorCode::invalid_argument,
          "sweep K values must be >= 2 (the K = 1 baseline is implicit)");

  SweepResult result;
  const FitResult base = fit(stats, design, 1, mean_spec, config);
  const double loglik_k1 = base.responsibilities.manifest_loglik;
  result.rows.push_back(criteria(base, stats.n_pixels()));

  for (int k : ks) {
    CriteriaRow row;
    try {
      const FitResult fr = fit(stats, design, k, mean_spec, config);
      row = criteria(fr, stats.n_pixels(), loglik_k1);
    } catch (const Error& err) {
      row.k = k;
      row.fitted = false;
      row.failure = err.what();
    }
    result.rows.push_back(row);
  }

  const auto argbest = [&](auto key) {
    std::optional<int> best;
    double best_value = std::numeric_limits<double>::infinity();
    for (const auto& row : result.rows) {
      if (!row.fitted || row.k < 2) continue;
      const std::optional<double> value = key(row);
      if (value && *value < best_value) {
        best_value = *value;
        best = row.k;
      }
    }
    return best;
  };
  result.best_bic = argbest([](const CriteriaRow& r) {
    return std::optional<double>(r.bic);
  });
  result.best_icl = argbest([](const CriteriaRow& r) {
    return std::optional<double>(r.icl);
  });
  result.best_nec = argbest([](const CriteriaRow& r) { return r.nec; });
  return result;
}

double chi_squared_upper_tail(double x, int df) {
  require(df >= 1, ErrorCode::invalid_argument, "df must be >= 1");
  if (x <= 0.0) return 1.0;
  const boost::math::chi_squared dist(static_cast<double>(df));
  return boost::math::cdf(boost::math::complement(dist, x));
}

LrTestResult lr_test(const FitResult& fit_npm, const FitResult& fit_lei) {
  const MixtureModel& npm = fit_npm.model;
  const MixtureModel& lei = fit_lei.model;
  require(npm.design == lei.design, ErrorCode::mismatched_fits,
          "fits use different designs");
  require(npm.n_components() == lei.n_components(), ErrorCode::mismatched_fits,
          "fits use different K");
  require(fit_npm.responsibilities.n_pixels() ==
              fit_lei.responsibilities.n_pixels(),
          ErrorCode::mismatched_fits, "fits cover different pixel counts");
  for (const auto& comp : npm.components) {
    require(comp.is_npm(), ErrorCode::mismatched_fits,
            "first fit must use the free-means model");
  }
  int lei_mean_params = 0;
  for (const auto& comp : lei.components) {
    require(!comp.is_npm(), ErrorCode::mismatched_fits,
            "second fit must use the parametric mean model");
    lei_mean_params = comp.mean_param_count();
  }

  LrTestResult result;
  const double raw = 2.0 * (fit_npm.responsibilities.manifest_loglik -
                            fit_lei.responsibilities.manifest_loglik);
  result.under_converged_warning = raw < -1e-4;
  result.statistic = std::max(raw, 0.0);
  result.df =
      npm.n_components() * (npm.design.n_conditions() - lei_mean_params);
  require(result.df >= 1, ErrorCode::invalid_argument,
          "LR test needs the free-means model to have more parameters");
  result.p_value = chi_squared_upper_tail(result.statistic, result.df);
  return result;
}

Vector flatten_parameters(const MixtureModel& model,
                          std::vector<std::string>* names) {
  std::vector<double> values;
  const auto push = [&](const std::string& name, double value) {
    values.push_back(value);
    if (names) names->push_back(name);
  };
  const Vector pi = model.mixing_proportions();
  for (int k = 0; k < model.n_components(); ++k) {
    push("pi[" + std::to_string(k + 1) + "]", pi[k]);
  }
  for (int k = 0; k < model.n_components(); ++k) {
    const std::string prefix = "comp" + std::to_string(k + 1) + ".";
    const auto& comp = model.components[k];
    if (comp.is_npm()) {
      const auto& npm = std::get<NpmMeans>(comp.mean);
      for (int e = 0; e < npm.values.size(); ++e) {
        push(prefix + "mu[" + std::to_string(e + 1) + "]", npm.values[e]);
      }
    } else {
      const auto& lei = std::get<LeiMeans>(comp.mean);
      push(prefix + "beta1", lei.beta1);
      push(prefix + "log_rate", lei.log_rate);
      for (int g = 0; g < lei.n_groups(); ++g) {
        push(prefix + "delta[" + std::to_string(g + 1) + "]", lei.deltas[g]);
      }
      push(prefix + "beta_temp", lei.beta_temp);
    }
    for (int q = 0; q < 3; ++q) {
      push(prefix + "alpha[" + std::to_string(q + 1) + "]", comp.alpha[q]);
    }
    for (int q = 0; q < 3; ++q) {
      push(prefix + "gamma[" + std::to_string(q + 1) + "]", comp.gamma[q]);
    }
  }
  return Eigen::Map<Vector>(values.data(), static_cast<long>(values.size()));
}

namespace {

/// Match fitted components to reference components by nearest grand mean;
/// both sides are sorted ascending so this is usually the identity, but a
/// resample can reorder close components.
std::vector<int> align_labels(const MixtureModel& reference,
                              const MixtureModel& fitted) {
  const int k_count = reference.n_components();
  std::vector<double> gm_ref(k_count), gm_fit(k_count);
  for (int k = 0; k < k_count; ++k) {
    gm_ref[k] = grand_mean(reference.components[k], reference.design);
    gm_fit[k] = grand_mean(fitted.components[k], fitted.design);
  }
  std::vector<int> map(k_count, -1);
  std::vector<bool> used(k_count, false);
  for (int k = 0; k < k_count; ++k) {
    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int j = 0; j < k_count; ++j) {
      if (used[j]) continue;
      const double dist = std::abs(gm_fit[j] - gm_ref[k]);
      if (dist < best_dist) {
        best_dist = dist;
        best = j;
      }
    }
    map[k] = best;
    used[best] = true;
  }
  return map;
}

MixtureModel permute_components(const MixtureModel& model,
                                const std::vector<int>& order) {
  MixtureModel out;
  out.design = model.design;
  const Vector pi = model.mixing_proportions();
  Vector pi_new(model.n_components());
  for (int k = 0; k < model.n_components(); ++k) {
    out.components.push_back(model.components[order[k]]);
    pi_new[k] = pi[order[k]];
  }
  out.weights.theta = model.n_components() == 1
                          ? Vector(0)
                          : logits_from_weights(pi_new);
  return out;
}

}  // namespace

BootstrapTable bootstrap_se(const PanelStats& stats, const MixtureModel& model,
                            const BootstrapConfig& config) {
  require(config.b >= 2, ErrorCode::invalid_argument,
          "bootstrap needs B >= 2 replicates");
  validate_model(model);
  const long n = stats.n_pixels();
  const int k_count = model.n_components();
  const MeanSpec mean_spec =
      model.components.front().is_npm() ? MeanSpec::npm : MeanSpec::lei;

  BootstrapTable table;
  table.replicates_requested = config.b;
  table.estimates = flatten_parameters(model, &table.names);
  const long p = table.estimates.size();

  const Resampler resample =
      config.resampler
          ? config.resampler
          : Resampler([seed = config.seed](int replicate, long count) {
              const RngStream rng(seed, static_cast<std::uint64_t>(replicate),
                                  RngDomain::bootstrap);
              std::vector<long> rows(static_cast<std::size_t>(count));
              for (long i = 0; i < count; ++i) {
                rows[static_cast<std::size_t>(i)] = static_cast<long>(
                    rng.uniform_index(static_cast<std::uint64_t>(i),
                                      static_cast<std::uint64_t>(count)));
              }
              return rows;
            });

  Matrix replicate_params(config.b, p);
  std::vector<bool> ok(static_cast<std::size_t>(config.b), false);

  for (int b = 0; b < config.b; ++b) {
    try {
      const std::vector<long> rows = resample(b, n);
      require(static_cast<long>(rows.size()) == n, ErrorCode::invalid_argument,
              "resampler returned wrong number of rows");
      const PanelStats boot = resample_stats(stats, rows);
      FitConfig fit_config = config.fit;
      fit_config.seed = config.seed + 0x9E3779B97F4A7C15ull +
                        static_cast<std::uint64_t>(b);
      std::optional<MixtureModel> start;
      if (config.warm_start) start = model;
      FitResult fr = fit(boot, model.design, k_count, mean_spec, fit_config,
                         start);
      const std::vector<int> order = align_labels(model, fr.model);
      const MixtureModel aligned = permute_components(fr.model, order);
      replicate_params.row(b) = flatten_parameters(aligned).transpose();
      ok[static_cast<std::size_t>(b)] = true;
    } catch (const Error&) {
      ok[static_cast<std::size_t>(b)] = false;
    }
  }

  int used = 0;
  for (bool flag : ok) used += flag ? 1 : 0;
  table.replicates_used = used;
  table.failures = config.b - used;
  if (table.failures * 5 > config.b) {
    fail(ErrorCode::bootstrap_failures,
         std::to_string(table.failures) + " of " + std::to_string(config.b) +
             " bootstrap replicates failed (more than 20%)");
  }
  require(used >= 2, ErrorCode::bootstrap_failures,
          "fewer than two successful bootstrap replicates");

  table.standard_errors.resize(p);
  for (long j = 0; j < p; ++j) {
    double mean = 0.0;
    for (int b = 0; b < config.b; ++b) {
      if (ok[static_cast<std::size_t>(b)]) mean += replicate_params(b, j);
    }
    mean /= used;
    double ss = 0.0;
    for (int b = 0; b < config.b; ++b) {
      if (!ok[static_cast<std::size_t>(b)]) continue;
      const double d = replicate_params(b, j) - mean;
      ss += d * d;
    }
    table.standard_errors[j] = std::sqrt(ss / (used - 1));
  }
  return table;
}

BootstrapTable bootstrap_se(const Panel& panel, const MixtureModel& model,
                            const BootstrapConfig& config) {
  return bootstrap_se(build_panel_stats(panel, model.design, config.fit.threads),
                      model, config);
}

}  // namespace darkmix
