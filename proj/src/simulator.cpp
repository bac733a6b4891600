#include "darkmix/simulator.hpp"

#include <cmath>
#include <string>

#include "darkmix/error.hpp"
#include "darkmix/parallel.hpp"
#include "darkmix/rng.hpp"

namespace darkmix {

SimOutput simulate_panel(const MixtureModel& model, long n_pixels,
                         std::uint64_t seed, const SimOptions& options) {
  require(n_pixels >= 1, ErrorCode::invalid_argument, "need at least one pixel");
  validate_model(model);

  const ExperimentDesign& design = model.design;
  const int e_count = design.n_conditions();
  const int r = design.replicates();
  const int k_count = model.n_components();
  const int width = design.width();

  // Per-component condition-level parameters, evaluated once.
  Matrix mu(k_count, e_count), sigma(k_count, e_count), tau(k_count, e_count);
  for (int k = 0; k < k_count; ++k) {
    mu.row(k) = mean_vector(model.components[k], design).transpose();
    sigma.row(k) = sigma_vector(model.components[k].alpha, design).transpose();
    tau.row(k) = tau_vector(model.components[k].gamma, design).transpose();
  }
  const Vector pi = model.mixing_proportions();
  Vector pi_cum(k_count);
  double acc = 0.0;
  for (int k = 0; k < k_count; ++k) pi_cum[k] = (acc += pi[k]);

  SimOutput out;
  out.panel.data.resize(n_pixels, width);
  out.true_labels.assign(static_cast<std::size_t>(n_pixels), 0);
  out.model = model;
  out.seed = seed;

  parallel_chunks(
      static_cast<std::size_t>(n_pixels), options.threads,
      [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          const RngStream rng(seed, i, RngDomain::simulate);
          // Draw layout per pixel: uniform slot 0 picks the label, normal
          // slot 0 is the pixel effect, normal slot 1+c is cell c's noise.
          // The layout does not depend on K or on the drawn label.
          const double u = rng.uniform(0);
          int label = k_count - 1;
          for (int k = 0; k < k_count; ++k) {
            if (u <= pi_cum[k]) {
              label = k;
              break;
            }
          }
          out.true_labels[i] = label + 1;
          const double pixel_effect = rng.normal(1);

          auto row = out.panel.data.row(static_cast<long>(i));
          for (int e = 0; e < e_count; ++e) {
            const double base =
                mu(label, e) + tau(label, e) * pixel_effect;
            for (int j = 0; j < r; ++j) {
              const int cell = e * r + j;
              double y = base + sigma(label, e) * rng.normal(2 + cell);
              if (options.quantize) {
                y = std::nearbyint(y);
                y = std::min(std::max(y, 0.0), 65535.0);
              }
              row[cell] = y;
            }
          }
        }
      });
  return out;
}

namespace {

ExperimentDesign atik_design(int replicates) {
  std::vector<Condition> conditions;
  conditions.push_back({-10.0, 0.01});
  for (double t : {-10.0, 0.0, 10.0}) {
    for (double d : {3.0, 300.0, 600.0}) conditions.push_back({t, d});
  }
  return build_design(std::move(conditions), replicates);
}

/// Per-condition mean: baseline offset plus a duration-linear trend whose
/// rate grows exponentially with temperature. Slopes are synthetic.
NpmMeans trend_means(const ExperimentDesign& design, double slope,
                     double temp_rate) {
  Vector mu(design.n_conditions());
  for (int e = 0; e < design.n_conditions(); ++e) {
    const auto& c = design.conditions()[e];
    mu[e] = 263.0 + slope * c.duration_s * std::exp(temp_rate * c.temp_c);
  }
  return NpmMeans{mu};
}

Vector link(double intercept, double temp, double dur) {
  Vector v(3);
  v << intercept, temp, dur;
  return v;
}

}  // namespace

MixtureModel preset_atik(int k, int replicates) {
  require(k == 2 || k == 3, ErrorCode::unsupported_preset,
          "preset supports K = 2 or 3, got " + std::to_string(k));
  MixtureModel model;
  model.design = atik_design(replicates);

  const double log16 = std::log(16.0);

  // Ordinary pixels: ~263 offset, read-out noise ~16 at the cold/short
  // corner, nearly flat trend, negligible pixel-specific effect.
  ComponentParameters ordinary;
  ordinary.mean = trend_means(model.design, 0.012, 0.08);
  ordinary.alpha = link(log16 + 0.10, 0.010, 0.0001);
  ordinary.gamma = link(-0.70, 0.015, 0.0005);

  // Moderately hot: mild mean elevation, noise and lack of uniformity both
  // growing with duration and temperature.
  ComponentParameters moderate;
  moderate.mean = trend_means(model.design, 0.020, 0.05);
  moderate.alpha = link(log16 + 0.20, 0.015, 0.0005);
  moderate.gamma = link(0.10, 0.040, 0.0040);

  if (k == 2) {
    model.components = {ordinary, moderate};
    Vector pi(2);
    pi << 0.9977, 0.0023;
    model.weights.theta = logits_from_weights(pi);
    return model;
  }

  // Very hot: strong duration trend and an extreme pixel effect in bad
  // conditions.
  ComponentParameters very_hot;
  very_hot.mean = trend_means(model.design, 0.45, 0.06);
  very_hot.alpha = link(log16 + 0.40, 0.020, 0.0006);
  very_hot.gamma = link(0.50, 0.050, 0.0050);

  model.components = {ordinary, moderate, very_hot};
  Vector pi(3);
  pi << 0.9858, 0.0123, 0.0019;
  model.weights.theta = logits_from_weights(pi);
  return model;
}

}  // namespace darkmix
