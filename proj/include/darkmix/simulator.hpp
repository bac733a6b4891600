#pragma once

#include <cstdint>
#include <vector>

#include "darkmix/model.hpp"
#include "darkmix/panel.hpp"

namespace darkmix {

/// A simulated panel together with the ground truth that produced it.
struct SimOutput {
  Panel panel;
  std::vector<int> true_labels;  // 1-based component labels, length n
  MixtureModel model;
  std::uint64_t seed = 0;
};

struct SimOptions {
  /// Round to integers and clamp to [0, 65535], mimicking a 16-bit ADC.
  /// Off by default: the estimation model is continuous.
  bool quantize = false;
  int threads = 0;
};

/// Draw n pixels from the mixture: one latent label per pixel, one pixel
/// random effect per pixel, independent per-cell noise,
///   y_iej = mu_ke + sigma_ke eps_iej + tau_ke eps_i.
/// All randomness is Philox4x32-10 keyed by (seed, pixel index), so output
/// is reproducible and independent of thread scheduling.
SimOutput simulate_panel(const MixtureModel& model, long n_pixels,
                         std::uint64_t seed, const SimOptions& options = {});

/// A fully specified K-component model (K in {2, 3}) on the 10-condition
/// design used throughout: temperatures {-10, 0, 10} C crossed with
/// durations {3, 300, 600} s plus a near-zero (-10 C, 0.01 s) baseline.
/// Baseline level and read-out noise follow the studied camera (offset
/// ~263, noise ~16); the trend coefficients are synthetic but keep means,
/// sigma and tau increasing in duration and temperature for hot components.
MixtureModel preset_atik(int k, int replicates = 10);

}  // namespace darkmix
