#pragma once

#include <functional>
#include <vector>

#include "sgpbae/rng.hpp"

namespace sgpbae {

// Scale-adapted stochastic-gradient HMC. During burn-in the per-coordinate
// moment estimates (uncentered second moment V, smoothed gradient g,
// adaptive window tau) are updated from each fresh gradient; afterwards
// they are frozen and define the diagonal preconditioner V^(-1/2).
struct SamplerState {
  Eigen::VectorXd position;
  Eigen::VectorXd velocity;
  Eigen::VectorXd v_hat;  // uncentered second moment of the gradient
  Eigen::VectorXd g_avg;  // smoothed gradient
  Eigen::VectorXd tau;    // moving-average window
  std::int64_t step_count = 0;
  bool in_burn_in = true;

  static SamplerState init(Eigen::VectorXd position);
  Eigen::Index dim() const { return position.size(); }
};

struct SghmcConfig {
  double step_size = 0.005;      // eta
  double momentum_decay = 0.05;  // alpha in (0, 1)
  std::int64_t n_burn_in = 1500;
  std::int64_t n_samples = 100;
  std::int64_t thinning = 400;
  double noise_floor = 1e-16;
  // Lower bound on the adapted V estimate. Coordinates whose gradients
  // vanish (dead units, uncovered pixels) would otherwise receive
  // unbounded injected noise through V^(-1/2).
  double vhat_floor = 1e-16;
  // Elementwise bound on the preconditioned gradient V^(-1/2) grad after
  // the preconditioner freezes; 0 disables. Tames post-burn-in spikes in
  // coordinates whose frozen scale no longer matches the local landscape.
  double grad_clip = 0.0;

  void validate() const;
};

using GradFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Burn-in moment adaptation; all three updates read the pre-update values.
void adapt_moments(SamplerState& state, const Eigen::VectorXd& grad,
                   double vhat_floor = 1e-16);

// One step of the discretized dynamics:
//   v += -eta^2 V^(-1/2) grad - alpha v + N(0, max(2 eta^2 alpha V^(-1/2) - eta^4, floor))
//   position += v
// Adapts moments first while in burn-in. Throws NonFiniteGradient on
// NaN/Inf gradients.
void sghmc_step(SamplerState& state, const GradFn& grad_fn,
                const SghmcConfig& config, Rng& rng);

// n_burn_in adaptive steps, then n_samples positions spaced thinning steps
// apart. The callback fires once per collected sample.
std::vector<Eigen::VectorXd> run_chain(
    const Eigen::VectorXd& init, const GradFn& grad_fn,
    const SghmcConfig& config, Rng& rng,
    const std::function<void(std::int64_t, const SamplerState&)>& on_sample = {});

}  // namespace sgpbae
