#include "sgpbae/sghmc.hpp"

#include <cmath>

#include "sgpbae/errors.hpp"

namespace sgpbae {

SamplerState SamplerState::init(Eigen::VectorXd position) {
  SamplerState s;
  const Eigen::Index n = position.size();
  s.position = std::move(position);
  s.velocity = Eigen::VectorXd::Zero(n);
  s.v_hat = Eigen::VectorXd::Ones(n);
  s.g_avg = Eigen::VectorXd::Zero(n);
  s.tau = Eigen::VectorXd::Ones(n);
  return s;
}

void SghmcConfig::validate() const {
  if (!(step_size > 0.0)) throw ConfigError("step_size must be positive");
  if (!(momentum_decay > 0.0 && momentum_decay < 1.0)) {
    throw ConfigError("momentum must lie in (0, 1)");
  }
  if (thinning < 1) throw ConfigError("thinning must be >= 1");
  if (n_burn_in < 0 || n_samples < 0) {
    throw ConfigError("burn-in and sample counts must be nonnegative");
  }
}

void adapt_moments(SamplerState& state, const Eigen::VectorXd& grad,
                   double vhat_floor) {
  // Simultaneous-read semantics: every delta uses the pre-update moments.
  const Eigen::ArrayXd v = state.v_hat.array();
  const Eigen::ArrayXd g = state.g_avg.array();
  const Eigen::ArrayXd t = state.tau.array();
  const Eigen::ArrayXd gr = grad.array();

  state.v_hat.array() = (v + (gr.square() - v) / t).max(std::max(vhat_floor, 1e-16));
  // tau can only shrink through g^2/V; clamp at 1 so the EMA windows stay
  // valid (the fixed point is tau = V/g^2 >= 1).
  state.tau.array() = (t - g.square() / v * t + 1.0).max(1.0);
  state.g_avg.array() = g + (gr - g) / t;
}

void sghmc_step(SamplerState& state, const GradFn& grad_fn,
                const SghmcConfig& config, Rng& rng) {
  const Eigen::VectorXd grad = grad_fn(state.position);
  if (!grad.allFinite()) {
    throw NonFiniteGradient("gradient contains NaN/Inf at step " +
                            std::to_string(state.step_count));
  }
  if (state.in_burn_in) adapt_moments(state, grad, config.vhat_floor);

  const double eta = config.step_size;
  const double eta2 = eta * eta;
  const Eigen::ArrayXd minv = state.v_hat.array().rsqrt();  // V^(-1/2)
  const Eigen::ArrayXd noise_var =
      (2.0 * eta2 * config.momentum_decay * minv - eta2 * eta2)
          .max(config.noise_floor);

  Eigen::ArrayXd noise(state.dim());
  for (Eigen::Index i = 0; i < state.dim(); ++i) noise[i] = rng.normal();
  noise *= noise_var.sqrt();

  Eigen::ArrayXd scaled_grad = minv * grad.array();
  if (config.grad_clip > 0.0) {
    scaled_grad = scaled_grad.min(config.grad_clip).max(-config.grad_clip);
  }
  state.velocity.array() += -eta2 * scaled_grad -
                            config.momentum_decay * state.velocity.array() +
                            noise;
  state.position += state.velocity;
  ++state.step_count;
}

std::vector<Eigen::VectorXd> run_chain(
    const Eigen::VectorXd& init, const GradFn& grad_fn,
    const SghmcConfig& config, Rng& rng,
    const std::function<void(std::int64_t, const SamplerState&)>& on_sample) {
  config.validate();
  SamplerState state = SamplerState::init(init);
  for (std::int64_t i = 0; i < config.n_burn_in; ++i) {
    sghmc_step(state, grad_fn, config, rng);
  }
  state.in_burn_in = false;

  std::vector<Eigen::VectorXd> samples;
  samples.reserve(static_cast<std::size_t>(config.n_samples));
  for (std::int64_t s = 0; s < config.n_samples; ++s) {
    for (std::int64_t t = 0; t < config.thinning; ++t) {
      sghmc_step(state, grad_fn, config, rng);
    }
    samples.push_back(state.position);
    if (on_sample) on_sample(s, state);
  }
  return samples;
}

}  // namespace sgpbae
