#include "mmdcal/adam.hpp"

#include <cmath>

#include "mmdcal/errors.hpp"

namespace mmdcal {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw Error(Errc::kConfigError, "learning rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw Error(Errc::kConfigError, "Adam betas must lie in (0, 1)");
  }
  if (!(eps > 0.0)) throw Error(Errc::kConfigError, "Adam eps must be positive");
  if (weight_decay < 0.0) throw Error(Errc::kConfigError, "weight decay must be non-negative");
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& config) {
  if (grads.size() != params.size()) throw Error(Errc::kShapeMismatch, "adam_step: grads/params length differ");
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error(Errc::kShapeMismatch, "adam_step: optimizer state does not match parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + config.weight_decay * params[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    params[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), states_(params_.size()), masks_(params_.size()), config_(config) {
  config_.validate();
}

void Adam::set_mask(std::size_t index, std::vector<double> mask) {
  if (mask.size() != params_.at(index).numel()) throw Error(Errc::kShapeMismatch, "Adam mask length");
  masks_[index] = std::move(mask);
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) p.mutable_grad();
    if (masks_[i].empty()) {
      adam_step(p.mutable_data(), p.grad(), states_[i], config_);
      continue;
    }
    // Masked entries are restored after a full update; their moments stay zero
    // because their gradient (and decay) contribution is zeroed first.
    std::vector<double> saved(p.data().begin(), p.data().end());
    std::vector<double> g(p.grad().begin(), p.grad().end());
    auto values = p.mutable_data();
    for (std::size_t e = 0; e < g.size(); ++e) {
      if (masks_[i][e] == 0.0) {
        g[e] = 0.0;
        values[e] = 0.0;
      }
    }
    adam_step(values, g, states_[i], config_);
    for (std::size_t e = 0; e < g.size(); ++e) {
      if (masks_[i][e] == 0.0) values[e] = saved[e];
    }
  }
}

}  // namespace mmdcal
