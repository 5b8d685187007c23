#include "mccws/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mccws/errors.hpp"

namespace mccws {

Schedule::Schedule(double base_lr, std::size_t total_steps, double warmup_ratio)
    : base_lr_(base_lr), total_steps_(total_steps) {
  if (total_steps == 0) throw std::invalid_argument("schedule needs total_steps >= 1");
  if (!(warmup_ratio >= 0 && warmup_ratio < 1)) {
    throw std::invalid_argument("warmup_ratio must be in [0, 1)");
  }
  warmup_steps_ = static_cast<std::size_t>(
      std::ceil(warmup_ratio * static_cast<double>(total_steps) - 1e-9));
}

double Schedule::lr_at(std::size_t step) const {
  if (step > total_steps_) {
    throw std::out_of_range("step " + std::to_string(step) + " beyond schedule of " +
                            std::to_string(total_steps_));
  }
  if (warmup_steps_ > 0 && step <= warmup_steps_) {
    return base_lr_ * static_cast<double>(step) / static_cast<double>(warmup_steps_);
  }
  return base_lr_ * static_cast<double>(total_steps_ - step) /
         static_cast<double>(total_steps_ - warmup_steps_);
}

AdamW::AdamW(std::vector<Parameter*> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  for (const Parameter* p : params_) {
    state_.m.emplace_back(p->value.rows(), p->value.cols());
    state_.v.emplace_back(p->value.rows(), p->value.cols());
  }
}

void AdamW::set_state(AdamWState state) {
  if (state.m.size() != params_.size() || state.v.size() != params_.size()) {
    throw ShapeError("optimizer state has " + std::to_string(state.m.size()) +
                     " slots for " + std::to_string(params_.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!state.m[i].same_shape(params_[i]->value) || !state.v[i].same_shape(params_[i]->value)) {
      throw ShapeError("optimizer state shape mismatch for " + params_[i]->name);
    }
  }
  state_ = std::move(state);
}

void AdamW::step(const Gradients& grads, double lr) {
  ++state_.step;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double t = static_cast<double>(state_.step);
  const double correction1 = 1 - std::pow(b1, t);
  const double correction2 = 1 - std::pow(b2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    const Tensor* g = grads.find(p);
    if (g != nullptr && !g->same_shape(p.value)) {
      throw ShapeError("gradient " + shape_string(*g) + " does not match parameter " +
                       p.name + " " + shape_string(p.value));
    }
    auto theta = p.value.data();
    auto m = state_.m[i].data();
    auto v = state_.v[i].data();
    const double decay = p.decay ? config_.weight_decay : 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = g != nullptr ? static_cast<double>((*g)[j]) : 0.0;
      m[j] = static_cast<Real>(b1 * m[j] + (1 - b1) * gj);
      v[j] = static_cast<Real>(b2 * v[j] + (1 - b2) * gj * gj);
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      const double update = m_hat / (std::sqrt(v_hat) + config_.eps) + decay * theta[j];
      theta[j] = static_cast<Real>(theta[j] - lr * update);
    }
  }
}

}  // namespace mccws
