#include "bilevel_rl/optim.hpp"

#include <cmath>

#include "bilevel_rl/errors.hpp"

namespace bilevel_rl {

Adam::Adam(std::size_t n_params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n_params, 0.0), v_(n_params, 0.0) {
  if (!(lr_ > 0.0)) throw ContractError("Adam: lr must be positive");
  if (beta1_ < 0.0 || beta1_ >= 1.0 || beta2_ < 0.0 || beta2_ >= 1.0)
    throw ContractError("Adam: betas must lie in [0, 1)");
}

void Adam::set_lr(double lr) {
  if (!(lr >= 0.0)) throw ContractError("Adam: lr must be non-negative");
  lr_ = lr;
}

void Adam::step(std::span<double> params, std::span<const double> grads, StepDirection dir) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw ContractError("Adam: params/grads size does not match optimizer state");
  for (double g : grads)
    if (!std::isfinite(g)) throw ContractError("Adam: non-finite gradient, update rejected");

  ++step_count_;
  const double c1 = 1.0 - std::pow(beta1_, step_count_);
  const double c2 = 1.0 - std::pow(beta2_, step_count_);
  const double sign = dir == StepDirection::Descend ? -1.0 : 1.0;
  for (std::size_t i = 0; i < m_.size(); ++i) {
    const double g = grads[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    params[i] += sign * lr_ * m_hat / (std::sqrt(v_hat) + eps_);
  }
}

double LrSchedule::at(int epoch) const {
  if (epoch < 0) throw ContractError("LrSchedule: epoch must be >= 0");
  const int decays = epoch > start_epoch ? epoch - start_epoch : 0;
  return alpha0 * std::pow(decay, decays);
}

MseResult mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.empty()) throw ContractError("mse_loss: empty input");
  if (pred.size() != target.size()) throw ContractError("mse_loss: length mismatch");
  MseResult r;
  r.grad.resize(pred.size());
  const double n = static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    r.loss += d * d;
    r.grad[i] = 2.0 * d / n;
  }
  r.loss /= n;
  return r;
}

double l2_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

}  // namespace bilevel_rl
