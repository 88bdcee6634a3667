#include "flowi2i/optimizer.hpp"

#include <cmath>

#include "flowi2i/errors.hpp"

namespace flowi2i {

double WarmupSchedule::lr_at(long step) const {
  if (step < 1) throw ParameterError("schedule steps are 1-based");
  if (warmup_steps > 0 && step < warmup_steps) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  return base_lr;
}

double global_grad_norm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.cast<double>().squaredNorm();
  return std::sqrt(sq);
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  if (!(max_norm > 0.0)) throw ParameterError("clip_grad_norm: max_norm must be positive");
  const double norm = global_grad_norm(params);
  if (norm <= max_norm) return norm;
  const auto factor = static_cast<float>(max_norm / (norm + 1e-6));
  for (Parameter* p : params) p->grad *= factor;
  return global_grad_norm(params);
}

Adam::Adam(std::vector<Parameter*> params) : Adam(std::move(params), Options{}) {}

Adam::Adam(std::vector<Parameter*> params, Options options) : params_(std::move(params)), opt_(options) {
  for (const Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<float>(opt_.beta1);
  const auto b2 = static_cast<float>(opt_.beta2);
  const auto step_size = static_cast<float>(lr / bc1);
  const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const auto eps = static_cast<float>(opt_.eps);
  const auto decay = static_cast<float>(lr * opt_.weight_decay);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    m_[i] = b1 * m_[i] + (1.0f - b1) * p.grad;
    v_[i] = b2 * v_[i] + (1.0f - b2) * p.grad.cwiseAbs2();
    if (decay != 0.0f) p.value *= (1.0f - decay);
    p.value.array() -= step_size * m_[i].array() / (v_[i].array().sqrt() * inv_sqrt_bc2 + eps);
  }
}

}  // namespace flowi2i
