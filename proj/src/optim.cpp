#include "offpol/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace offpol::ad {

Adam::Adam(std::vector<Param*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Param* p : params_) {
    m_.emplace_back(p->value.rows, p->value.cols);
    v_.emplace_back(p->value.rows, p->value.cols);
  }
}

void Adam::apply(double direction) {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    if (!p.grad.all_finite())
      throw std::runtime_error("Adam: non-finite gradient for parameter '" + p.name +
                               "' at step " + std::to_string(step_count_));
    for (int k = 0; k < p.value.size(); ++k) {
      const double g = p.grad.v[k];
      m_[i].v[k] = cfg_.beta1 * m_[i].v[k] + (1.0 - cfg_.beta1) * g;
      v_[i].v[k] = cfg_.beta2 * v_[i].v[k] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m_[i].v[k] / bc1;
      const double vhat = v_[i].v[k] / bc2;
      p.value.v[k] += direction * cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p.zero_grad();
  }
}

}  // namespace offpol::ad
