#include "bgn/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "bgn/errors.hpp"

namespace bgn {

double lr_at_epoch(int epoch, const Schedule& s) {
  if (epoch < 1) {
    throw std::invalid_argument("lr_at_epoch: epoch must be >= 1, got " +
                                std::to_string(epoch));
  }
  const double warm = s.base_lr + s.warm_increment * (epoch - 1);
  if (epoch <= s.plateau_end_epoch) return std::min(warm, s.warm_target);
  const int periods = (epoch - s.plateau_end_epoch - 1) / s.decay_every + 1;
  double lr = s.warm_target;
  for (int i = 0; i < periods; ++i) lr *= s.decay_factor;
  return std::max(lr, s.floor_lr);
}

void Adamax::step(ParamRegistry& params, double lr) {
  auto& items = params.items();
  if (m_.size() != items.size()) {
    m_.resize(items.size());
    u_.resize(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
      m_[i].assign(items[i].tensor.numel(), 0.0);
      u_[i].assign(items[i].tensor.numel(), 0.0);
    }
  }
  ++step_;
  const double correction = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double rate = lr / correction;
  for (std::size_t pi = 0; pi < items.size(); ++pi) {
    Tensor& t = items[pi].tensor;
    const bool has_grad = t.has_grad();
    const double* g = has_grad ? t.grad().data() : nullptr;
    double* theta = t.data();
    double* m = m_[pi].data();
    double* u = u_[pi].data();
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double gi = has_grad ? g[i] : 0.0;
      if (!std::isfinite(gi)) {
        throw NumericError("non-finite gradient in parameter '" +
                           items[pi].name + "'");
      }
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      u[i] = std::max(cfg_.beta2 * u[i], std::fabs(gi));
      theta[i] -= rate * m[i] / (u[i] + cfg_.epsilon);
    }
  }
}

}  // namespace bgn
