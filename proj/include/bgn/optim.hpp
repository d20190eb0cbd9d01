#pragma once

#include <cstdint>
#include <vector>

#include "bgn/model.hpp"

namespace bgn {

// Warm-up / plateau / decay learning-rate schedule. Defaults are the
// paper-scale values; desk-scale runs compress them through config keys.
struct Schedule {
  double base_lr = 0.001;
  double warm_increment = 0.001;
  double warm_target = 0.004;
  int plateau_end_epoch = 10;   // last epoch still at warm_target
  double decay_factor = 0.25;
  int decay_every = 2;
  double floor_lr = 0.00025;
};

// epoch is 1-based; throws std::invalid_argument on epoch < 1.
double lr_at_epoch(int epoch, const Schedule& s);

struct AdamaxConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adamax: m <- b1*m + (1-b1)*g; u <- max(b2*u, |g|);
// theta <- theta - lr/(1-b1^t) * m/(u+eps).
class Adamax {
 public:
  explicit Adamax(const AdamaxConfig& cfg = {}) : cfg_(cfg) {}

  // One update over every registered parameter; missing grads count as
  // zero. Throws NumericError naming the parameter on non-finite grads.
  void step(ParamRegistry& params, double lr);

  std::int64_t step_count() const { return step_; }
  const AdamaxConfig& config() const { return cfg_; }

  // Exposed for checkpointing; buffers are keyed by registry order.
  std::vector<std::vector<double>>& m_buffers() { return m_; }
  std::vector<std::vector<double>>& u_buffers() { return u_; }
  const std::vector<std::vector<double>>& m_buffers() const { return m_; }
  const std::vector<std::vector<double>>& u_buffers() const { return u_; }
  void set_step_count(std::int64_t s) { step_ = s; }

 private:
  AdamaxConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> u_;
};

}  // namespace bgn
