#pragma once

#include <vector>

#include "bgn/tensor.hpp"

namespace bgn {

// Low-rank bilinear logit parameters. The d rank slices of the two input
// projections are shared across glimpses; only the pooling vector p is
// per-glimpse. Bias rows are optional ({1,K'} when present, empty tensors
// otherwise) so the pure bilinear identities stay available to tests.
struct BilinearLogitParams {
  std::vector<Tensor> u_slices;  // d x {C, K'}
  std::vector<Tensor> v_slices;  // d x {D, K'}
  std::vector<Tensor> u_bias;    // d x {1, K'} or empty
  std::vector<Tensor> v_bias;
  std::vector<Tensor> p;  // g x {1, K'}

  int rank() const { return static_cast<int>(u_slices.size()); }
  int glimpses() const { return static_cast<int>(p.size()); }
};

// Value-side projections of the node update.
struct BgnValueParams {
  Tensor u;       // {C, K}
  Tensor v;       // {D, K}
  Tensor u_bias;  // {1, K} or empty
  Tensor v_bias;
};

// Dropout wiring for value features; disabled by default so the core ops
// remain pure functions. Graph layers enable it during training.
struct DropoutCfg {
  double p = 0.0;
  bool train = false;
  Rng* rng = nullptr;
  bool on() const { return train && p > 0.0 && rng != nullptr; }
};

// logit(i,j) = sum_r p_glimpse^T (relu(U'_r^T q_i) o relu(V'_r^T v_j)),
// no normalization. q is {C,m}, v is {D,n}, result {m,n}.
Tensor bilinear_logits(const Tensor& q, const Tensor& v,
                       const BilinearLogitParams& params, int glimpse);

// Node update: output column i = relu(U^T x_i) o (sum_j g(i,j) relu(V^T y_j)).
// x {Cx,m}, y {Dy,n}, g {m,n}; returns {K,m}. g is applied as given —
// normalizing it is the caller's business (see decompose_map).
Tensor bgn_update(const Tensor& x, const Tensor& y, const Tensor& g,
                  const BgnValueParams& params, const DropoutCfg& drop = {});

// Splits a non-negative map into row sums b {m,1} and row-normalized
// weights a {m,n}; an all-zero row yields a zero row in a.
struct DecomposedMap {
  Tensor a;
  Tensor b;
};
DecomposedMap decompose_map(const Tensor& g);

// Graph readout z = Z' g_b. z_prime {K,m}, g_b {m,1}, result {K,1}.
Tensor summarize(const Tensor& z_prime, const Tensor& g_b);

}  // namespace bgn
