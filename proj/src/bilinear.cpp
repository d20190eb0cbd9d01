#include "bgn/bilinear.hpp"

#include <stdexcept>
#include <string>

namespace bgn {

namespace {

Tensor projected_features(const Tensor& input, const Tensor& weights,
                          const Tensor& bias, const DropoutCfg& drop) {
  Tensor pre = matmul_tn(input, weights);  // {cols(input), K}
  if (bias.defined()) pre = add(pre, bias);
  Tensor feat = relu(pre);
  if (drop.on()) feat = dropout(feat, drop.p, true, *drop.rng);
  return feat;
}

}  // namespace

Tensor bilinear_logits(const Tensor& q, const Tensor& v,
                       const BilinearLogitParams& params, int glimpse) {
  if (glimpse < 0 || glimpse >= params.glimpses()) {
    throw std::out_of_range("bilinear_logits: glimpse " +
                            std::to_string(glimpse) + " of " +
                            std::to_string(params.glimpses()));
  }
  const int d = params.rank();
  Tensor acc;
  for (int r = 0; r < d; ++r) {
    Tensor a = matmul_tn(q, params.u_slices[r]);  // {m, K'}
    if (!params.u_bias.empty()) a = add(a, params.u_bias[r]);
    a = relu(a);
    a = hadamard(a, params.p[glimpse]);  // p broadcast over rows

    Tensor b = matmul_tn(v, params.v_slices[r]);  // {n, K'}
    if (!params.v_bias.empty()) b = add(b, params.v_bias[r]);
    b = relu(b);

    Tensor term = matmul(a, transpose(b));  // {m, n}
    acc = r == 0 ? term : add(acc, term);
  }
  return acc;
}

Tensor bgn_update(const Tensor& x, const Tensor& y, const Tensor& g,
                  const BgnValueParams& params, const DropoutCfg& drop) {
  if (g.rows() != x.cols() || g.cols() != y.cols()) {
    throw std::invalid_argument(
        "bgn_update: map is " + std::to_string(g.rows()) + "x" +
        std::to_string(g.cols()) + ", expected " + std::to_string(x.cols()) +
        "x" + std::to_string(y.cols()));
  }
  Tensor qf = projected_features(x, params.u, params.u_bias, drop);  // {m, K}
  Tensor vf = projected_features(y, params.v, params.v_bias, drop);  // {n, K}
  Tensor aggregated = matmul(g, vf);                                 // {m, K}
  return transpose(hadamard(qf, aggregated));                        // {K, m}
}

DecomposedMap decompose_map(const Tensor& g) {
  for (std::size_t i = 0; i < g.numel(); ++i) {
    if (g.data()[i] < 0.0) {
      throw std::invalid_argument("decompose_map: negative entry");
    }
  }
  Tensor row_sums = sum_axis(g, 1);  // {m,1}
  Tensor normalized = hadamard(g, reciprocal_or_zero(row_sums));
  return {normalized, row_sums};
}

Tensor summarize(const Tensor& z_prime, const Tensor& g_b) {
  if (z_prime.cols() != g_b.rows() || g_b.cols() != 1) {
    throw std::invalid_argument("summarize: Z' is " +
                                std::to_string(z_prime.rows()) + "x" +
                                std::to_string(z_prime.cols()) + ", G_b is " +
                                std::to_string(g_b.rows()) + "x" +
                                std::to_string(g_b.cols()));
  }
  return matmul(z_prime, g_b);
}

}  // namespace bgn
