#pragma once

// Independent scalar-loop reference implementations used only by tests.
// These deliberately share no code with the tensor layer: everything is
// element reads and explicit loops.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bgn/attention.hpp"
#include "bgn/bilinear.hpp"
#include "bgn/layers.hpp"
#include "bgn/rng.hpp"
#include "bgn/synth.hpp"

namespace bgn::testing {

inline double relu_s(double x) { return x > 0.0 ? x : 0.0; }

inline Tensor random_tensor(int rows, int cols, Rng& rng, double lo = -1.0,
                            double hi = 1.0, bool requires_grad = false) {
  Tensor t = Tensor::zeros(rows, cols, requires_grad);
  for (std::size_t i = 0; i < t.numel(); ++i)
    t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// z_k = sum_i sum_j G(i,j) * relu(q_i^T U_k) * relu(V_k^T v_j), the
// pre-reformulation joint embedding, written as a plain triple loop.
inline std::vector<double> eq6_oracle(const Tensor& q, const Tensor& v,
                                      const Tensor& g,
                                      const BgnValueParams& params) {
  const int m = q.cols(), n = v.cols(), k_dim = params.u.cols();
  const int c = q.rows(), d = v.rows();
  std::vector<double> z(k_dim, 0.0);
  for (int k = 0; k < k_dim; ++k) {
    for (int i = 0; i < m; ++i) {
      double qf = 0.0;
      for (int r = 0; r < c; ++r) qf += q.at(r, i) * params.u.at(r, k);
      qf = relu_s(qf);
      for (int j = 0; j < n; ++j) {
        double vf = 0.0;
        for (int r = 0; r < d; ++r) vf += v.at(r, j) * params.v.at(r, k);
        z[k] += g.at(i, j) * qf * relu_s(vf);
      }
    }
  }
  return z;
}

// Scalar bilinear logit for one (i, j) pair.
inline double bilinear_logit_s(const Tensor& q, const Tensor& v, int i, int j,
                               const BilinearLogitParams& params,
                               int glimpse) {
  double total = 0.0;
  for (int r = 0; r < params.rank(); ++r) {
    const Tensor& u = params.u_slices[r];
    const Tensor& w = params.v_slices[r];
    for (int k = 0; k < u.cols(); ++k) {
      double a = 0.0, b = 0.0;
      for (int c = 0; c < q.rows(); ++c) a += q.at(c, i) * u.at(c, k);
      for (int c = 0; c < v.rows(); ++c) b += v.at(c, j) * w.at(c, k);
      total += params.p[glimpse].at(0, k) * relu_s(a) * relu_s(b);
    }
  }
  return total;
}

// Scalar reference of one bilinear question-graph layer (bias-free
// params): per glimpse, per-row masked softmax of self-attention logits
// from the running state, node update with value source h, residual add.
inline std::vector<std::vector<double>> question_layer_reference(
    const Tensor& h, const GraphLayerParams& params, const Mask& q_mask) {
  const int m = h.cols(), c = h.rows();
  std::vector<std::vector<double>> o(c, std::vector<double>(m));
  for (int r = 0; r < c; ++r)
    for (int t = 0; t < m; ++t) o[r][t] = h.at(r, t);

  for (int g = 0; g < params.glimpses(); ++g) {
    Tensor running = Tensor::zeros(c, m);
    for (int r = 0; r < c; ++r)
      for (int t = 0; t < m; ++t) running.at(r, t) = o[r][t];

    // Per-row masked softmax, then row renormalization (a no-op on already
    // row-normalized maps except for masked rows).
    std::vector<std::vector<double>> w(m, std::vector<double>(m, 0.0));
    for (int i = 0; i < m; ++i) {
      if (!q_mask.at(i)) continue;
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < m; ++j) {
        if (!q_mask.at(j)) continue;
        mx = std::max(mx, bilinear_logit_s(running, running, i, j,
                                           params.logit, g));
      }
      double z = 0.0;
      for (int j = 0; j < m; ++j) {
        if (!q_mask.at(j)) continue;
        w[i][j] = std::exp(
            bilinear_logit_s(running, running, i, j, params.logit, g) - mx);
        z += w[i][j];
      }
      for (int j = 0; j < m; ++j) w[i][j] /= z;
      double row_sum = 0.0;
      for (int j = 0; j < m; ++j) row_sum += w[i][j];
      if (row_sum > 0.0) {
        for (int j = 0; j < m; ++j) w[i][j] /= row_sum;
      }
    }

    const BgnValueParams& vp = params.value[g];
    const int k_dim = vp.u.cols();
    // z'[k][i] = relu(U^T running_i)_k * sum_j w[i][j] relu(V^T h_j)_k
    std::vector<std::vector<double>> zp(k_dim, std::vector<double>(m, 0.0));
    for (int k = 0; k < k_dim; ++k) {
      for (int i = 0; i < m; ++i) {
        double qf = 0.0;
        for (int r = 0; r < c; ++r) qf += running.at(r, i) * vp.u.at(r, k);
        qf = relu_s(qf);
        double agg = 0.0;
        for (int j = 0; j < m; ++j) {
          double vf = 0.0;
          for (int r = 0; r < c; ++r) vf += h.at(r, j) * vp.v.at(r, k);
          agg += w[i][j] * relu_s(vf);
        }
        zp[k][i] = qf * agg;
      }
    }
    for (int r = 0; r < c; ++r) {
      for (int i = 0; i < m; ++i) {
        double upd = 0.0;
        for (int k = 0; k < k_dim; ++k)
          upd += params.residual_proj[g].at(r, k) * zp[k][i];
        o[r][i] += upd;
      }
    }
  }
  return o;
}

// Scalar reference of one SDP question step (Eq.-7-style): per glimpse,
// row softmax of scaled projected dot products from the running state,
// linear value mix of h, residual add.
inline std::vector<std::vector<double>> sdp_layer_reference(
    const Tensor& h, const SdpLayerParams& params, const Mask& q_mask) {
  const int m = h.cols(), c = h.rows();
  std::vector<std::vector<double>> o(c, std::vector<double>(m));
  for (int r = 0; r < c; ++r)
    for (int t = 0; t < m; ++t) o[r][t] = h.at(r, t);

  for (int g = 0; g < params.glimpses(); ++g) {
    const SdpGlimpseParams& gp = params.glimpse[g];
    const int kp = gp.wq.cols(), kv = gp.wv.cols();
    std::vector<std::vector<double>> qp(kp, std::vector<double>(m, 0.0));
    std::vector<std::vector<double>> kpv(kp, std::vector<double>(m, 0.0));
    for (int k = 0; k < kp; ++k) {
      for (int t = 0; t < m; ++t) {
        for (int r = 0; r < c; ++r) {
          qp[k][t] += gp.wq.at(r, k) * o[r][t];
          kpv[k][t] += gp.wk.at(r, k) * o[r][t];
        }
      }
    }
    std::vector<std::vector<double>> w(m, std::vector<double>(m, 0.0));
    const double scale_factor = 1.0 / std::sqrt(static_cast<double>(kp));
    for (int i = 0; i < m; ++i) {
      if (!q_mask.at(i)) continue;
      double mx = -std::numeric_limits<double>::infinity();
      std::vector<double> logits(m, 0.0);
      for (int j = 0; j < m; ++j) {
        if (!q_mask.at(j)) continue;
        for (int k = 0; k < kp; ++k) logits[j] += qp[k][i] * kpv[k][j];
        logits[j] *= scale_factor;
        mx = std::max(mx, logits[j]);
      }
      double z = 0.0;
      for (int j = 0; j < m; ++j) {
        if (!q_mask.at(j)) continue;
        w[i][j] = std::exp(logits[j] - mx);
        z += w[i][j];
      }
      for (int j = 0; j < m; ++j) w[i][j] /= z;
    }
    // values from h, mixed by w, projected, residual-added
    std::vector<std::vector<double>> val(kv, std::vector<double>(m, 0.0));
    for (int k = 0; k < kv; ++k)
      for (int t = 0; t < m; ++t)
        for (int r = 0; r < c; ++r) val[k][t] += gp.wv.at(r, k) * h.at(r, t);
    for (int r = 0; r < c; ++r) {
      for (int i = 0; i < m; ++i) {
        double upd = 0.0;
        for (int k = 0; k < kv; ++k) {
          double mixed = 0.0;
          for (int j = 0; j < m; ++j) mixed += w[i][j] * val[k][j];
          upd += gp.residual_proj.at(r, k) * mixed;
        }
        o[r][i] += upd;
      }
    }
  }
  return o;
}

// Brute-force re-derivation of a question's answer from the scene by
// scanning all objects / pairs / triples and re-applying the predicates.
// Returns nullopt when the described question is ambiguous on the scene.
inline std::optional<std::string> brute_force_answer(
    const SceneSpec& scene, const std::vector<std::string>& words,
    const SynthConfig& cfg) {
  auto shape_index = [](const std::string& w) {
    for (std::size_t i = 0; i < kShapeNames.size(); ++i)
      if (kShapeNames[i] == w) return static_cast<int>(i);
    return -1;
  };
  auto color_index = [](const std::string& w) {
    for (std::size_t i = 0; i < kColorNames.size(); ++i)
      if (kColorNames[i] == w) return static_cast<int>(i);
    return -1;
  };
  const int n = static_cast<int>(scene.objects.size());

  if (words.size() == 6 && words[1] == "color") {
    // what color is the <shape> ?
    const int shape = shape_index(words[4]);
    std::vector<int> matches;
    for (int i = 0; i < n; ++i)
      if (scene.objects[i].shape == shape) matches.push_back(i);
    if (matches.size() != 1) return std::nullopt;
    return kColorNames[scene.objects[matches[0]].color];
  }

  const int color = color_index(words[words.size() - 3]);
  const int shape = shape_index(words[words.size() - 2]);
  std::vector<int> refs;
  for (int i = 0; i < n; ++i) {
    if (scene.objects[i].color == color && scene.objects[i].shape == shape)
      refs.push_back(i);
  }
  if (refs.size() != 1) return std::nullopt;
  const int ref = refs[0];

  std::vector<int> lefts;
  for (int i = 0; i < n; ++i) {
    if (i == ref) continue;
    if (scene.objects[i].x < scene.objects[ref].x &&
        std::fabs(scene.objects[i].y - scene.objects[ref].y) < cfg.left_dy) {
      lefts.push_back(i);
    }
  }
  if (lefts.size() != 1) return std::nullopt;
  const int left = lefts[0];

  if (words.size() == 9) {
    // what shape is left of the <color> <shape> ?
    return kShapeNames[scene.objects[left].shape];
  }

  // what color is the object nearest to the thing left of the <color>
  // <shape> ? -- scan all (candidate, other) pairs for the strict nearest.
  int nearest = -1;
  for (int i = 0; i < n; ++i) {
    if (i == left) continue;
    const double di = std::hypot(scene.objects[i].x - scene.objects[left].x,
                                 scene.objects[i].y - scene.objects[left].y);
    bool strictly_nearest = true;
    for (int j = 0; j < n; ++j) {
      if (j == left || j == i) continue;
      const double dj = std::hypot(scene.objects[j].x - scene.objects[left].x,
                                   scene.objects[j].y - scene.objects[left].y);
      if (dj - di < cfg.nearest_margin) {
        strictly_nearest = false;
        break;
      }
    }
    if (strictly_nearest) {
      nearest = i;
      break;
    }
  }
  if (nearest < 0) return std::nullopt;
  return kColorNames[scene.objects[nearest].color];
}

}  // namespace bgn::testing
