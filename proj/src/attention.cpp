#include "bgn/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace bgn {

BoolMat pair_mask(const Mask& rows, const Mask& cols) {
  BoolMat m(rows.size(), cols.size(), false);
  for (int i = 0; i < rows.size(); ++i) {
    if (!rows.at(i)) continue;
    for (int j = 0; j < cols.size(); ++j) m.set(i, j, cols.at(j));
  }
  return m;
}

AttentionMap image_graph_map(const Tensor& q_like, const Tensor& v,
                             const BilinearLogitParams& params,
                             const Mask& q_mask, const Mask& v_mask) {
  if (!q_mask.any() || !v_mask.any()) {
    throw std::invalid_argument("image_graph_map: fully masked input");
  }
  AttentionMap map;
  map.mode = SoftmaxMode::kJoint;
  map.row_mask = q_mask;
  map.col_mask = v_mask;
  const BoolMat mm = pair_mask(q_mask, v_mask);
  for (int j = 0; j < params.glimpses(); ++j) {
    Tensor lg = bilinear_logits(q_like, v, params, j);
    bool empty = false;
    map.weights.push_back(masked_softmax(lg, mm, SoftmaxMode::kJoint, &empty));
    map.logits.push_back(lg);
    map.had_empty_domain |= empty;
  }
  return map;
}

AttentionMap question_graph_map(const Tensor& h,
                                const BilinearLogitParams& params,
                                const Mask& q_mask) {
  AttentionMap map;
  map.mode = SoftmaxMode::kPerRow;
  map.row_mask = q_mask;
  map.col_mask = q_mask;
  const BoolMat mm = pair_mask(q_mask, q_mask);
  for (int j = 0; j < params.glimpses(); ++j) {
    Tensor lg = bilinear_logits(h, h, params, j);
    bool empty = false;
    map.weights.push_back(masked_softmax(lg, mm, SoftmaxMode::kPerRow, &empty));
    map.logits.push_back(lg);
    map.had_empty_domain |= empty;
  }
  return map;
}

AttentionMap sdp_map(const Tensor& h, const Tensor& wq, const Tensor& wk,
                     const Mask& q_mask) {
  AttentionMap map;
  map.mode = SoftmaxMode::kPerRow;
  map.row_mask = q_mask;
  map.col_mask = q_mask;
  Tensor queries = matmul_tn(wq, h);  // {K', m}
  Tensor keys = matmul_tn(wk, h);
  Tensor lg = scale(matmul_tn(queries, keys),
                    1.0 / std::sqrt(static_cast<double>(wq.cols())));
  bool empty = false;
  map.weights.push_back(
      masked_softmax(lg, pair_mask(q_mask, q_mask), SoftmaxMode::kPerRow,
                     &empty));
  map.logits.push_back(lg);
  map.had_empty_domain = empty;
  return map;
}

}  // namespace bgn
