#pragma once

#include <vector>

#include "bgn/bilinear.hpp"
#include "bgn/tensor.hpp"

namespace bgn {

// Validity mask over a node axis; true marks a real token/object.
struct Mask {
  std::vector<std::uint8_t> valid;

  Mask() = default;
  explicit Mask(std::vector<std::uint8_t> v) : valid(std::move(v)) {}
  static Mask all(int n) { return Mask(std::vector<std::uint8_t>(n, 1)); }

  int size() const { return static_cast<int>(valid.size()); }
  bool at(int i) const { return valid[i] != 0; }
  bool any() const {
    for (auto b : valid)
      if (b) return true;
    return false;
  }
  int count() const {
    int c = 0;
    for (auto b : valid) c += b != 0;
    return c;
  }
};

// Per-glimpse normalized attention weights plus the raw logits they came
// from. Joint mode sums to one over the whole matrix, per-row mode over
// each unmasked row; masked entries are exactly zero either way.
struct AttentionMap {
  std::vector<Tensor> weights;
  std::vector<Tensor> logits;
  Mask row_mask;
  Mask col_mask;
  SoftmaxMode mode = SoftmaxMode::kJoint;
  bool had_empty_domain = false;

  int glimpses() const { return static_cast<int>(weights.size()); }
};

// mask(i,j) = rows.valid[i] && cols.valid[j]
BoolMat pair_mask(const Mask& rows, const Mask& cols);

// Joint-softmax cross-modal maps, one per glimpse, logits all computed
// from the given query matrix. Throws if either side is fully masked.
AttentionMap image_graph_map(const Tensor& q_like, const Tensor& v,
                             const BilinearLogitParams& params,
                             const Mask& q_mask, const Mask& v_mask);

// Row-softmax self-attention maps over the question side; padded columns
// are masked out and padded rows come back as zero rows.
AttentionMap question_graph_map(const Tensor& h,
                                const BilinearLogitParams& params,
                                const Mask& q_mask);

// Scaled dot-product self-attention map (single head): row softmax of
// (Wq^T H)^T (Wk^T H) / sqrt(K'). Same masking as question_graph_map.
AttentionMap sdp_map(const Tensor& h, const Tensor& wq, const Tensor& wk,
                     const Mask& q_mask);

}  // namespace bgn
