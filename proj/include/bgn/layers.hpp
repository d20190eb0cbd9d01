#pragma once

#include <vector>

#include "bgn/attention.hpp"
#include "bgn/bilinear.hpp"

namespace bgn {

// Parameters of one graph (image or question): shared bilinear logit
// projections with per-glimpse p, and per-glimpse value/residual weights.
struct GraphLayerParams {
  BilinearLogitParams logit;
  std::vector<BgnValueParams> value;  // one per glimpse
  std::vector<Tensor> residual_proj;  // one per glimpse, {C, K}

  int glimpses() const { return static_cast<int>(value.size()); }
};

// One scaled dot-product glimpse: query/key/value projections {C,K'} /
// {C,K'} / {C,K} and the residual projection {C,K}.
struct SdpGlimpseParams {
  Tensor wq, wk, wv, residual_proj;
};
struct SdpLayerParams {
  std::vector<SdpGlimpseParams> glimpse;
  int glimpses() const { return static_cast<int>(glimpse.size()); }
};

enum class QuestionKind { kBilinear, kSdp };

// One stacked layer: image graph followed by a question graph of either
// kind (the BAN baseline skips the question side entirely).
struct StackLayerParams {
  GraphLayerParams image;
  QuestionKind question_kind = QuestionKind::kBilinear;
  GraphLayerParams question;  // used when question_kind == kBilinear
  SdpLayerParams sdp;         // used when question_kind == kSdp
};

struct LayerStep {
  AttentionMap image;
  AttentionMap question;  // empty for the BAN baseline
  Tensor h;
  Tensor o;  // undefined for the BAN baseline
};
struct LayerTrace {
  std::vector<LayerStep> layers;
};

struct ImageLayerOut {
  Tensor h;
  AttentionMap maps;
  Tensor last_z;   // {K,m} node update of the final glimpse
  Tensor last_gb;  // {m,1} row sums of the final glimpse's map
};

// Glimpse iteration of the image graph: logits are recomputed from the
// running query at every glimpse, the map is row-decomposed, and each
// glimpse's projected update is added residually.
ImageLayerOut image_graph_forward(const Tensor& q_in, const Tensor& v,
                                  const GraphLayerParams& params,
                                  const Mask& q_mask, const Mask& v_mask,
                                  const DropoutCfg& drop = {});

struct QuestionLayerOut {
  Tensor o;
  AttentionMap maps;
};

// Same residual glimpse iteration on the question side; the bilinear map
// operands come from the running state while the value source stays fixed
// at the layer input h.
QuestionLayerOut question_graph_forward(const Tensor& h,
                                        const GraphLayerParams& params,
                                        const Mask& q_mask,
                                        const DropoutCfg& drop = {});

// Ablation variant: per-row scaled dot-product attention with linear value
// mixing instead of the bilinear node update.
QuestionLayerOut sdp_question_forward(const Tensor& h,
                                      const SdpLayerParams& params,
                                      const Mask& q_mask,
                                      const DropoutCfg& drop = {});

// L alternating image/question layers; layer i's image graph takes the
// previous layer's question output as query.
Tensor stack_forward(const Tensor& q, const Tensor& v,
                     const std::vector<StackLayerParams>& layers,
                     const Mask& q_mask, const Mask& v_mask,
                     const DropoutCfg& drop = {}, LayerTrace* trace = nullptr);

// Image-graph-only stack with the summarization readout of the final
// glimpse; returns the graph embedding z {K,1}.
Tensor ban_baseline_forward(const Tensor& q, const Tensor& v,
                            const std::vector<GraphLayerParams>& layers,
                            const Mask& q_mask, const Mask& v_mask,
                            const DropoutCfg& drop = {},
                            LayerTrace* trace = nullptr);

// stack_forward with the question side forced to scaled dot-product.
Tensor sdp_variant_forward(const Tensor& q, const Tensor& v,
                           const std::vector<StackLayerParams>& layers,
                           const Mask& q_mask, const Mask& v_mask,
                           const DropoutCfg& drop = {},
                           LayerTrace* trace = nullptr);

}  // namespace bgn
