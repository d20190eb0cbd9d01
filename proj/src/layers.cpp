#include "bgn/layers.hpp"

#include <stdexcept>

namespace bgn {

namespace {

Tensor maybe_drop(const Tensor& t, const DropoutCfg& drop) {
  return drop.on() ? dropout(t, drop.p, true, *drop.rng) : t;
}

}  // namespace

ImageLayerOut image_graph_forward(const Tensor& q_in, const Tensor& v,
                                  const GraphLayerParams& params,
                                  const Mask& q_mask, const Mask& v_mask,
                                  const DropoutCfg& drop) {
  if (params.glimpses() < 1) {
    throw std::invalid_argument("image_graph_forward: no glimpses");
  }
  if (!q_mask.any() || !v_mask.any()) {
    throw std::invalid_argument("image_graph_forward: fully masked input");
  }
  const BoolMat mm = pair_mask(q_mask, v_mask);
  ImageLayerOut out;
  out.maps.mode = SoftmaxMode::kJoint;
  out.maps.row_mask = q_mask;
  out.maps.col_mask = v_mask;

  Tensor h = q_in;
  for (int j = 0; j < params.glimpses(); ++j) {
    Tensor lg = bilinear_logits(h, v, params.logit, j);
    bool empty = false;
    Tensor w = masked_softmax(lg, mm, SoftmaxMode::kJoint, &empty);
    out.maps.had_empty_domain |= empty;
    DecomposedMap dec = decompose_map(w);
    Tensor z = bgn_update(h, v, dec.a, params.value[j], drop);  // {K,m}
    Tensor update = maybe_drop(matmul(params.residual_proj[j], z), drop);
    h = add(update, h);
    out.maps.logits.push_back(lg);
    out.maps.weights.push_back(w);
    out.last_z = z;
    out.last_gb = dec.b;
  }
  out.h = h;
  return out;
}

QuestionLayerOut question_graph_forward(const Tensor& h,
                                        const GraphLayerParams& params,
                                        const Mask& q_mask,
                                        const DropoutCfg& drop) {
  if (params.glimpses() < 1) {
    throw std::invalid_argument("question_graph_forward: no glimpses");
  }
  const BoolMat mm = pair_mask(q_mask, q_mask);
  QuestionLayerOut out;
  out.maps.mode = SoftmaxMode::kPerRow;
  out.maps.row_mask = q_mask;
  out.maps.col_mask = q_mask;

  Tensor o = h;
  for (int j = 0; j < params.glimpses(); ++j) {
    Tensor lg = bilinear_logits(o, o, params.logit, j);
    bool empty = false;
    Tensor w = masked_softmax(lg, mm, SoftmaxMode::kPerRow, &empty);
    out.maps.had_empty_domain |= empty;
    DecomposedMap dec = decompose_map(w);
    // Value source stays the layer input h across glimpses.
    Tensor z = bgn_update(o, h, dec.a, params.value[j], drop);
    Tensor update = maybe_drop(matmul(params.residual_proj[j], z), drop);
    o = add(update, o);
    out.maps.logits.push_back(lg);
    out.maps.weights.push_back(w);
  }
  out.o = o;
  return out;
}

QuestionLayerOut sdp_question_forward(const Tensor& h,
                                      const SdpLayerParams& params,
                                      const Mask& q_mask,
                                      const DropoutCfg& drop) {
  if (params.glimpses() < 1) {
    throw std::invalid_argument("sdp_question_forward: no glimpses");
  }
  QuestionLayerOut out;
  out.maps.mode = SoftmaxMode::kPerRow;
  out.maps.row_mask = q_mask;
  out.maps.col_mask = q_mask;

  Tensor o = h;
  for (int j = 0; j < params.glimpses(); ++j) {
    const SdpGlimpseParams& gp = params.glimpse[j];
    AttentionMap gm = sdp_map(o, gp.wq, gp.wk, q_mask);
    Tensor w = gm.weights[0];
    Tensor values = maybe_drop(matmul_tn(gp.wv, h), drop);  // {K, m}
    // Column i mixes value columns by row i of the map.
    Tensor mixed = matmul(values, transpose(w));
    Tensor update = maybe_drop(matmul(gp.residual_proj, mixed), drop);
    o = add(update, o);
    out.maps.had_empty_domain |= gm.had_empty_domain;
    out.maps.logits.push_back(gm.logits[0]);
    out.maps.weights.push_back(w);
  }
  out.o = o;
  return out;
}

namespace {

Tensor run_stack(const Tensor& q, const Tensor& v,
                 const std::vector<StackLayerParams>& layers,
                 const Mask& q_mask, const Mask& v_mask,
                 const DropoutCfg& drop, LayerTrace* trace,
                 const QuestionKind* forced_kind) {
  if (layers.empty()) {
    throw std::invalid_argument("stack_forward: empty layer list");
  }
  Tensor x = q;
  for (const StackLayerParams& layer : layers) {
    ImageLayerOut img =
        image_graph_forward(x, v, layer.image, q_mask, v_mask, drop);
    const QuestionKind kind = forced_kind ? *forced_kind : layer.question_kind;
    QuestionLayerOut qu =
        kind == QuestionKind::kBilinear
            ? question_graph_forward(img.h, layer.question, q_mask, drop)
            : sdp_question_forward(img.h, layer.sdp, q_mask, drop);
    x = qu.o;
    if (trace) {
      trace->layers.push_back(
          {std::move(img.maps), std::move(qu.maps), img.h, x});
    }
  }
  return x;
}

}  // namespace

Tensor stack_forward(const Tensor& q, const Tensor& v,
                     const std::vector<StackLayerParams>& layers,
                     const Mask& q_mask, const Mask& v_mask,
                     const DropoutCfg& drop, LayerTrace* trace) {
  return run_stack(q, v, layers, q_mask, v_mask, drop, trace, nullptr);
}

Tensor ban_baseline_forward(const Tensor& q, const Tensor& v,
                            const std::vector<GraphLayerParams>& layers,
                            const Mask& q_mask, const Mask& v_mask,
                            const DropoutCfg& drop, LayerTrace* trace) {
  if (layers.empty()) {
    throw std::invalid_argument("ban_baseline_forward: empty layer list");
  }
  Tensor x = q;
  Tensor last_z, last_gb;
  for (const GraphLayerParams& layer : layers) {
    ImageLayerOut img = image_graph_forward(x, v, layer, q_mask, v_mask, drop);
    x = img.h;
    last_z = img.last_z;
    last_gb = img.last_gb;
    if (trace) {
      trace->layers.push_back({std::move(img.maps), AttentionMap{}, x, {}});
    }
  }
  return summarize(last_z, last_gb);
}

Tensor sdp_variant_forward(const Tensor& q, const Tensor& v,
                           const std::vector<StackLayerParams>& layers,
                           const Mask& q_mask, const Mask& v_mask,
                           const DropoutCfg& drop, LayerTrace* trace) {
  const QuestionKind kind = QuestionKind::kSdp;
  return run_stack(q, v, layers, q_mask, v_mask, drop, trace, &kind);
}

}  // namespace bgn
