#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bgn/layers.hpp"

namespace bgn {

enum class Variant { kBgn, kBan, kSdp };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);  // throws UsageError

struct ModelConfig {
  int c = 32;            // question feature dim C
  int d_obj = 12;        // object feature dim D after projection
  int d_raw = 12;        // raw object feature dim
  int k = 32;            // joint embedding dim K
  int k_prime = 32;      // attention embedding dim K'
  int rank = 3;          // bilinear rank d
  int glimpses = 4;      // g per graph
  int layers = 3;        // L
  int max_words = 15;    // m
  int max_objects = 16;  // n
  int vocab_size = 0;
  int answer_count = 0;
  double dropout_p = 0.2;
  Variant variant = Variant::kBgn;
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

class ParamRegistry {
 public:
  Tensor add(const std::string& name, Tensor t);
  const std::vector<NamedParam>& items() const { return items_; }
  std::vector<NamedParam>& items() { return items_; }
  const Tensor* find(const std::string& name) const;
  void zero_grad();
  std::size_t total_size() const;

 private:
  std::vector<NamedParam> items_;
};

// y_i = min(count_i / 3, 1); answers not in the vocabulary are dropped.
std::vector<double> soft_targets(const std::map<std::string, int>& counts,
                                 const std::vector<std::string>& answers);

// Argmax over logits, ties broken toward the lowest index.
int predict(const Tensor& scores);

// End-to-end network: token/position embedding encoder, optional object
// projection, the stacked graph layers of the configured variant, and the
// two-layer classifier head.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ParamRegistry& params() { return params_; }
  const ParamRegistry& params() const { return params_; }

  // {C,m}; padded positions come out as zero columns.
  Tensor encode_question(const std::vector<int>& token_ids,
                         const Mask& q_mask) const;

  // raw is n x d_raw row-major; returns {D,n} with padded columns zeroed.
  Tensor encode_objects(const std::vector<double>& raw,
                        const Mask& v_mask) const;

  // Readout + two-layer MLP head over the final node matrix {C,m}.
  Tensor classify(const Tensor& o_final, const Mask& q_mask,
                  const DropoutCfg& drop = {}) const;

  // Full forward pass to answer logits {answer_count, 1}.
  Tensor forward_scores(const std::vector<int>& token_ids, const Mask& q_mask,
                        const std::vector<double>& raw_objects,
                        const Mask& v_mask, const DropoutCfg& drop = {},
                        LayerTrace* trace = nullptr) const;

 private:
  Tensor head(const Tensor& readout, const DropoutCfg& drop) const;

  ModelConfig cfg_;
  ParamRegistry params_;

  Tensor tok_emb_;  // {vocab, C}
  Tensor pos_emb_;  // {m, C}
  Tensor enc_dir_, enc_gain_, enc_bias_;
  Tensor obj_w_, obj_b_;  // present when d_raw != d_obj
  std::vector<StackLayerParams> stack_;     // bgn / sdp variants
  std::vector<GraphLayerParams> ban_;       // ban baseline
  Tensor fc1_dir_, fc1_gain_, fc1_bias_;
  Tensor fc2_dir_, fc2_gain_, fc2_bias_;
};

}  // namespace bgn
