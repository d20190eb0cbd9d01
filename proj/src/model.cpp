#include "bgn/model.hpp"

#include <cmath>
#include <stdexcept>

#include "bgn/errors.hpp"

namespace bgn {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kBgn: return "bgn";
    case Variant::kBan: return "ban";
    case Variant::kSdp: return "sdp";
  }
  return "bgn";
}

Variant variant_from_string(const std::string& s) {
  if (s == "bgn") return Variant::kBgn;
  if (s == "ban") return Variant::kBan;
  if (s == "sdp") return Variant::kSdp;
  throw UsageError("unknown variant '" + s + "' (expected bgn|ban|sdp)");
}

Tensor ParamRegistry::add(const std::string& name, Tensor t) {
  items_.push_back({name, t});
  return t;
}

const Tensor* ParamRegistry::find(const std::string& name) const {
  for (const auto& item : items_) {
    if (item.name == name) return &item.tensor;
  }
  return nullptr;
}

void ParamRegistry::zero_grad() {
  for (auto& item : items_) item.tensor.zero_grad();
}

std::size_t ParamRegistry::total_size() const {
  std::size_t n = 0;
  for (const auto& item : items_) n += item.tensor.numel();
  return n;
}

std::vector<double> soft_targets(const std::map<std::string, int>& counts,
                                 const std::vector<std::string>& answers) {
  std::vector<double> y(answers.size(), 0.0);
  for (std::size_t i = 0; i < answers.size(); ++i) {
    auto it = counts.find(answers[i]);
    if (it == counts.end()) continue;
    if (it->second < 0) throw std::invalid_argument("soft_targets: negative count");
    y[i] = std::min(static_cast<double>(it->second) / 3.0, 1.0);
  }
  return y;
}

int predict(const Tensor& scores) {
  int best = 0;
  for (std::size_t i = 1; i < scores.numel(); ++i) {
    if (scores.data()[i] > scores.data()[best]) best = static_cast<int>(i);
  }
  return best;
}

namespace {

Tensor glorot(ParamRegistry& reg, const std::string& name, int rows, int cols,
              Rng& rng) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  Tensor t = Tensor::zeros(rows, cols, /*requires_grad=*/true);
  for (auto i = 0u; i < t.numel(); ++i)
    t.data()[i] = rng.uniform(-bound, bound);
  return reg.add(name, t);
}

Tensor zero_param(ParamRegistry& reg, const std::string& name, int rows,
                  int cols) {
  return reg.add(name, Tensor::zeros(rows, cols, /*requires_grad=*/true));
}

// Weight-normalized map: direction is Glorot, gains start at the row norms
// so the effective weight equals the sampled direction.
void init_wn(ParamRegistry& reg, const std::string& prefix, int out, int in,
             Rng& rng, Tensor& dir, Tensor& gain, Tensor& bias) {
  dir = glorot(reg, prefix + ".dir", out, in, rng);
  gain = zero_param(reg, prefix + ".gain", out, 1);
  for (int i = 0; i < out; ++i) {
    double s = 0.0;
    for (int j = 0; j < in; ++j) s += dir.at(i, j) * dir.at(i, j);
    gain.at(i, 0) = std::sqrt(s);
  }
  bias = zero_param(reg, prefix + ".bias", out, 1);
}

BilinearLogitParams init_logit_params(ParamRegistry& reg,
                                      const std::string& prefix, int c_q,
                                      int c_v, int k_prime, int rank,
                                      int glimpses, Rng& rng) {
  BilinearLogitParams p;
  for (int r = 0; r < rank; ++r) {
    p.u_slices.push_back(
        glorot(reg, prefix + ".u" + std::to_string(r), c_q, k_prime, rng));
    p.u_bias.push_back(
        zero_param(reg, prefix + ".u_bias" + std::to_string(r), 1, k_prime));
  }
  for (int r = 0; r < rank; ++r) {
    p.v_slices.push_back(
        glorot(reg, prefix + ".v" + std::to_string(r), c_v, k_prime, rng));
    p.v_bias.push_back(
        zero_param(reg, prefix + ".v_bias" + std::to_string(r), 1, k_prime));
  }
  for (int j = 0; j < glimpses; ++j) {
    p.p.push_back(glorot(reg, prefix + ".p" + std::to_string(j), 1, k_prime, rng));
  }
  return p;
}

GraphLayerParams init_graph_params(ParamRegistry& reg,
                                   const std::string& prefix, int c_q, int c_v,
                                   const ModelConfig& cfg, Rng& rng) {
  GraphLayerParams p;
  p.logit = init_logit_params(reg, prefix + ".logit", c_q, c_v, cfg.k_prime,
                              cfg.rank, cfg.glimpses, rng);
  for (int j = 0; j < cfg.glimpses; ++j) {
    const std::string vp = prefix + ".value" + std::to_string(j);
    BgnValueParams vparams;
    vparams.u = glorot(reg, vp + ".u", c_q, cfg.k, rng);
    vparams.u_bias = zero_param(reg, vp + ".u_bias", 1, cfg.k);
    vparams.v = glorot(reg, vp + ".v", c_v, cfg.k, rng);
    vparams.v_bias = zero_param(reg, vp + ".v_bias", 1, cfg.k);
    p.value.push_back(vparams);
    p.residual_proj.push_back(
        glorot(reg, prefix + ".resid" + std::to_string(j), cfg.c, cfg.k, rng));
  }
  return p;
}

SdpLayerParams init_sdp_params(ParamRegistry& reg, const std::string& prefix,
                               const ModelConfig& cfg, Rng& rng) {
  SdpLayerParams p;
  for (int j = 0; j < cfg.glimpses; ++j) {
    const std::string gp = prefix + std::to_string(j);
    SdpGlimpseParams g;
    g.wq = glorot(reg, gp + ".wq", cfg.c, cfg.k_prime, rng);
    g.wk = glorot(reg, gp + ".wk", cfg.c, cfg.k_prime, rng);
    g.wv = glorot(reg, gp + ".wv", cfg.c, cfg.k, rng);
    g.residual_proj = glorot(reg, gp + ".resid", cfg.c, cfg.k, rng);
    p.glimpse.push_back(g);
  }
  return p;
}

}  // namespace

Model::Model(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  if (cfg.vocab_size <= 0 || cfg.answer_count <= 0) {
    throw std::invalid_argument("Model: vocab_size and answer_count required");
  }
  Rng rng(Rng::mix(init_seed, 0x6d6f64656c));

  tok_emb_ = glorot(params_, "encoder.tok_emb", cfg.vocab_size, cfg.c, rng);
  pos_emb_ = glorot(params_, "encoder.pos_emb", cfg.max_words, cfg.c, rng);
  init_wn(params_, "encoder.proj", cfg.c, cfg.c, rng, enc_dir_, enc_gain_,
          enc_bias_);

  if (cfg.d_raw != cfg.d_obj) {
    obj_w_ = glorot(params_, "objects.proj.w", cfg.d_obj, cfg.d_raw, rng);
    obj_b_ = zero_param(params_, "objects.proj.b", cfg.d_obj, 1);
  }

  for (int l = 0; l < cfg.layers; ++l) {
    const std::string lp = "layer" + std::to_string(l);
    if (cfg.variant == Variant::kBan) {
      ban_.push_back(
          init_graph_params(params_, lp + ".image", cfg.c, cfg.d_obj, cfg, rng));
    } else {
      StackLayerParams layer;
      layer.image =
          init_graph_params(params_, lp + ".image", cfg.c, cfg.d_obj, cfg, rng);
      if (cfg.variant == Variant::kSdp) {
        layer.question_kind = QuestionKind::kSdp;
        layer.sdp = init_sdp_params(params_, lp + ".sdp", cfg, rng);
      } else {
        layer.question_kind = QuestionKind::kBilinear;
        layer.question =
            init_graph_params(params_, lp + ".question", cfg.c, cfg.c, cfg, rng);
      }
      stack_.push_back(std::move(layer));
    }
  }

  const int head_in = cfg.variant == Variant::kBan ? cfg.k : cfg.c;
  init_wn(params_, "head.fc1", 2 * cfg.c, head_in, rng, fc1_dir_, fc1_gain_,
          fc1_bias_);
  init_wn(params_, "head.fc2", cfg.answer_count, 2 * cfg.c, rng, fc2_dir_,
          fc2_gain_, fc2_bias_);
}

Tensor Model::encode_question(const std::vector<int>& token_ids,
                              const Mask& q_mask) const {
  if (static_cast<int>(token_ids.size()) != cfg_.max_words ||
      q_mask.size() != cfg_.max_words) {
    throw std::invalid_argument("encode_question: expected " +
                                std::to_string(cfg_.max_words) + " positions");
  }
  Tensor emb = add(embed_cols(tok_emb_, token_ids), transpose(pos_emb_));
  std::vector<double> mrow(cfg_.max_words);
  for (int t = 0; t < cfg_.max_words; ++t) mrow[t] = q_mask.at(t) ? 1.0 : 0.0;
  const Tensor mask_row = Tensor::row(mrow);
  emb = hadamard(emb, mask_row);
  Tensor projected = tanh(linear_wn(emb, enc_dir_, enc_gain_, enc_bias_));
  // The projection bias leaks into padded columns; mask them back to zero.
  return hadamard(projected, mask_row);
}

Tensor Model::encode_objects(const std::vector<double>& raw,
                             const Mask& v_mask) const {
  const int n = cfg_.max_objects;
  if (static_cast<int>(raw.size()) != n * cfg_.d_raw || v_mask.size() != n) {
    throw std::invalid_argument("encode_objects: feature block must be " +
                                std::to_string(n) + "x" +
                                std::to_string(cfg_.d_raw));
  }
  std::vector<double> transposed(static_cast<std::size_t>(cfg_.d_raw) * n);
  for (int i = 0; i < n; ++i) {
    const bool valid = v_mask.at(i);
    for (int r = 0; r < cfg_.d_raw; ++r) {
      transposed[r * n + i] = valid ? raw[i * cfg_.d_raw + r] : 0.0;
    }
  }
  Tensor f = Tensor::from(std::move(transposed), cfg_.d_raw, n);
  if (!obj_w_.defined()) return f;

  std::vector<double> mrow(n);
  for (int i = 0; i < n; ++i) mrow[i] = v_mask.at(i) ? 1.0 : 0.0;
  Tensor projected = add(matmul(obj_w_, f), obj_b_);
  return hadamard(projected, Tensor::row(mrow));
}

Tensor Model::head(const Tensor& readout, const DropoutCfg& drop) const {
  Tensor hidden = relu(linear_wn(readout, fc1_dir_, fc1_gain_, fc1_bias_));
  if (drop.on()) hidden = dropout(hidden, drop.p, true, *drop.rng);
  return linear_wn(hidden, fc2_dir_, fc2_gain_, fc2_bias_);
}

Tensor Model::classify(const Tensor& o_final, const Mask& q_mask,
                       const DropoutCfg& drop) const {
  std::vector<double> mcol(o_final.cols());
  for (int t = 0; t < o_final.cols(); ++t)
    mcol[t] = q_mask.at(t) ? 1.0 : 0.0;
  Tensor readout = matmul(o_final, Tensor::col(mcol));  // sum of valid columns
  return head(readout, drop);
}

Tensor Model::forward_scores(const std::vector<int>& token_ids,
                             const Mask& q_mask,
                             const std::vector<double>& raw_objects,
                             const Mask& v_mask, const DropoutCfg& drop,
                             LayerTrace* trace) const {
  Tensor q = encode_question(token_ids, q_mask);
  Tensor v = encode_objects(raw_objects, v_mask);
  if (cfg_.variant == Variant::kBan) {
    Tensor z = ban_baseline_forward(q, v, ban_, q_mask, v_mask, drop, trace);
    return head(z, drop);
  }
  Tensor o = stack_forward(q, v, stack_, q_mask, v_mask, drop, trace);
  return classify(o, q_mask, drop);
}

}  // namespace bgn
