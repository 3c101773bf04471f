#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "scct/config.hpp"
#include "scct/layers.hpp"

namespace scct {

// Every learnable tensor of the model, keyed by a dotted path. The map owns
// each tensor exactly once; components that share a weight (the embedding
// table) look up the same entry, so its gradient has a single sink.
class ModelParams {
 public:
  const Tensor& at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw IndexError("no parameter named '" + name + "'");
    return it->second;
  }
  Tensor& at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw IndexError("no parameter named '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return tensors_.count(name) > 0; }

  void insert(const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    tensors_[name] = std::move(t);
  }

  const std::map<std::string, Tensor>& all() const { return tensors_; }
  std::map<std::string, Tensor>& all() { return tensors_; }

  void zero_grad() {
    for (auto& [_, t] : tensors_) t.zero_grad();
  }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors_) n += t.numel();
    return n;
  }

  // Independent deep copy (fresh storage, no gradients).
  ModelParams clone() const {
    ModelParams out;
    for (const auto& [name, t] : tensors_) out.insert(name, t.detach());
    return out;
  }

 private:
  std::map<std::string, Tensor> tensors_;
};

struct CombinerParams {
  Tensor ln_stream_gain, ln_stream_bias;
  Tensor ln_context_gain, ln_context_bias;
  Tensor weight, bias;  // (stream_dim + context_dim) x out_dim
};

struct JoinerParams {
  Tensor audio_weight, audio_bias;  // D x J
  Tensor pred_weight, pred_bias;    // P x J
};

struct ContextEncoderParams {
  std::vector<BlstmLayer> layers;
  Tensor sentinel;  // 1 x 2C
  Tensor ln_gain, ln_bias;
};

inline AttentionWeights biasing_view(const ModelParams& p,
                                     const std::string& prefix,
                                     std::size_t heads) {
  AttentionWeights w{p.at(prefix + ".wq"), p.at(prefix + ".wk"),
                     p.at(prefix + ".wv"), heads, 0};
  w.head_dim = w.wq.extent(1) / heads;
  return w;
}

inline CombinerParams combiner_view(const ModelParams& p,
                                    const std::string& prefix) {
  return {p.at(prefix + ".ln_stream.gain"),  p.at(prefix + ".ln_stream.bias"),
          p.at(prefix + ".ln_context.gain"), p.at(prefix + ".ln_context.bias"),
          p.at(prefix + ".linear.weight"),   p.at(prefix + ".linear.bias")};
}

inline JoinerParams joiner_view(const ModelParams& p) {
  return {p.at("joiner.audio.weight"), p.at("joiner.audio.bias"),
          p.at("joiner.pred.weight"), p.at("joiner.pred.bias")};
}

inline LstmCellWeights lstm_view(const ModelParams& p, const std::string& prefix) {
  return {p.at(prefix + ".w_input"), p.at(prefix + ".w_hidden"),
          p.at(prefix + ".bias")};
}

inline ContextEncoderParams context_encoder_view(const ModelParams& p,
                                                 const std::string& prefix,
                                                 const ModelConfig& cfg) {
  ContextEncoderParams out;
  for (std::size_t l = 0; l < cfg.context_blstm_layers; ++l) {
    const std::string lp = prefix + ".blstm." + std::to_string(l);
    out.layers.push_back({lstm_view(p, lp + ".fwd"), lstm_view(p, lp + ".bwd")});
  }
  out.sentinel = p.at(prefix + ".sentinel");
  out.ln_gain = p.at(prefix + ".ln.gain");
  out.ln_bias = p.at(prefix + ".ln.bias");
  return out;
}

inline SelfAttentionWeights self_attention_view(const ModelParams& p,
                                                const std::string& prefix,
                                                std::size_t heads) {
  return {p.at(prefix + ".wq"), p.at(prefix + ".bq"), p.at(prefix + ".wk"),
          p.at(prefix + ".bk"), p.at(prefix + ".wv"), p.at(prefix + ".bv"),
          p.at(prefix + ".wo"), p.at(prefix + ".bo"), heads};
}

namespace detail {

class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed) : rng_(seed) {}

  Tensor xavier(std::size_t fan_in, std::size_t fan_out, const Shape& shape) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform(shape, a);
  }
  Tensor uniform(const Shape& shape, double a) {
    std::uniform_real_distribution<double> dist(-a, a);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = dist(rng_);
    return Tensor(shape, std::move(v));
  }
  static Tensor zeros(const Shape& s) { return Tensor::zeros(s); }
  static Tensor ones(const Shape& s) { return Tensor::full(s, 1.0); }

 private:
  std::mt19937_64 rng_;
};

inline void add_linear(ModelParams& p, ParamInit& init, const std::string& prefix,
                       std::size_t in, std::size_t out) {
  p.insert(prefix + ".weight", init.xavier(in, out, {in, out}));
  p.insert(prefix + ".bias", ParamInit::zeros({out}));
}

inline void add_layer_norm(ModelParams& p, const std::string& prefix,
                           std::size_t n) {
  p.insert(prefix + ".gain", ParamInit::ones({n}));
  p.insert(prefix + ".bias", ParamInit::zeros({n}));
}

inline void add_lstm(ModelParams& p, ParamInit& init, const std::string& prefix,
                     std::size_t in, std::size_t hidden) {
  p.insert(prefix + ".w_input", init.xavier(in, 4 * hidden, {in, 4 * hidden}));
  p.insert(prefix + ".w_hidden",
           init.xavier(hidden, 4 * hidden, {hidden, 4 * hidden}));
  std::vector<double> b(4 * hidden, 0.0);
  for (std::size_t i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;  // forget gate
  p.insert(prefix + ".bias", Tensor({4 * hidden}, std::move(b)));
}

inline void add_context_set(ModelParams& p, ParamInit& init,
                            const ModelConfig& c, const std::string& enc,
                            const std::string& bias, const std::string& comb,
                            std::size_t stream_dim, std::size_t comb_out) {
  const std::size_t cd = c.context_out_dim();
  for (std::size_t l = 0; l < c.context_blstm_layers; ++l) {
    const std::string lp = enc + ".blstm." + std::to_string(l);
    const std::size_t in = l == 0 ? c.embedding_dim : cd;
    add_lstm(p, init, lp + ".fwd", in, c.context_dim);
    add_lstm(p, init, lp + ".bwd", in, c.context_dim);
  }
  p.insert(enc + ".sentinel", init.uniform({1, cd}, 1.0));
  add_layer_norm(p, enc + ".ln", cd);

  p.insert(bias + ".wq", init.xavier(stream_dim, stream_dim, {stream_dim, stream_dim}));
  p.insert(bias + ".wk", init.xavier(cd, stream_dim, {cd, stream_dim}));
  p.insert(bias + ".wv", init.xavier(cd, stream_dim, {cd, stream_dim}));

  add_layer_norm(p, comb + ".ln_stream", stream_dim);
  add_layer_norm(p, comb + ".ln_context", stream_dim);
  add_linear(p, init, comb + ".linear", 2 * stream_dim, comb_out);
}

}  // namespace detail

// Deterministic initialization from `seed`.
inline ModelParams init_params(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  ModelParams p;
  detail::ParamInit init(seed);
  const std::size_t D = c.encoder_dim, J = c.joiner_dim, P = c.predictor_dim;

  p.insert("shared_embedding",
           init.uniform({c.vocab_size, c.embedding_dim}, 1.0));

  detail::add_linear(p, init, "encoder.input", c.feature_dim, D);
  for (std::size_t l = 0; l < c.num_encoder_layers; ++l) {
    const std::string lp = "encoder.layers." + std::to_string(l);
    for (const char* ff : {".ff1", ".ff2"}) {
      detail::add_layer_norm(p, lp + ff + ".ln", D);
      detail::add_linear(p, init, lp + ff + ".in", D, c.feedforward_dim);
      detail::add_linear(p, init, lp + ff + ".out", c.feedforward_dim, D);
    }
    detail::add_layer_norm(p, lp + ".attn.ln", D);
    for (const char* m : {"q", "k", "v", "o"}) {
      p.insert(lp + ".attn.w" + m, init.xavier(D, D, {D, D}));
      p.insert(lp + ".attn.b" + m, detail::ParamInit::zeros({D}));
    }
    detail::add_layer_norm(p, lp + ".conv.ln", D);
    detail::add_linear(p, init, lp + ".conv.pw_in", D, D);
    p.insert(lp + ".conv.dw.weight",
             init.xavier(c.encoder_conv_kernel, 1, {c.encoder_conv_kernel, D}));
    p.insert(lp + ".conv.dw.bias", detail::ParamInit::zeros({D}));
    detail::add_linear(p, init, lp + ".conv.pw_out", D, D);
    detail::add_layer_norm(p, lp + ".final_ln", D);
  }

  p.insert("predictor.conv.weight",
           init.xavier(c.predictor_kernel * c.embedding_dim, P,
                       {c.predictor_kernel, c.embedding_dim, P}));
  p.insert("predictor.conv.bias", detail::ParamInit::zeros({P}));

  detail::add_context_set(p, init, c, "ctx_enc_audio", "bias_audio",
                          "combiner_audio", D, D);
  detail::add_context_set(p, init, c, "ctx_enc_joiner", "bias_joiner",
                          "combiner_joiner", J, P);

  detail::add_linear(p, init, "joiner.audio", D, J);
  detail::add_linear(p, init, "joiner.pred", P, J);
  detail::add_linear(p, init, "output", J, c.vocab_size);
  return p;
}

}  // namespace scct
