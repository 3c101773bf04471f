#pragma once

// The context transducer: conformer-lite audio encoder, stateless
// convolutional predictor, two context encoders with their biasing layer and
// combiner, and the self-consistent context joiner.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "scct/config.hpp"
#include "scct/layers.hpp"
#include "scct/params.hpp"
#include "scct/transducer_loss.hpp"

namespace scct {

using TokenSeq = std::vector<std::size_t>;

// Hint embeddings h^c. Row 0 is the learned "no-bias" sentinel, so the
// biasing attention always has at least one key.
struct ContextBatch {
  std::vector<TokenSeq> hints;
  Tensor embeddings;  // (1 + hints.size()) x context_out_dim

  std::size_t num_rows() const { return embeddings.rows(); }
};

enum class LoopMode { kTrain, kInfer };

struct ScOptions {
  std::size_t max_iters = 3;
  double threshold = 1e-6;
  LoopMode mode = LoopMode::kInfer;
};

// Per-iteration max |z_n - z_{n-1}| and signed mean(z_n - z_{n-1}).
struct ScDiagnostics {
  std::vector<double> max_diff;
  std::vector<double> mean_diff;
  std::size_t iterations_run = 0;
  bool converged = false;
};

struct ScResult {
  Tensor z;
  std::vector<Tensor> iterates;  // z before the loop, then after each pass
  ScDiagnostics diag;
};

// Fixed-point runner shared by the context joiner and the joiner-free
// variant. Starting from `z`, each iteration computes
//   z0 = bias_combine(z);  z = join(z0);  delta = |mean(z - z_prev)|
// and in inference mode stops once delta < threshold, but never on the
// first iteration. Training mode always runs max_iters iterations.
template <class BiasCombine, class Join>
ScResult run_self_consistent(Tensor z, BiasCombine&& bias_combine, Join&& join,
                             const ScOptions& opt) {
  if (opt.max_iters == 0) throw ContractError("self-consistent loop needs N >= 1");
  if (!(opt.threshold > 0.0)) throw ContractError("self-consistent threshold must be > 0");
  ScResult res;
  res.iterates.push_back(z);
  Tensor z_prev = z;
  for (std::size_t n = 1; n <= opt.max_iters; ++n) {
    const Tensor z0 = bias_combine(z);
    z = join(z0);
    const auto cur = z.data();
    const auto prev = z_prev.data();
    double max_abs = 0.0, total = 0.0;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const double d = cur[i] - prev[i];
      max_abs = std::max(max_abs, std::abs(d));
      total += d;
    }
    const double mean_diff = total / static_cast<double>(cur.size());
    res.diag.max_diff.push_back(max_abs);
    res.diag.mean_diff.push_back(mean_diff);
    res.diag.iterations_run = n;
    res.iterates.push_back(z);
    if (opt.mode == LoopMode::kInfer && n > 1 &&
        std::abs(mean_diff) < opt.threshold) {
      res.diag.converged = true;
      break;
    }
    z_prev = z;
  }
  res.z = z;
  return res;
}

inline ScOptions sc_options(const ModelConfig& cfg, LoopMode mode) {
  return {cfg.max_sc_iters, cfg.sc_threshold, mode};
}

namespace detail {

inline Tensor feed_forward(const Tensor& x, const ModelParams& p,
                           const std::string& prefix, double eps) {
  const Tensor h = layer_norm(x, p.at(prefix + ".ln.gain"),
                              p.at(prefix + ".ln.bias"), eps);
  const Tensor a = silu(linear(h, p.at(prefix + ".in.weight"), p.at(prefix + ".in.bias")));
  return linear(a, p.at(prefix + ".out.weight"), p.at(prefix + ".out.bias"));
}

inline Tensor conv_module(const Tensor& x, const ModelParams& p,
                          const std::string& prefix, double eps) {
  const Tensor h = layer_norm(x, p.at(prefix + ".ln.gain"),
                              p.at(prefix + ".ln.bias"), eps);
  const Tensor a = linear(h, p.at(prefix + ".pw_in.weight"), p.at(prefix + ".pw_in.bias"));
  const Tensor c = silu(depthwise_causal_conv1d(a, p.at(prefix + ".dw.weight"),
                                                p.at(prefix + ".dw.bias")));
  return linear(c, p.at(prefix + ".pw_out.weight"), p.at(prefix + ".pw_out.bias"));
}

}  // namespace detail

// h^a: T x D. Each block is half feed-forward, causal self-attention,
// causal depthwise convolution, half feed-forward, then a layer norm.
inline Tensor encode_audio(const Tensor& features, const ModelParams& p,
                           const ModelConfig& cfg) {
  if (features.ndim() != 2 || features.cols() != cfg.feature_dim) {
    throw DimensionError("encode_audio: features " + shape_str(features.shape()) +
                         " do not have width " + std::to_string(cfg.feature_dim));
  }
  const double eps = cfg.layer_norm_eps;
  Tensor x = linear(features, p.at("encoder.input.weight"), p.at("encoder.input.bias"));
  for (std::size_t l = 0; l < cfg.num_encoder_layers; ++l) {
    const std::string lp = "encoder.layers." + std::to_string(l);
    x = add(x, scale(detail::feed_forward(x, p, lp + ".ff1", eps), 0.5));
    const Tensor h = layer_norm(x, p.at(lp + ".attn.ln.gain"), p.at(lp + ".attn.ln.bias"), eps);
    x = add(x, causal_self_attention(
                   h, self_attention_view(p, lp + ".attn", cfg.self_attention_heads)));
    x = add(x, detail::conv_module(x, p, lp + ".conv", eps));
    x = add(x, scale(detail::feed_forward(x, p, lp + ".ff2", eps), 0.5));
    x = layer_norm(x, p.at(lp + ".final_ln.gain"), p.at(lp + ".final_ln.bias"), eps);
  }
  return x;
}

// Maps each hint through the shared embedding and the BLSTM stack of one
// context encoder (`prefix` is "ctx_enc_audio" or "ctx_enc_joiner").
inline ContextBatch encode_context(const std::vector<TokenSeq>& hints,
                                   const ModelParams& p, const ModelConfig& cfg,
                                   const std::string& prefix) {
  const ContextEncoderParams enc = context_encoder_view(p, prefix, cfg);
  const Tensor& table = p.at("shared_embedding");
  std::vector<Tensor> rows{enc.sentinel};
  for (const auto& hint : hints) {
    if (hint.empty()) throw ContractError("encode_context: empty hint");
    for (std::size_t id : hint) {
      if (id == cfg.blank_id) throw ContractError("encode_context: hint contains blank");
    }
    rows.push_back(blstm_encode(embedding_lookup(table, hint), enc.layers));
  }
  Tensor emb = rows.size() == 1 ? rows[0] : concat_rows(rows);
  if (cfg.context_layernorm_enabled) {
    emb = layer_norm(emb, enc.ln_gain, enc.ln_bias, cfg.layer_norm_eps);
  }
  return {hints, emb};
}

inline Tensor combine(const Tensor& stream, const Tensor& attended,
                      const CombinerParams& c, double eps) {
  return linear(concat_cols({layer_norm(stream, c.ln_stream_gain, c.ln_stream_bias, eps),
                             layer_norm(attended, c.ln_context_gain, c.ln_context_bias, eps)}),
                c.weight, c.bias);
}

// Biasing cross-attention of `stream` over the hint embeddings followed by
// the combiner: Linear(Concat(LN(stream), LN(attended))).
inline Tensor bias_and_combine(const Tensor& stream, const ContextBatch& ctx,
                               const AttentionWeights& bias,
                               const CombinerParams& comb, double eps = 1e-5) {
  const Tensor attended = multi_head_cross_attention(stream, ctx.embeddings, bias);
  return combine(stream, attended, comb, eps);
}

// h^d: (U+1) x P. Row u sees the last `predictor_kernel` entries of
// [blank, y_1, ..., y_u].
inline Tensor predict_labels(std::span<const std::size_t> prev_tokens,
                             const ModelParams& p, const ModelConfig& cfg) {
  TokenSeq ids{cfg.blank_id};
  ids.insert(ids.end(), prev_tokens.begin(), prev_tokens.end());
  const Tensor emb = embedding_lookup(p.at("shared_embedding"), ids);
  return tanh(causal_conv1d(emb, p.at("predictor.conv.weight"),
                            p.at("predictor.conv.bias")));
}

// z = tanh(h_ac W_a + b_a + z0 W_p + b_p), row by row.
inline Tensor joiner_step(const Tensor& h_ac, const Tensor& z0,
                          const JoinerParams& j) {
  return tanh(add(linear(h_ac, j.audio_weight, j.audio_bias),
                  linear(z0, j.pred_weight, j.pred_bias)));
}

inline Tensor joiner_preactivation(const Tensor& h_ac, const Tensor& z0,
                                   const JoinerParams& j) {
  return add(linear(h_ac, j.audio_weight, j.audio_bias),
             linear(z0, j.pred_weight, j.pred_bias));
}

// Context joiner for one or more (t, u) cells given as matching rows of
// `h_ac` and `h_d`. Every op in the loop is row-local, so a block of rows in
// training mode equals running the cells one at a time.
inline ScResult self_consistent_joiner(const Tensor& h_ac, const Tensor& h_d,
                                       const ContextBatch& ctx,
                                       const ModelParams& p,
                                       const ModelConfig& cfg,
                                       const ScOptions& opt) {
  const JoinerParams jp = joiner_view(p);
  const AttentionWeights bias =
      biasing_view(p, "bias_joiner", cfg.cross_attention_heads);
  const CombinerParams comb = combiner_view(p, "combiner_joiner");
  const double eps = cfg.layer_norm_eps;
  const Tensor z = joiner_step(h_ac, h_d, jp);
  return run_self_consistent(
      z, [&](const Tensor& zc) { return bias_and_combine(zc, ctx, bias, comb, eps); },
      [&](const Tensor& z0) { return joiner_step(h_ac, z0, jp); }, opt);
}

inline ScResult self_consistent_joiner(const Tensor& h_ac, const Tensor& h_d,
                                       const ContextBatch& ctx,
                                       const ModelParams& p,
                                       const ModelConfig& cfg, LoopMode mode) {
  return self_consistent_joiner(h_ac, h_d, ctx, p, cfg, sc_options(cfg, mode));
}

// Joiner-free variant: the combiner output is fed straight back into the
// biasing layer (the joiner is the identity).
inline ScResult fixed_point_bias_combiner(const Tensor& z_init,
                                          const ContextBatch& ctx,
                                          const AttentionWeights& bias,
                                          const CombinerParams& comb,
                                          std::size_t max_iters,
                                          double threshold, double eps = 1e-5) {
  return run_self_consistent(
      z_init, [&](const Tensor& z) { return bias_and_combine(z, ctx, bias, comb, eps); },
      [](const Tensor& z0) { return z0; },
      ScOptions{max_iters, threshold, LoopMode::kInfer});
}

inline Tensor output_logits(const Tensor& z, const ModelParams& p) {
  return linear(z, p.at("output.weight"), p.at("output.bias"));
}

// Encoder-side quantities reused across the lattice and by the decoder.
struct AudioContext {
  Tensor h_a;   // T x D
  Tensor h_ac;  // T x D, after the audio biasing layer and combiner
  ContextBatch ctx_audio;
  ContextBatch ctx_joiner;
};

inline AudioContext encode_with_context(const Tensor& features,
                                        const std::vector<TokenSeq>& hints,
                                        const ModelParams& p,
                                        const ModelConfig& cfg) {
  AudioContext a;
  a.h_a = encode_audio(features, p, cfg);
  a.ctx_audio = encode_context(hints, p, cfg, "ctx_enc_audio");
  a.h_ac = bias_and_combine(a.h_a, a.ctx_audio,
                            biasing_view(p, "bias_audio", cfg.cross_attention_heads),
                            combiner_view(p, "combiner_audio"), cfg.layer_norm_eps);
  a.ctx_joiner = encode_context(hints, p, cfg, "ctx_enc_joiner");
  return a;
}

struct GridResult {
  LogitGrid grid;
  ScDiagnostics diag;  // whole-lattice block in training mode
  std::vector<Tensor> iterates;  // training mode: whole-lattice joiner iterates
};

// Sum over passes n >= 2 of the squared per-row mean of z_n - z_{n-1},
// averaged over rows: the quantity the inference loop stops on. The first
// pass is left free: it swaps the predictor input for the combiner output.
inline Tensor settling_penalty(const std::vector<Tensor>& iterates) {
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t n = 2; n < iterates.size(); ++n) {
    const Tensor d = sub(iterates[n], iterates[n - 1]);
    const std::size_t cols = d.cols();
    const Tensor row_mean = matmul(d, Tensor::full({cols, 1}, 1.0 / static_cast<double>(cols)));
    total = add(total, mean(mul(row_mean, row_mean)));
  }
  return total;
}

// Joint log-probabilities for every lattice node (t, u). Training mode runs
// the joiner loop over all T*(U+1) cells as one block of rows with exactly N
// iterations; inference mode runs each cell's loop separately with early
// exit.
inline GridResult forward_grid(const Tensor& features, const TokenSeq& target,
                               const std::vector<TokenSeq>& hints,
                               const ModelParams& p, const ModelConfig& cfg,
                               LoopMode mode = LoopMode::kTrain) {
  for (std::size_t id : target) {
    if (id == cfg.blank_id || id >= cfg.vocab_size) {
      throw ContractError("forward_grid: target id " + std::to_string(id) +
                          " is blank or out of range");
    }
  }
  const AudioContext a = encode_with_context(features, hints, p, cfg);
  const Tensor h_d = predict_labels(target, p, cfg);
  const std::size_t T = a.h_ac.rows(), U1 = target.size() + 1;

  GridResult out;
  Tensor z;
  if (mode == LoopMode::kTrain) {
    std::vector<std::size_t> t_idx(T * U1), u_idx(T * U1);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t u = 0; u < U1; ++u) {
        t_idx[t * U1 + u] = t;
        u_idx[t * U1 + u] = u;
      }
    const JoinerParams jp = joiner_view(p);
    const AttentionWeights bias =
        biasing_view(p, "bias_joiner", cfg.cross_attention_heads);
    const CombinerParams comb = combiner_view(p, "combiner_joiner");
    // The audio half of the joiner is the same for every u; project once.
    const Tensor audio_rows =
        gather_rows(linear(a.h_ac, jp.audio_weight, jp.audio_bias), t_idx);
    const Tensor z_init = tanh(
        add(audio_rows, gather_rows(linear(h_d, jp.pred_weight, jp.pred_bias), u_idx)));
    ScResult r = run_self_consistent(
        z_init,
        [&](const Tensor& zc) {
          return bias_and_combine(zc, a.ctx_joiner, bias, comb, cfg.layer_norm_eps);
        },
        [&](const Tensor& z0) {
          return tanh(add(audio_rows, linear(z0, jp.pred_weight, jp.pred_bias)));
        },
        sc_options(cfg, LoopMode::kTrain));
    z = r.z;
    out.iterates = std::move(r.iterates);
    out.diag = std::move(r.diag);
  } else {
    std::vector<Tensor> cells;
    cells.reserve(T * U1);
    for (std::size_t t = 0; t < T; ++t) {
      const Tensor h_t = slice_rows(a.h_ac, t, t + 1);
      for (std::size_t u = 0; u < U1; ++u) {
        ScResult r = self_consistent_joiner(h_t, slice_rows(h_d, u, u + 1),
                                            a.ctx_joiner, p, cfg, LoopMode::kInfer);
        out.diag.iterations_run = std::max(out.diag.iterations_run, r.diag.iterations_run);
        cells.push_back(r.z);
      }
    }
    z = concat_rows(cells);
  }
  const Tensor lp = log_softmax_last(output_logits(z, p));
  out.grid.log_probs = reshape(lp, {T, U1, cfg.vocab_size});
  out.grid.target = target;
  return out;
}

}  // namespace scct
