#pragma once

// Gradient cases for every differentiable op plus model-level compositions.
// Each case draws fresh random inputs in [-2, 2] and returns the worst
// relative error between tape gradients and central differences.

#include <functional>
#include <string>
#include <vector>

#include "scct/model.hpp"
#include "scct/transducer_loss.hpp"
#include "test_support.hpp"

namespace scct::testing {

struct GradCase {
  std::string name;
  std::function<double(Rng&)> run;
};

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.feature_dim = 3;
  c.num_encoder_layers = 1;
  c.encoder_dim = 4;
  c.feedforward_dim = 4;
  c.self_attention_heads = 2;
  c.cross_attention_heads = 2;
  c.encoder_conv_kernel = 2;
  c.embedding_dim = 3;
  c.predictor_kernel = 2;
  c.predictor_dim = 4;
  c.context_blstm_layers = 2;
  c.context_dim = 2;
  c.vocab_size = 5;
  c.joiner_dim = 4;
  c.max_sc_iters = 2;
  return c;
}

// Replaces every parameter with draws from [-a, a] (LN gains around 1).
inline void randomize_params(ModelParams& p, Rng& rng, double a = 1.0) {
  for (auto& [name, t] : p.all()) {
    auto v = t.data_mut();
    std::uniform_real_distribution<double> u(-a, a);
    const bool gain = name.size() > 5 && name.compare(name.size() - 5, 5, ".gain") == 0;
    for (double& x : v) x = gain ? 1.0 + 0.5 * u(rng) : u(rng);
  }
}

inline double grad_check_params(const std::function<Tensor()>& f, ModelParams& p,
                                std::vector<Tensor*> extra = {}, double h = 1e-5) {
  for (auto& [_, t] : p.all()) extra.push_back(&t);
  return grad_check(f, extra, h);
}

inline LogitGrid random_grid(Rng& rng, std::size_t T, std::size_t U, std::size_t V,
                             bool requires_grad) {
  Tensor logits = random_tensor({T * (U + 1), V}, rng, -2.0, 2.0);
  Tensor lp = log_softmax_last(logits).detach();
  lp = reshape(lp, {T, U + 1, V}).detach();
  lp.set_requires_grad(requires_grad);
  std::uniform_int_distribution<std::size_t> tok(1, V - 1);
  std::vector<std::size_t> target(U);
  for (auto& y : target) y = tok(rng);
  return {lp, target};
}

inline std::vector<GradCase> op_grad_cases() {
  std::vector<GradCase> cs;
  auto unary = [&](std::string name, std::function<Tensor(const Tensor&)> op, Shape shape) {
    cs.push_back({name, [op, shape](Rng& rng) {
                    Tensor x = random_param(shape, rng);
                    return grad_check([&] { return weighted_sum(op(x)); }, {&x});
                  }});
  };
  cs.push_back({"matmul", [](Rng& rng) {
                  Tensor a = random_param({3, 4}, rng), b = random_param({4, 2}, rng);
                  return grad_check([&] { return weighted_sum(matmul(a, b)); }, {&a, &b});
                }});
  cs.push_back({"linear", [](Rng& rng) {
                  Tensor x = random_param({3, 4}, rng), w = random_param({4, 2}, rng),
                         b = random_param({2}, rng);
                  return grad_check([&] { return weighted_sum(linear(x, w, b)); }, {&x, &w, &b});
                }});
  unary("transpose", [](const Tensor& x) { return transpose(x); }, {3, 2});
  cs.push_back({"add", [](Rng& rng) {
                  Tensor a = random_param({2, 3}, rng), b = random_param({2, 3}, rng);
                  return grad_check([&] { return weighted_sum(add(a, b)); }, {&a, &b});
                }});
  cs.push_back({"sub", [](Rng& rng) {
                  Tensor a = random_param({2, 3}, rng), b = random_param({2, 3}, rng);
                  return grad_check([&] { return weighted_sum(sub(a, b)); }, {&a, &b});
                }});
  cs.push_back({"mul", [](Rng& rng) {
                  Tensor a = random_param({2, 3}, rng), b = random_param({2, 3}, rng);
                  return grad_check([&] { return weighted_sum(mul(a, b)); }, {&a, &b});
                }});
  cs.push_back({"add_row", [](Rng& rng) {
                  Tensor a = random_param({3, 4}, rng), b = random_param({4}, rng);
                  return grad_check([&] { return weighted_sum(add_row(a, b)); }, {&a, &b});
                }});
  unary("scale", [](const Tensor& x) { return scale(x, -1.7); }, {2, 3});
  unary("tanh", [](const Tensor& x) { return tanh(x); }, {2, 3});
  unary("sigmoid", [](const Tensor& x) { return sigmoid(x); }, {2, 3});
  unary("silu", [](const Tensor& x) { return silu(x); }, {2, 3});
  unary("sum", [](const Tensor& x) { return scale(sum(x), 1.0); }, {2, 3});
  unary("mean", [](const Tensor& x) { return mean(x); }, {2, 3});
  unary("softmax_last", [](const Tensor& x) { return softmax_last(x); }, {3, 4});
  unary("causal_softmax", [](const Tensor& x) { return causal_softmax(x); }, {4, 4});
  unary("log_softmax_last", [](const Tensor& x) { return log_softmax_last(x); }, {3, 4});
  cs.push_back({"layer_norm", [](Rng& rng) {
                  Tensor x = random_param({3, 5}, rng), g = random_param({5}, rng),
                         b = random_param({5}, rng);
                  return grad_check([&] { return weighted_sum(layer_norm(x, g, b)); },
                                    {&x, &g, &b});
                }});
  cs.push_back({"embedding_lookup", [](Rng& rng) {
                  Tensor table = random_param({5, 3}, rng);
                  const std::vector<std::size_t> ids{4, 1, 1, 0};
                  return grad_check([&] { return weighted_sum(embedding_lookup(table, ids)); },
                                    {&table});
                }});
  cs.push_back({"concat_cols", [](Rng& rng) {
                  Tensor a = random_param({2, 3}, rng), b = random_param({2, 1}, rng);
                  return grad_check([&] { return weighted_sum(concat_cols({a, b, a})); },
                                    {&a, &b});
                }});
  cs.push_back({"concat_rows", [](Rng& rng) {
                  Tensor a = random_param({2, 3}, rng), b = random_param({1, 3}, rng);
                  return grad_check([&] { return weighted_sum(concat_rows({a, b})); }, {&a, &b});
                }});
  unary("slice_cols", [](const Tensor& x) { return slice_cols(x, 1, 3); }, {3, 4});
  unary("slice_rows", [](const Tensor& x) { return slice_rows(x, 1, 3); }, {4, 2});
  unary("reshape", [](const Tensor& x) { return reshape(x, {3, 2, 2}); }, {4, 3});
  cs.push_back({"causal_conv1d", [](Rng& rng) {
                  Tensor x = random_param({5, 3}, rng), k = random_param({3, 3, 2}, rng),
                         b = random_param({2}, rng);
                  return grad_check([&] { return weighted_sum(causal_conv1d(x, k, b)); },
                                    {&x, &k, &b});
                }});
  cs.push_back({"depthwise_causal_conv1d", [](Rng& rng) {
                  Tensor x = random_param({5, 3}, rng), k = random_param({3, 3}, rng),
                         b = random_param({3}, rng);
                  return grad_check(
                      [&] { return weighted_sum(depthwise_causal_conv1d(x, k, b)); },
                      {&x, &k, &b});
                }});
  cs.push_back({"multi_head_cross_attention", [](Rng& rng) {
                  Tensor q = random_param({2, 4}, rng), kv = random_param({3, 6}, rng);
                  AttentionWeights w{random_param({4, 4}, rng), random_param({6, 4}, rng),
                                     random_param({6, 4}, rng), 2, 2};
                  return grad_check(
                      [&] { return weighted_sum(multi_head_cross_attention(q, kv, w)); },
                      {&q, &kv, &w.wq, &w.wk, &w.wv});
                }});
  cs.push_back({"causal_self_attention", [](Rng& rng) {
                  Tensor x = random_param({3, 4}, rng);
                  SelfAttentionWeights w;
                  Tensor* all[] = {&w.wq, &w.bq, &w.wk, &w.bk, &w.wv, &w.bv, &w.wo, &w.bo};
                  for (Tensor* t : all) {
                    const bool bias = t == &w.bq || t == &w.bk || t == &w.bv || t == &w.bo;
                    *t = bias ? random_param({4}, rng, -1, 1) : random_param({4, 4}, rng, -1, 1);
                  }
                  w.num_heads = 2;
                  std::vector<Tensor*> leaves{&x};
                  for (Tensor* t : all) leaves.push_back(t);
                  return grad_check([&] { return weighted_sum(causal_self_attention(x, w)); },
                                    leaves);
                }});
  cs.push_back({"blstm_encode_2layer", [](Rng& rng) {
                  Tensor seq = random_param({3, 2}, rng);
                  std::vector<BlstmLayer> layers;
                  for (std::size_t l = 0; l < 2; ++l) {
                    const std::size_t in = l == 0 ? 2 : 4;
                    auto cell = [&] {
                      return LstmCellWeights{random_param({in, 8}, rng),
                                             random_param({2, 8}, rng), random_param({8}, rng)};
                    };
                    layers.push_back({cell(), cell()});
                  }
                  std::vector<Tensor*> leaves{&seq};
                  for (auto& l : layers)
                    for (LstmCellWeights* c : {&l.fwd, &l.bwd})
                      for (Tensor* t : {&c->w_input, &c->w_hidden, &c->bias}) leaves.push_back(t);
                  return grad_check([&] { return weighted_sum(blstm_encode(seq, layers)); },
                                    leaves);
                }});
  cs.push_back({"transducer_nll", [](Rng& rng) {
                  LogitGrid g = random_grid(rng, 3, 2, 4, true);
                  return grad_check([&] { return transducer_nll(g); }, {&g.log_probs});
                }});
  return cs;
}

inline std::vector<GradCase> model_grad_cases() {
  std::vector<GradCase> cs;
  const ModelConfig cfg = tiny_config();
  auto fresh = [cfg](Rng& rng) {
    ModelParams p = init_params(cfg, rng());
    randomize_params(p, rng);
    return p;
  };
  const std::vector<TokenSeq> hints{{1, 2, 3}, {4, 2}};
  cs.push_back({"encode_audio", [=](Rng& rng) {
                  ModelParams p = fresh(rng);
                  Tensor x = random_param({3, cfg.feature_dim}, rng);
                  auto f = [&] { return weighted_sum(encode_audio(x, p, cfg)); };
                  return grad_check_params(f, p, {&x});
                }});
  cs.push_back({"encode_context", [=](Rng& rng) {
                  ModelParams p = fresh(rng);
                  return grad_check_params(
                      [&] {
                        return weighted_sum(encode_context(hints, p, cfg, "ctx_enc_joiner").embeddings);
                      },
                      p);
                }});
  cs.push_back({"bias_and_combine", [=](Rng& rng) {
                  ModelParams p = fresh(rng);
                  Tensor s = random_param({2, cfg.encoder_dim}, rng);
                  auto f = [&] {
                    const ContextBatch ctx = encode_context(hints, p, cfg, "ctx_enc_audio");
                    return weighted_sum(bias_and_combine(
                        s, ctx, biasing_view(p, "bias_audio", cfg.cross_attention_heads),
                        combiner_view(p, "combiner_audio")));
                  };
                  return grad_check_params(f, p, {&s});
                }});
  cs.push_back({"predict_labels", [=](Rng& rng) {
                  ModelParams p = fresh(rng);
                  const TokenSeq y{3, 1, 4};
                  return grad_check_params([&] { return weighted_sum(predict_labels(y, p, cfg)); },
                                           p);
                }});
  cs.push_back({"joiner_step", [=](Rng& rng) {
                  ModelParams p = fresh(rng);
                  Tensor h = random_param({1, cfg.encoder_dim}, rng);
                  Tensor z0 = random_param({1, cfg.predictor_dim}, rng);
                  return grad_check(
                      [&] { return weighted_sum(joiner_step(h, z0, joiner_view(p))); },
                      {&h, &z0});
                }});
  cs.push_back({"self_consistent_joiner", [=](Rng& rng) {
                  ModelParams p = fresh(rng);
                  Tensor h = random_param({2, cfg.encoder_dim}, rng);
                  Tensor d = random_param({2, cfg.predictor_dim}, rng);
                  auto f = [&] {
                    const ContextBatch ctx = encode_context(hints, p, cfg, "ctx_enc_joiner");
                    return weighted_sum(
                        self_consistent_joiner(h, d, ctx, p, cfg, LoopMode::kTrain).z);
                  };
                  return grad_check_params(f, p, {&h, &d});
                }});
  cs.push_back({"output_logits", [=](Rng& rng) {
                  ModelParams p = fresh(rng);
                  Tensor z = random_param({2, cfg.joiner_dim}, rng);
                  auto f = [&] { return weighted_sum(log_softmax_last(output_logits(z, p))); };
                  return grad_check_params(f, p, {&z});
                }});
  cs.push_back({"end_to_end_loss", [=](Rng& rng) {
                  ModelParams p = fresh(rng);
                  Tensor x = random_param({3, cfg.feature_dim}, rng);
                  const TokenSeq y{2, 4};
                  auto f = [&] {
                    return transducer_nll(forward_grid(x, y, hints, p, cfg, LoopMode::kTrain).grid);
                  };
                  return grad_check_params(f, p, {&x});
                }});
  cs.push_back({"end_to_end_loss_with_residual_penalty", [=](Rng& rng) {
                  ModelParams p = fresh(rng);
                  Tensor x = random_param({3, cfg.feature_dim}, rng);
                  const TokenSeq y{2, 4};
                  auto f = [&] {
                    const GridResult g = forward_grid(x, y, hints, p, cfg, LoopMode::kTrain);
                    return add(transducer_nll(g.grid), scale(settling_penalty(g.iterates), 3.0));
                  };
                  return grad_check_params(f, p, {&x});
                }});
  return cs;
}

}  // namespace scct::testing
