#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "scct/ops.hpp"

namespace scct {

// Projections of the biasing cross-attention. Head h owns columns
// [h*head_dim, (h+1)*head_dim) of each matrix, so W_q^h is a column block of
// `wq`. No output projection follows the head concatenation.
struct AttentionWeights {
  Tensor wq;  // query_dim x (num_heads*head_dim)
  Tensor wk;  // key_dim x (num_heads*head_dim)
  Tensor wv;  // key_dim x (num_heads*head_dim)
  std::size_t num_heads = 1;
  std::size_t head_dim = 1;

  std::size_t model_dim() const { return num_heads * head_dim; }
  double score_scale() const { return 1.0 / std::sqrt(static_cast<double>(head_dim)); }
};

// Gate order within the 4H axis: input, forget, cell, output.
struct LstmCellWeights {
  Tensor w_input;   // I x 4H
  Tensor w_hidden;  // H x 4H
  Tensor bias;      // 4H

  std::size_t hidden() const { return w_hidden.extent(0); }
};

struct BlstmLayer {
  LstmCellWeights fwd;
  LstmCellWeights bwd;
};

struct AttentionResult {
  Tensor output;
  std::vector<Tensor> probs;  // one Tq x Tk matrix per head
};

// Per head: softmax((Q Wq)(K Wk)^T / sqrt(head_dim)) (K Wv); heads are
// concatenated along the feature axis. `keys` serve as both keys and values.
inline AttentionResult cross_attention_with_probs(const Tensor& queries,
                                                  const Tensor& keys,
                                                  const AttentionWeights& w) {
  if (keys.rows() == 0) throw ContractError("cross attention needs >= 1 key");
  if (w.wq.extent(1) != w.model_dim() || w.wk.extent(1) != w.model_dim() ||
      w.wv.extent(1) != w.model_dim()) {
    throw DimensionError("attention weights do not match num_heads*head_dim");
  }
  const Tensor none;
  const Tensor q = linear(queries, w.wq, none);
  const Tensor k = linear(keys, w.wk, none);
  const Tensor v = linear(keys, w.wv, none);
  AttentionResult res;
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < w.num_heads; ++h) {
    const std::size_t b = h * w.head_dim, e = b + w.head_dim;
    const Tensor qh = w.num_heads == 1 ? q : slice_cols(q, b, e);
    const Tensor kh = w.num_heads == 1 ? k : slice_cols(k, b, e);
    const Tensor vh = w.num_heads == 1 ? v : slice_cols(v, b, e);
    Tensor probs =
        softmax_last(scale(matmul(qh, transpose(kh)), w.score_scale()));
    heads.push_back(matmul(probs, vh));
    res.probs.push_back(std::move(probs));
  }
  res.output = heads.size() == 1 ? heads[0] : concat_cols(heads);
  return res;
}

inline Tensor multi_head_cross_attention(const Tensor& queries,
                                         const Tensor& keys,
                                         const AttentionWeights& w) {
  return cross_attention_with_probs(queries, keys, w).output;
}

struct LstmRun {
  Tensor outputs;  // L x H, in input order
  Tensor final_hidden;  // 1 x H
};

// Runs one LSTM direction over `seq` (L x I). With `reverse` the sequence is
// consumed from the last row to the first; outputs stay aligned with input
// rows either way.
inline LstmRun lstm_run(const Tensor& seq, const LstmCellWeights& w,
                        bool reverse) {
  const std::size_t L = seq.rows(), H = w.hidden();
  if (L == 0) throw ContractError("lstm over an empty sequence");
  const Tensor none;
  const Tensor xw = linear(seq, w.w_input, w.bias);  // L x 4H
  Tensor h = Tensor::zeros({1, H});
  Tensor c = Tensor::zeros({1, H});
  std::vector<Tensor> outs(L);
  for (std::size_t step = 0; step < L; ++step) {
    const std::size_t t = reverse ? L - 1 - step : step;
    const Tensor gates = add(slice_rows(xw, t, t + 1), linear(h, w.w_hidden, none));
    const Tensor i = sigmoid(slice_cols(gates, 0, H));
    const Tensor f = sigmoid(slice_cols(gates, H, 2 * H));
    const Tensor g = tanh(slice_cols(gates, 2 * H, 3 * H));
    const Tensor o = sigmoid(slice_cols(gates, 3 * H, 4 * H));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, tanh(c));
    outs[t] = h;
  }
  return {concat_rows(outs), h};
}

// Final states of a stacked BLSTM: [h_fwd after row L, h_bwd after row 1] of
// the top layer, as a 1 x 2H row. Lower layers feed their per-row
// [fwd | bwd] outputs upward.
inline Tensor blstm_encode(const Tensor& seq, std::span<const BlstmLayer> layers) {
  if (seq.rows() == 0 || layers.empty()) {
    throw ContractError("blstm_encode needs a non-empty sequence and >= 1 layer");
  }
  Tensor input = seq;
  Tensor result;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const LstmRun f = lstm_run(input, layers[li].fwd, false);
    const LstmRun b = lstm_run(input, layers[li].bwd, true);
    if (li + 1 == layers.size()) {
      result = concat_cols({f.final_hidden, b.final_hidden});
    } else {
      input = concat_cols({f.outputs, b.outputs});
    }
  }
  return result;
}

inline Tensor blstm_encode(const Tensor& seq, const LstmCellWeights& fwd,
                           const LstmCellWeights& bwd) {
  const BlstmLayer layer{fwd, bwd};
  return blstm_encode(seq, std::span<const BlstmLayer>(&layer, 1));
}

// Projections of a causal multi-head self-attention (with output projection).
struct SelfAttentionWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t num_heads = 1;
};

inline Tensor causal_self_attention(const Tensor& x,
                                    const SelfAttentionWeights& w) {
  const std::size_t d = x.cols();
  if (d % w.num_heads != 0) {
    throw DimensionError("self attention: model dim not divisible by heads");
  }
  const std::size_t hd = d / w.num_heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(hd));
  const Tensor q = linear(x, w.wq, w.bq);
  const Tensor k = linear(x, w.wk, w.bk);
  const Tensor v = linear(x, w.wv, w.bv);
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < w.num_heads; ++h) {
    const std::size_t b = h * hd, e = b + hd;
    const Tensor probs = causal_softmax(
        scale(matmul(slice_cols(q, b, e), transpose(slice_cols(k, b, e))), s));
    heads.push_back(matmul(probs, slice_cols(v, b, e)));
  }
  return linear(heads.size() == 1 ? heads[0] : concat_cols(heads), w.wo, w.bo);
}

}  // namespace scct
