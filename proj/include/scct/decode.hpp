#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <vector>

#include "scct/fusion.hpp"
#include "scct/model.hpp"

namespace scct {

struct GreedyOptions {
  std::size_t max_symbols_per_frame = 4;
  const HintTrie* trie = nullptr;  // shallow fusion when set
};

// Frame-synchronous greedy search. `scorer(t, history)` returns the
// log-distribution over blank + tokens for frame t given the emitted
// history. Non-blank candidates receive the fusion delta of emitting them;
// ties go to the lowest id.
template <class Scorer>
TokenSeq greedy_search(std::size_t frames, Scorer&& scorer,
                       const GreedyOptions& opt) {
  TokenSeq hist;
  FusionState fstate;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t emitted = 0; emitted < opt.max_symbols_per_frame; ++emitted) {
      const std::vector<double> lp = scorer(t, std::span<const std::size_t>(hist));
      std::size_t best = 0;
      double best_score = lp[0];
      FusionState best_state = fstate;
      for (std::size_t k = 1; k < lp.size(); ++k) {
        double s = lp[k];
        FusionState ns = fstate;
        if (opt.trie) {
          const FusionStep step = fusion_step(fstate, k, *opt.trie);
          s += step.delta;
          ns = step.state;
        }
        if (s > best_score) {
          best = k;
          best_score = s;
          best_state = ns;
        }
      }
      if (best == 0) break;
      hist.push_back(best);
      fstate = best_state;
    }
  }
  return hist;
}

struct DecodeOptions {
  bool use_context = true;  // feed hints to the context encoders
  bool use_fusion = false;
  double boost = 0.3;
};

// Greedy decoding of one utterance with the context transducer. The context
// encoders see `hints` whenever use_context is set; shallow fusion over the
// same hints is applied independently when use_fusion is set.
inline TokenSeq greedy_decode(const Tensor& features,
                              const std::vector<TokenSeq>& hints,
                              const ModelParams& p, const ModelConfig& cfg,
                              const DecodeOptions& opt) {
  NoGradScope no_grad;
  if (opt.use_fusion && hints.empty()) {
    throw ContractError("shallow fusion requested without hints");
  }
  const std::vector<TokenSeq> no_hints;
  const AudioContext a =
      encode_with_context(features, opt.use_context ? hints : no_hints, p, cfg);
  std::optional<HintTrie> trie;
  if (opt.use_fusion) trie.emplace(hints, opt.boost);

  auto scorer = [&](std::size_t t, std::span<const std::size_t> hist) {
    // Only the last predictor_kernel tokens reach the final predictor row.
    const std::size_t keep = std::min(hist.size(), cfg.predictor_kernel);
    const Tensor h_d = predict_labels(hist.subspan(hist.size() - keep), p, cfg);
    const Tensor last = slice_rows(h_d, h_d.rows() - 1, h_d.rows());
    const ScResult r = self_consistent_joiner(slice_rows(a.h_ac, t, t + 1), last,
                                              a.ctx_joiner, p, cfg, LoopMode::kInfer);
    const Tensor lp = log_softmax_last(output_logits(r.z, p));
    return std::vector<double>(lp.data().begin(), lp.data().end());
  };
  GreedyOptions g{cfg.max_symbols_per_frame, trie ? &*trie : nullptr};
  return greedy_search(a.h_ac.rows(), scorer, g);
}

}  // namespace scct
