#pragma once

#include <cstddef>
#include <string>

#include "json.hpp"
#include "scct/errors.hpp"

namespace scct {

// Hyperparameters of the context transducer. Defaults are the desk-scale
// shape; the reference large model used 12 conformer layers of width 256,
// feed-forward 2048, a 2-layer BLSTM of width 256, 8 cross-attention heads
// and 500 output tokens.
struct ModelConfig {
  std::size_t feature_dim = 16;
  std::size_t num_encoder_layers = 2;
  std::size_t encoder_dim = 64;
  std::size_t feedforward_dim = 128;
  std::size_t self_attention_heads = 4;
  std::size_t cross_attention_heads = 2;
  std::size_t encoder_conv_kernel = 3;
  std::size_t embedding_dim = 32;  // shared by predictor and context encoders
  std::size_t predictor_kernel = 3;
  std::size_t predictor_dim = 64;
  std::size_t context_blstm_layers = 2;
  std::size_t context_dim = 32;  // per direction; hint embeddings are 2x this
  std::size_t vocab_size = 29;
  std::size_t blank_id = 0;
  std::size_t joiner_dim = 64;
  std::size_t max_sc_iters = 3;
  double sc_threshold = 1e-6;
  bool context_layernorm_enabled = true;
  std::size_t max_symbols_per_frame = 4;
  double layer_norm_eps = 1e-5;

  std::size_t context_out_dim() const { return 2 * context_dim; }

  void validate() const {
    auto fail = [](const std::string& what) {
      throw ContractError("invalid model config: " + what);
    };
    if (blank_id != 0) fail("blank_id must be 0");
    if (vocab_size < 2) fail("vocab_size must be >= 2");
    if (feature_dim == 0 || encoder_dim == 0 || feedforward_dim == 0 ||
        embedding_dim == 0 || predictor_dim == 0 || context_dim == 0 ||
        joiner_dim == 0) {
      fail("all dimensions must be positive");
    }
    if (self_attention_heads == 0 || encoder_dim % self_attention_heads != 0)
      fail("encoder_dim must be divisible by self_attention_heads");
    if (cross_attention_heads == 0 || encoder_dim % cross_attention_heads != 0)
      fail("encoder_dim must be divisible by cross_attention_heads");
    if (joiner_dim % cross_attention_heads != 0)
      fail("joiner_dim must be divisible by cross_attention_heads");
    if (predictor_kernel == 0 || encoder_conv_kernel == 0)
      fail("kernel sizes must be >= 1");
    if (context_blstm_layers == 0) fail("context_blstm_layers must be >= 1");
    if (max_sc_iters == 0) fail("max_sc_iters must be >= 1");
    if (!(sc_threshold > 0.0)) fail("sc_threshold must be > 0");
    if (max_symbols_per_frame == 0) fail("max_symbols_per_frame must be >= 1");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    ModelConfig, feature_dim, num_encoder_layers, encoder_dim, feedforward_dim,
    self_attention_heads, cross_attention_heads, encoder_conv_kernel,
    embedding_dim, predictor_kernel, predictor_dim, context_blstm_layers,
    context_dim, vocab_size, blank_id, joiner_dim, max_sc_iters, sc_threshold,
    context_layernorm_enabled, max_symbols_per_frame, layer_norm_eps)

// Rejects keys that `T` does not know about, then parses.
template <class T>
T parse_strict(const nlohmann::json& j, const char* what) {
  if (!j.is_object()) throw FormatError(std::string(what) + " must be an object");
  const nlohmann::json known = T{};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) {
      throw FormatError(std::string("unknown ") + what + " key '" + key + "'");
    }
  }
  return j.get<T>();
}

}  // namespace scct
