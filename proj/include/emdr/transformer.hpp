#pragma once

#include <random>
#include <string>
#include <vector>

#include "emdr/autodiff.hpp"
#include "emdr/params.hpp"

namespace emdr {

struct TransformerConfig {
  int vocab = 0;
  int max_pos = 64;
  int layers = 2;
  int width = 64;
  int heads = 1;
  int ffn_mult = 2;
};

// Parameter names are created under `prefix` (e.g. "enc." or "dec.").
void init_encoder_params(ParamSet& set, const std::string& prefix,
                         const TransformerConfig& cfg, std::mt19937_64& rng);
void init_decoder_params(ParamSet& set, const std::string& prefix,
                         const TransformerConfig& cfg, std::mt19937_64& rng);

// Pre-LN transformer encoder; returns the final-layer states [T, width].
ad::Tensor encoder_forward(const ParamSet& set, const std::string& prefix,
                           const TransformerConfig& cfg,
                           const std::vector<int>& tokens);

// Decoder with causal self-attention and cross-attention over `memory`
// ([Tm, width]); returns vocabulary logits [T, vocab].
ad::Tensor decoder_logits(const ParamSet& set, const std::string& prefix,
                          const TransformerConfig& cfg,
                          const std::vector<int>& tokens,
                          const ad::Tensor& memory);

// Multi-head attention around ad::scaled_dot_attention; wq..wo are [W, W].
ad::Tensor multihead_attention(const ad::Tensor& q_in, const ad::Tensor& kv_in,
                               const ad::Tensor& wq, const ad::Tensor& wk,
                               const ad::Tensor& wv, const ad::Tensor& wo,
                               int heads, bool causal);

}  // namespace emdr
