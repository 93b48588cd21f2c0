#include "emdr/transformer.hpp"

#include <stdexcept>

namespace emdr {

using ad::Tensor;

namespace {

void init_layer_norm(ParamSet& set, const std::string& name, int width) {
  set.add(name + ".g", {width}, std::vector<double>(width, 1.0));
  set.add(name + ".b", {width}, std::vector<double>(width, 0.0));
}

void init_attention(ParamSet& set, const std::string& name, int width,
                    std::mt19937_64& rng) {
  for (const char* w : {"wq", "wk", "wv", "wo"})
    set.add(name + "." + w, {width, width}, xavier_init(width, width, rng));
}

void init_ffn(ParamSet& set, const std::string& name, int width, int hidden,
              std::mt19937_64& rng) {
  set.add(name + ".w1", {width, hidden}, xavier_init(width, hidden, rng));
  set.add(name + ".b1", {hidden}, std::vector<double>(hidden, 0.0));
  set.add(name + ".w2", {hidden, width}, xavier_init(hidden, width, rng));
  set.add(name + ".b2", {width}, std::vector<double>(width, 0.0));
}

void init_embeddings(ParamSet& set, const std::string& prefix,
                     const TransformerConfig& cfg, std::mt19937_64& rng) {
  set.add(prefix + "emb.tok", {cfg.vocab, cfg.width},
          normal_init(static_cast<size_t>(cfg.vocab) * cfg.width, 0.02, rng));
  set.add(prefix + "emb.pos", {cfg.max_pos, cfg.width},
          normal_init(static_cast<size_t>(cfg.max_pos) * cfg.width, 0.02, rng));
}

Tensor embed(const ParamSet& set, const std::string& prefix,
             const TransformerConfig& cfg, const std::vector<int>& tokens) {
  if (tokens.empty())
    throw std::invalid_argument("transformer: empty token sequence");
  if (static_cast<int>(tokens.size()) > cfg.max_pos)
    throw std::invalid_argument(
        "transformer: sequence of length " + std::to_string(tokens.size()) +
        " exceeds position table of " + std::to_string(cfg.max_pos));
  std::vector<int> positions(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i) positions[i] = static_cast<int>(i);
  return ad::add(ad::gather_rows(set.get(prefix + "emb.tok"), tokens),
                 ad::gather_rows(set.get(prefix + "emb.pos"), positions));
}

Tensor apply_ln(const ParamSet& set, const std::string& name, const Tensor& x) {
  return ad::layer_norm(x, set.get(name + ".g"), set.get(name + ".b"));
}

Tensor apply_ffn(const ParamSet& set, const std::string& name, const Tensor& x) {
  Tensor h = ad::relu(ad::add(ad::matmul(x, set.get(name + ".w1")),
                              set.get(name + ".b1")));
  return ad::add(ad::matmul(h, set.get(name + ".w2")), set.get(name + ".b2"));
}

Tensor apply_attention(const ParamSet& set, const std::string& name,
                       const Tensor& q_in, const Tensor& kv_in, int heads,
                       bool causal) {
  return multihead_attention(q_in, kv_in, set.get(name + ".wq"),
                             set.get(name + ".wk"), set.get(name + ".wv"),
                             set.get(name + ".wo"), heads, causal);
}

}  // namespace

Tensor multihead_attention(const Tensor& q_in, const Tensor& kv_in,
                           const Tensor& wq, const Tensor& wk,
                           const Tensor& wv, const Tensor& wo, int heads,
                           bool causal) {
  const int width = wq.cols();
  if (heads < 1 || width % heads != 0)
    throw std::invalid_argument("attention: heads must divide width");
  Tensor q = ad::matmul(q_in, wq);
  Tensor k = ad::matmul(kv_in, wk);
  Tensor v = ad::matmul(kv_in, wv);
  Tensor ctx;
  if (heads == 1) {
    ctx = ad::scaled_dot_attention(q, k, v, causal);
  } else {
    const int dh = width / heads;
    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      const int c0 = h * dh, c1 = (h + 1) * dh;
      outs.push_back(ad::scaled_dot_attention(ad::slice_cols(q, c0, c1),
                                              ad::slice_cols(k, c0, c1),
                                              ad::slice_cols(v, c0, c1),
                                              causal));
    }
    ctx = ad::concat_cols(outs);
  }
  return ad::matmul(ctx, wo);
}

void init_encoder_params(ParamSet& set, const std::string& prefix,
                         const TransformerConfig& cfg, std::mt19937_64& rng) {
  init_embeddings(set, prefix, cfg, rng);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string lp = prefix + "l" + std::to_string(l);
    init_layer_norm(set, lp + ".ln1", cfg.width);
    init_attention(set, lp + ".attn", cfg.width, rng);
    init_layer_norm(set, lp + ".ln2", cfg.width);
    init_ffn(set, lp + ".ffn", cfg.width, cfg.width * cfg.ffn_mult, rng);
  }
  init_layer_norm(set, prefix + "lnf", cfg.width);
}

void init_decoder_params(ParamSet& set, const std::string& prefix,
                         const TransformerConfig& cfg, std::mt19937_64& rng) {
  init_embeddings(set, prefix, cfg, rng);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string lp = prefix + "l" + std::to_string(l);
    init_layer_norm(set, lp + ".ln1", cfg.width);
    init_attention(set, lp + ".self", cfg.width, rng);
    init_layer_norm(set, lp + ".ln2", cfg.width);
    init_attention(set, lp + ".cross", cfg.width, rng);
    init_layer_norm(set, lp + ".ln3", cfg.width);
    init_ffn(set, lp + ".ffn", cfg.width, cfg.width * cfg.ffn_mult, rng);
  }
  init_layer_norm(set, prefix + "lnf", cfg.width);
  set.add(prefix + "out", {cfg.width, cfg.vocab},
          xavier_init(cfg.width, cfg.vocab, rng));
}

Tensor encoder_forward(const ParamSet& set, const std::string& prefix,
                       const TransformerConfig& cfg,
                       const std::vector<int>& tokens) {
  Tensor x = embed(set, prefix, cfg, tokens);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string lp = prefix + "l" + std::to_string(l);
    Tensor h = apply_ln(set, lp + ".ln1", x);
    x = ad::add(x, apply_attention(set, lp + ".attn", h, h, cfg.heads,
                                   /*causal=*/false));
    x = ad::add(x, apply_ffn(set, lp + ".ffn", apply_ln(set, lp + ".ln2", x)));
  }
  return apply_ln(set, prefix + "lnf", x);
}

Tensor decoder_logits(const ParamSet& set, const std::string& prefix,
                      const TransformerConfig& cfg,
                      const std::vector<int>& tokens, const Tensor& memory) {
  if (memory.cols() != cfg.width)
    throw std::invalid_argument("decoder: memory width mismatch");
  Tensor x = embed(set, prefix, cfg, tokens);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string lp = prefix + "l" + std::to_string(l);
    Tensor h = apply_ln(set, lp + ".ln1", x);
    x = ad::add(x, apply_attention(set, lp + ".self", h, h, cfg.heads,
                                   /*causal=*/true));
    x = ad::add(x, apply_attention(set, lp + ".cross",
                                   apply_ln(set, lp + ".ln2", x), memory,
                                   cfg.heads, /*causal=*/false));
    x = ad::add(x, apply_ffn(set, lp + ".ffn", apply_ln(set, lp + ".ln3", x)));
  }
  x = apply_ln(set, prefix + "lnf", x);
  return ad::matmul(x, set.get(prefix + "out"));
}

}  // namespace emdr
