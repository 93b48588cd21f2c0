#include "emdr/retriever.hpp"

#include <stdexcept>

namespace emdr {

using ad::Tensor;

void init_retriever(ParamSet& phi_q, ParamSet& phi_d,
                    const RetrieverConfig& cfg, uint64_t seed) {
  std::mt19937_64 rng_q(seed);
  std::mt19937_64 rng_d(seed ^ 0x9e3779b97f4a7c15ull);
  init_encoder_params(phi_q, "q.", cfg.enc, rng_q);
  phi_q.add("q.proj", {cfg.enc.width, cfg.enc.width},
            xavier_init(cfg.enc.width, cfg.enc.width, rng_q));
  init_encoder_params(phi_d, "d.", cfg.enc, rng_d);
  phi_d.add("d.proj", {cfg.enc.width, cfg.enc.width},
            xavier_init(cfg.enc.width, cfg.enc.width, rng_d));
}

ad::Tensor encode_question(const ParamSet& phi_q, const RetrieverConfig& cfg,
                           const std::vector<int>& tokens) {
  if (tokens.empty() || tokens[0] != Vocabulary::kCls)
    throw std::invalid_argument("encode_question: tokens must start with [CLS]");
  Tensor states = encoder_forward(phi_q, "q.", cfg.enc, tokens);
  return ad::matmul(ad::slice_rows(states, 0, 1), phi_q.get("q.proj"));
}

ad::Tensor encode_document(const ParamSet& phi_d, const RetrieverConfig& cfg,
                           const Document& doc) {
  std::vector<int> tokens;
  tokens.reserve(2 + doc.title.size() + doc.text.size());
  tokens.push_back(Vocabulary::kCls);
  tokens.insert(tokens.end(), doc.title.begin(), doc.title.end());
  tokens.push_back(Vocabulary::kSep);
  tokens.insert(tokens.end(), doc.text.begin(), doc.text.end());
  if (static_cast<int>(tokens.size()) > cfg.enc.max_pos)
    tokens.resize(cfg.enc.max_pos);
  Tensor states = encoder_forward(phi_d, "d.", cfg.enc, tokens);
  return ad::matmul(ad::slice_rows(states, 0, 1), phi_d.get("d.proj"));
}

ad::Tensor score(const ad::Tensor& q_vec, const ad::Tensor& d_vec) {
  if (q_vec.size() != d_vec.size())
    throw std::invalid_argument("score: embedding width mismatch");
  return ad::dot(q_vec, d_vec);
}

ad::Tensor retrieval_distribution(const ad::Tensor& scores, double tau) {
  if (tau <= 0.0)
    throw std::invalid_argument("retrieval_distribution: tau must be > 0");
  if (scores.size() < 1)
    throw std::invalid_argument("retrieval_distribution: empty score set");
  return ad::softmax_rows(scores, tau);
}

}  // namespace emdr
