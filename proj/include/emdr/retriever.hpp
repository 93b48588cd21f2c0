#pragma once

#include <cstdint>
#include <vector>

#include "emdr/corpus.hpp"
#include "emdr/transformer.hpp"

namespace emdr {

// Dual-encoder retriever: disjoint question/document parameter sets emitting
// vectors of the same width, scored by dot product.
struct RetrieverConfig {
  TransformerConfig enc;  // enc.width is the embedding width
};

void init_retriever(ParamSet& phi_q, ParamSet& phi_d,
                    const RetrieverConfig& cfg, uint64_t seed);

// Final-layer [CLS] representation, projected; tokens must begin with [CLS].
ad::Tensor encode_question(const ParamSet& phi_q, const RetrieverConfig& cfg,
                           const std::vector<int>& tokens);

// Encodes [CLS] title [SEP] text (text truncated to the position table).
ad::Tensor encode_document(const ParamSet& phi_d, const RetrieverConfig& cfg,
                           const Document& doc);

ad::Tensor score(const ad::Tensor& q_vec, const ad::Tensor& d_vec);

// Eq-5 style temperature softmax over raw scores, max-shifted.
ad::Tensor retrieval_distribution(const ad::Tensor& scores, double tau);

// Ordered top-K result served from one index snapshot.
struct RetrievedSet {
  int question_id = -1;
  std::vector<int> doc_ids;      // distinct, |doc_ids| = K
  std::vector<double> scores;    // descending, ties broken by ascending id
  std::vector<double> probs;     // sums to 1
  double tau = 1.0;
  long index_version = -1;
};

}  // namespace emdr
