#pragma once

#include <cstdint>
#include <vector>

#include "emdr/transformer.hpp"

namespace emdr {

// Miniature fusion-in-decoder reader: each retrieved document is encoded
// independently; the concatenated states are the decoder's cross-attention
// memory.
struct ReaderConfig {
  TransformerConfig enc;
  TransformerConfig dec;
  int input_len = 64;       // N, fixed length of every reader input
  int max_answer_len = 8;
};

void init_reader(ParamSet& theta, const ReaderConfig& cfg, uint64_t seed);

struct EncodedMemory {
  ad::Tensor states;  // (N * K) x H
  int n = 0;          // tokens per document
  int k = 0;          // number of documents
  ad::Tensor segment(int idx) const;  // rows [idx*N, (idx+1)*N)
};

// inputs are K reader inputs of length exactly N each.
EncodedMemory encode_documents(const ParamSet& theta, const ReaderConfig& cfg,
                               const std::vector<std::vector<int>>& inputs);

// Teacher-forced sum over answer tokens of log p(a_t | a_<t, memory).
ad::Tensor answer_log_prob(const ParamSet& theta, const ReaderConfig& cfg,
                           const std::vector<int>& answer,
                           const ad::Tensor& memory);

// Argmax decoding (ties to the lowest token id) until EOS or max_len.
std::vector<int> greedy_decode(const ParamSet& theta, const ReaderConfig& cfg,
                               const ad::Tensor& memory, int max_len);

}  // namespace emdr
