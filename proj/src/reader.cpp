#include "emdr/reader.hpp"

#include <stdexcept>

#include "emdr/vocab.hpp"

namespace emdr {

using ad::Tensor;

void init_reader(ParamSet& theta, const ReaderConfig& cfg, uint64_t seed) {
  if (cfg.enc.width != cfg.dec.width)
    throw std::invalid_argument("reader: encoder/decoder width mismatch");
  std::mt19937_64 rng(seed);
  init_encoder_params(theta, "enc.", cfg.enc, rng);
  init_decoder_params(theta, "dec.", cfg.dec, rng);
}

Tensor EncodedMemory::segment(int idx) const {
  if (idx < 0 || idx >= k)
    throw std::invalid_argument("EncodedMemory: segment index out of range");
  return ad::slice_rows(states, idx * n, (idx + 1) * n);
}

EncodedMemory encode_documents(const ParamSet& theta, const ReaderConfig& cfg,
                               const std::vector<std::vector<int>>& inputs) {
  if (inputs.empty())
    throw std::invalid_argument("encode_documents: no inputs");
  std::vector<Tensor> segments;
  segments.reserve(inputs.size());
  for (const auto& x : inputs) {
    if (static_cast<int>(x.size()) != cfg.input_len)
      throw std::invalid_argument(
          "encode_documents: input length " + std::to_string(x.size()) +
          " != N = " + std::to_string(cfg.input_len));
    segments.push_back(encoder_forward(theta, "enc.", cfg.enc, x));
  }
  EncodedMemory mem;
  mem.states = ad::concat_rows(segments);
  mem.n = cfg.input_len;
  mem.k = static_cast<int>(inputs.size());
  return mem;
}

Tensor answer_log_prob(const ParamSet& theta, const ReaderConfig& cfg,
                       const std::vector<int>& answer, const Tensor& memory) {
  const int t_len = static_cast<int>(answer.size());
  if (t_len < 1)
    throw std::invalid_argument("answer_log_prob: empty answer");
  if (t_len > cfg.dec.max_pos - 1)
    throw std::invalid_argument("answer_log_prob: answer exceeds max length");
  for (int a : answer)
    if (a < 0 || a >= cfg.dec.vocab)
      throw std::invalid_argument("answer_log_prob: token outside vocabulary");
  // [CLS] starts decoding; targets are the answer tokens themselves
  std::vector<int> dec_in;
  dec_in.reserve(t_len);
  dec_in.push_back(Vocabulary::kCls);
  dec_in.insert(dec_in.end(), answer.begin(), answer.end() - 1);
  Tensor logits = decoder_logits(theta, "dec.", cfg.dec, dec_in, memory);
  Tensor logp = ad::log_softmax_rows(logits);
  return ad::sum(ad::pick_rowwise(logp, answer));
}

std::vector<int> greedy_decode(const ParamSet& theta, const ReaderConfig& cfg,
                               const Tensor& memory, int max_len) {
  if (max_len < 1)
    throw std::invalid_argument("greedy_decode: max_len >= 1");
  std::vector<int> out;
  std::vector<int> dec_in{Vocabulary::kCls};
  for (int t = 0; t < max_len; ++t) {
    Tensor logits = decoder_logits(theta, "dec.", cfg.dec, dec_in, memory);
    const int v = logits.cols();
    const double* last = &logits.values()[static_cast<size_t>(t) * v];
    int best = 0;
    for (int c = 1; c < v; ++c)
      if (last[c] > last[best]) best = c;  // strict: ties keep the lowest id
    if (best == Vocabulary::kEos) break;
    out.push_back(best);
    dec_in.push_back(best);
  }
  return out;
}

}  // namespace emdr
