#pragma once

#include <map>
#include <string>
#include <vector>

#include "emdr/corpus.hpp"
#include "emdr/index.hpp"
#include "emdr/reader.hpp"
#include "emdr/retriever.hpp"

namespace emdr {

// Lowercase, strip leading/trailing punctuation tokens, drop articles,
// collapse repeated separator tokens. Deterministic and idempotent.
std::vector<std::string> normalize_answer(std::vector<std::string> tokens);

// 1 iff the normalized prediction equals some normalized reference.
int exact_match(const std::vector<std::string>& prediction,
                const std::vector<std::vector<std::string>>& references);

// 1 iff one of the first k documents (given as title + text token strings)
// contains a normalized reference as a contiguous token subsequence.
int precision_at_k(const std::vector<std::vector<std::string>>& retrieved,
                   const std::vector<std::vector<std::string>>& references,
                   int k);

struct EvalConfig {
  int k = 5;                           // retrieved documents per question
  std::vector<int> p_at_k_list = {1, 5};
  int max_answer_len = 8;
  double tau = 1.0;
};

struct EvalRecord {
  int question_id = -1;
  std::vector<int> prediction;  // token ids
  bool matched = false;
  std::vector<int> retrieved_ids;
  long index_version = -1;
  std::map<int, int> p_at_k;
};

struct EvalReport {
  std::string dataset;
  std::string split;
  int n = 0;
  double em = 0.0;
  std::map<int, double> p_at_k;
  std::vector<EvalRecord> records;

  std::string to_json() const;
  void save_records_jsonl(const std::string& path,
                          const Vocabulary& vocab) const;
};

// Retrieve top-K with the supplied (frozen) question encoder, greedy-decode,
// score EM and P@K. Deterministic given parameters, snapshot, and dataset.
EvalReport evaluate(const ParamSet& phi_q, const RetrieverConfig& rcfg,
                    const ParamSet& theta, const ReaderConfig& dcfg,
                    const IndexSnapshot& index, const Corpus& corpus,
                    const std::vector<QAExample>& dataset,
                    const EvalConfig& cfg);

}  // namespace emdr
