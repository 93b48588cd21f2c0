#include "emdr/evalqa.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "emdr/kernels.hpp"

namespace emdr {

namespace {

bool is_punct_token(const std::string& t) {
  if (t.empty()) return true;
  for (char c : t)
    if (!std::ispunct(static_cast<unsigned char>(c))) return false;
  return true;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool is_article(const std::string& t) {
  return t == "a" || t == "an" || t == "the";
}

bool contains_subsequence(const std::vector<std::string>& haystack,
                          const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  for (size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    bool hit = true;
    for (size_t j = 0; j < needle.size(); ++j)
      if (haystack[i + j] != needle[j]) {
        hit = false;
        break;
      }
    if (hit) return true;
  }
  return false;
}

}  // namespace

std::vector<std::string> normalize_answer(std::vector<std::string> tokens) {
  for (auto& t : tokens) t = lower(std::move(t));
  // strip leading/trailing punctuation-only tokens
  size_t b = 0, e = tokens.size();
  while (b < e && is_punct_token(tokens[b])) ++b;
  while (e > b && is_punct_token(tokens[e - 1])) --e;
  std::vector<std::string> out;
  for (size_t i = b; i < e; ++i) {
    const auto& t = tokens[i];
    if (is_article(t)) continue;
    // collapse runs of identical separator tokens
    if (is_punct_token(t) && !out.empty() && out.back() == t) continue;
    out.push_back(t);
  }
  return out;
}

int exact_match(const std::vector<std::string>& prediction,
                const std::vector<std::vector<std::string>>& references) {
  if (references.empty())
    throw std::invalid_argument("exact_match: empty reference list");
  const auto pred = normalize_answer(prediction);
  for (const auto& r : references)
    if (normalize_answer(r) == pred) return 1;
  return 0;
}

int precision_at_k(const std::vector<std::vector<std::string>>& retrieved,
                   const std::vector<std::vector<std::string>>& references,
                   int k) {
  if (k < 1) throw std::invalid_argument("precision_at_k: k >= 1");
  if (k > static_cast<int>(retrieved.size()))
    throw std::invalid_argument("precision_at_k: k exceeds retrieved count");
  std::vector<std::vector<std::string>> needles;
  for (const auto& r : references) {
    auto n = normalize_answer(r);
    if (!n.empty()) needles.push_back(std::move(n));
  }
  for (int i = 0; i < k; ++i) {
    std::vector<std::string> hay;
    hay.reserve(retrieved[i].size());
    for (const auto& t : retrieved[i]) hay.push_back(lower(t));
    for (const auto& needle : needles)
      if (contains_subsequence(hay, needle)) return 1;
  }
  return 0;
}

EvalReport evaluate(const ParamSet& phi_q, const RetrieverConfig& rcfg,
                    const ParamSet& theta, const ReaderConfig& dcfg,
                    const IndexSnapshot& index, const Corpus& corpus,
                    const std::vector<QAExample>& dataset,
                    const EvalConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  EvalReport report;
  report.n = static_cast<int>(dataset.size());
  report.records.resize(dataset.size());

  const auto& vocab = corpus.vocab;
  const int n = report.n;
#pragma omp parallel for schedule(dynamic) num_threads(kernels::max_threads())
  for (int i = 0; i < n; ++i) {
    const QAExample& ex = dataset[i];
    std::vector<int> q_tokens{Vocabulary::kCls};
    q_tokens.insert(q_tokens.end(), ex.question.begin(), ex.question.end());
    ad::Tensor q_vec = encode_question(phi_q, rcfg, q_tokens);
    auto hits = index.top_k(q_vec.values(), cfg.k);

    EvalRecord rec;
    rec.question_id = i;
    rec.index_version = index.version;
    std::vector<std::vector<int>> inputs;
    std::vector<std::vector<std::string>> doc_tokens;
    for (const auto& [id, s] : hits) {
      rec.retrieved_ids.push_back(id);
      const Document& d = corpus.docs[id];
      std::vector<int> all = d.title;
      all.insert(all.end(), d.text.begin(), d.text.end());
      doc_tokens.push_back(vocab.decode(all));
      inputs.push_back(
          build_reader_input(ex.question, d, corpus, dcfg.input_len));
    }
    EncodedMemory mem = encode_documents(theta, dcfg, inputs);
    rec.prediction = greedy_decode(theta, dcfg, mem.states, cfg.max_answer_len);

    std::vector<std::vector<std::string>> refs;
    for (const auto& a : ex.answers) refs.push_back(vocab.decode(a));
    rec.matched = exact_match(vocab.decode(rec.prediction), refs) == 1;
    for (int k : cfg.p_at_k_list)
      if (k <= static_cast<int>(doc_tokens.size()))
        rec.p_at_k[k] = precision_at_k(doc_tokens, refs, k);
    report.records[i] = std::move(rec);
  }

  int matched = 0;
  std::map<int, int> pk_sum;
  for (const auto& rec : report.records) {
    matched += rec.matched ? 1 : 0;
    for (const auto& [k, v] : rec.p_at_k) pk_sum[k] += v;
  }
  report.em = static_cast<double>(matched) / report.n;
  for (const auto& [k, v] : pk_sum)
    report.p_at_k[k] = static_cast<double>(v) / report.n;
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["dataset"] = dataset;
  j["split"] = split;
  j["n"] = n;
  j["em"] = em;
  nlohmann::json pk;
  for (const auto& [k, v] : p_at_k) pk[std::to_string(k)] = v;
  j["p_at_k"] = pk;
  return j.dump(2);
}

void EvalReport::save_records_jsonl(const std::string& path,
                                    const Vocabulary& vocab) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("EvalReport: cannot open " + path);
  for (const auto& rec : records) {
    nlohmann::json row;
    row["question_id"] = rec.question_id;
    row["prediction"] = vocab.decode_string(rec.prediction);
    row["matched"] = rec.matched;
    row["retrieved"] = rec.retrieved_ids;
    row["index_version"] = rec.index_version;
    os << row.dump() << '\n';
  }
}

}  // namespace emdr
