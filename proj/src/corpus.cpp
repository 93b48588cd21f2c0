#include "emdr/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace emdr {

namespace {

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

}  // namespace

std::vector<std::pair<int, int>> sentence_ranges(const std::vector<int>& text,
                                                 int delimiter_id) {
  std::vector<std::pair<int, int>> out;
  int start = 0;
  for (int i = 0; i < static_cast<int>(text.size()); ++i) {
    if (text[i] == delimiter_id) {
      if (i > start) out.emplace_back(start, i);
      start = i + 1;
    }
  }
  if (start < static_cast<int>(text.size()))
    out.emplace_back(start, static_cast<int>(text.size()));
  return out;
}

GeneratedData generate_corpus(const WorldSpec& spec, uint64_t seed) {
  const int E = spec.entities, R = spec.relations, M = spec.documents;
  const int F = spec.facts_per_doc, L = spec.answer_tokens;
  if (L < 1) throw std::invalid_argument("generate_corpus: answer_tokens >= 1");
  const bool has_distractors = spec.distractor_fraction > 0.0;
  if (M < 10) throw std::invalid_argument("generate_corpus: documents >= 10");
  if (spec.distractor_fraction < 0.0 || spec.distractor_fraction >= 1.0)
    throw std::invalid_argument("generate_corpus: distractor fraction in [0,1)");
  if (F < 1) throw std::invalid_argument("generate_corpus: facts_per_doc >= 1");
  if (E < 4 || R < (has_distractors ? 2 * F : F))
    throw std::invalid_argument(
        "generate_corpus: infeasible spec, more facts requested than "
        "entity/relation combinations");

  std::mt19937_64 rng(seed);
  GeneratedData out;
  Corpus& corpus = out.corpus;
  corpus.vocab = Vocabulary::with_reserved();
  const int period = corpus.vocab.add(".");
  std::vector<int> rel_tok(R), ent_tok(E);
  for (int r = 0; r < R; ++r) rel_tok[r] = corpus.vocab.add("rel" + std::to_string(r));
  for (int e = 0; e < E; ++e) ent_tok[e] = corpus.vocab.add("ent" + std::to_string(e));

  // answer entities are only ever mentioned as objects of queried facts
  const int n_answers = E / 2;
  std::vector<int> answers(n_answers), subjects(E - n_answers);
  for (int e = 0; e < n_answers; ++e) answers[e] = e;
  for (int e = n_answers; e < E; ++e) subjects[e - n_answers] = e;

  // per-subject relation split: queried vs distractor-only
  const int n_q = has_distractors ? R / 2 : R;
  std::vector<std::vector<int>> qrels(subjects.size()), drels(subjects.size());
  // objects are L-token sequences: answer entities for queried facts, other
  // subject entities for distractor noise
  std::vector<std::vector<std::vector<int>>> fact_obj(subjects.size()),
      noise_obj(subjects.size());
  for (size_t si = 0; si < subjects.size(); ++si) {
    std::vector<int> rel(R);
    for (int r = 0; r < R; ++r) rel[r] = r;
    std::shuffle(rel.begin(), rel.end(), rng);
    qrels[si].assign(rel.begin(), rel.begin() + n_q);
    drels[si].assign(rel.begin() + n_q, rel.end());
    fact_obj[si].assign(R, {});
    noise_obj[si].assign(R, {});
    std::uniform_int_distribution<int> pick_answer(0, n_answers - 1);
    std::uniform_int_distribution<int> pick_subject(
        0, static_cast<int>(subjects.size()) - 1);
    for (int r : qrels[si])
      for (int t = 0; t < L; ++t)
        fact_obj[si][r].push_back(answers[pick_answer(rng)]);
    for (int r : drels[si])
      for (int t = 0; t < L; ++t) {
        int o;
        do {
          o = subjects[pick_subject(rng)];
        } while (o == subjects[si] && subjects.size() > 1);
        noise_obj[si][r].push_back(o);
      }
  }

  const int n_distract =
      static_cast<int>(std::lround(spec.distractor_fraction * M));
  std::vector<char> is_distractor(M, 0);
  std::fill(is_distractor.begin(), is_distractor.begin() + n_distract, 1);
  std::shuffle(is_distractor.begin(), is_distractor.end(), rng);

  // fact key (subject index, relation) -> provenance doc
  std::vector<std::vector<int>> fact_doc(subjects.size(),
                                         std::vector<int>(R, -1));

  std::uniform_int_distribution<int> pick_si(
      0, static_cast<int>(subjects.size()) - 1);
  for (int i = 0; i < M; ++i) {
    Document doc;
    doc.id = i;
    const int si = pick_si(rng);
    const int s_ent = subjects[si];
    doc.title = {ent_tok[s_ent]};
    std::vector<int> rels = is_distractor[i] ? drels[si] : qrels[si];
    std::shuffle(rels.begin(), rels.end(), rng);
    rels.resize(F);
    for (int r : rels) {
      const std::vector<int>& obj =
          is_distractor[i] ? noise_obj[si][r] : fact_obj[si][r];
      const int base = static_cast<int>(doc.text.size());
      doc.text.push_back(ent_tok[s_ent]);
      doc.text.push_back(rel_tok[r]);
      for (int o : obj) doc.text.push_back(ent_tok[o]);
      doc.text.push_back(period);
      doc.spans.emplace_back(base, base + 1);
      doc.spans.emplace_back(base + 2, base + 2 + L);
      if (!is_distractor[i]) fact_doc[si][r] = i;
    }
    if (static_cast<int>(doc.text.size()) > corpus.segment_len)
      throw std::invalid_argument("generate_corpus: segment length exceeded");
    corpus.docs.push_back(std::move(doc));
  }

  std::vector<QAExample> qa;
  for (size_t si = 0; si < subjects.size(); ++si)
    for (int r = 0; r < R; ++r) {
      const int prov = fact_doc[si][r];
      if (prov < 0) continue;
      QAExample ex;
      // cloze-style question: the fact sentence with its object masked, so
      // question tokens line up with evidence sentences position by position
      ex.question = {ent_tok[subjects[si]], rel_tok[r]};
      for (int t = 0; t < L; ++t) ex.question.push_back(Vocabulary::kMask);
      ex.question.push_back(period);
      std::vector<int> answer;
      for (int o : fact_obj[si][r]) answer.push_back(ent_tok[o]);
      ex.answers = {std::move(answer)};
      ex.provenance_doc = prov;
      qa.push_back(std::move(ex));
    }
  if (qa.empty())
    throw std::invalid_argument("generate_corpus: no answerable facts");
  std::shuffle(qa.begin(), qa.end(), rng);
  const int n = static_cast<int>(qa.size());
  const int n_dev = std::max(1, n / 10);
  const int n_test = std::max(1, n / 10);
  for (int i = 0; i < n; ++i) {
    if (i < n_dev) {
      qa[i].split = "dev";
      out.dev.push_back(qa[i]);
    } else if (i < n_dev + n_test) {
      qa[i].split = "test";
      out.test.push_back(qa[i]);
    } else {
      qa[i].split = "train";
      out.train.push_back(qa[i]);
    }
  }
  return out;
}

std::vector<IctExample> make_ict_examples(const Corpus& corpus, int n,
                                          uint64_t seed, double keep_prob) {
  if (n < 1) throw std::invalid_argument("make_ict_examples: n >= 1");
  const int period = corpus.vocab.id(".");
  std::vector<int> usable;
  for (const auto& d : corpus.docs)
    if (!sentence_ranges(d.text, period).empty()) usable.push_back(d.id);
  if (usable.empty())
    throw std::invalid_argument("make_ict_examples: corpus has no sentences");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_doc(0,
                                              static_cast<int>(usable.size()) - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<IctExample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Document& doc = corpus.docs[usable[pick_doc(rng)]];
    const auto ranges = sentence_ranges(doc.text, period);
    std::uniform_int_distribution<int> pick_sent(
        0, static_cast<int>(ranges.size()) - 1);
    const auto [s, e] = ranges[pick_sent(rng)];
    IctExample ex;
    ex.query.assign(doc.text.begin() + s, doc.text.begin() + e);
    ex.source_doc = doc.id;
    ex.positive = doc;
    // single-sentence passages are always kept intact: removing the sentence
    // would leave an empty positive
    if (unit(rng) >= keep_prob && ranges.size() >= 2) {
      // remove the sampled sentence (and its delimiter) from the passage
      auto& text = ex.positive.text;
      const int cut_end = std::min<int>(e + 1, static_cast<int>(text.size()));
      text.erase(text.begin() + s, text.begin() + cut_end);
      std::vector<std::pair<int, int>> spans;
      for (auto [a, b] : ex.positive.spans) {
        if (b <= s) spans.emplace_back(a, b);
        else if (a >= cut_end) spans.emplace_back(a - (cut_end - s), b - (cut_end - s));
      }
      ex.positive.spans = std::move(spans);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<QAExample> make_mss_examples(const Corpus& corpus, int n,
                                         uint64_t seed, double mask_rate) {
  if (n < 1) throw std::invalid_argument("make_mss_examples: n >= 1");
  const int period = corpus.vocab.id(".");
  std::vector<int> usable;
  for (const auto& d : corpus.docs)
    if (!d.spans.empty()) usable.push_back(d.id);
  if (usable.empty())
    throw std::invalid_argument("make_mss_examples: corpus has no salient spans");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_doc(0,
                                              static_cast<int>(usable.size()) - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<QAExample> out;
  out.reserve(n);
  while (static_cast<int>(out.size()) < n) {
    const Document& doc = corpus.docs[usable[pick_doc(rng)]];
    const auto ranges = sentence_ranges(doc.text, period);
    // sentences that contain at least one salient token
    std::vector<std::pair<int, int>> cands;
    for (auto [s, e] : ranges)
      for (auto [a, b] : doc.spans)
        if (a >= s && b <= e) {
          cands.emplace_back(s, e);
          break;
        }
    if (cands.empty()) continue;
    std::uniform_int_distribution<int> pick_sent(
        0, static_cast<int>(cands.size()) - 1);
    const auto [s, e] = cands[pick_sent(rng)];
    std::vector<int> salient;  // positions within [s, e)
    for (auto [a, b] : doc.spans)
      if (a >= s && b <= e)
        for (int p = a; p < b; ++p) salient.push_back(p);
    std::vector<int> masked;
    for (int p : salient)
      if (unit(rng) < mask_rate) masked.push_back(p);
    if (masked.empty()) {
      std::uniform_int_distribution<int> pick(
          0, static_cast<int>(salient.size()) - 1);
      masked.push_back(salient[pick(rng)]);
    }
    QAExample ex;
    ex.question.assign(doc.text.begin() + s, doc.text.begin() + e);
    std::vector<int> answer;
    for (int p : masked) {
      answer.push_back(doc.text[p]);
      ex.question[p - s] = Vocabulary::kMask;
    }
    ex.answers = {std::move(answer)};
    ex.split = "pretrain";
    ex.provenance_doc = doc.id;
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<int> pad_with_neighbors(const Corpus& corpus, int doc_id,
                                    int needed) {
  if (needed < 0) throw std::invalid_argument("pad_with_neighbors: needed >= 0");
  std::vector<int> out;
  out.reserve(needed);
  const int M = corpus.size();
  int j = 1;
  while (static_cast<int>(out.size()) < needed) {
    if (j > M && out.empty())
      throw std::runtime_error("pad_with_neighbors: corpus has no tokens");
    const auto& text = corpus.docs[(doc_id + j) % M].text;
    for (int t : text) {
      out.push_back(t);
      if (static_cast<int>(out.size()) == needed) break;
    }
    ++j;
  }
  return out;
}

std::vector<int> build_reader_input(const std::vector<int>& question,
                                    const Document& doc, const Corpus& corpus,
                                    int n) {
  const int q_min = 1 + static_cast<int>(question.size()) + 3;
  if (q_min > n)
    throw std::invalid_argument(
        "build_reader_input: question of length " +
        std::to_string(question.size()) + " plus markers needs " +
        std::to_string(q_min) + " tokens but n = " + std::to_string(n));
  const int fixed = 1 + static_cast<int>(question.size()) + 1 +
                    static_cast<int>(doc.title.size()) + 1 + 1;
  if (fixed > n)
    throw std::invalid_argument(
        "build_reader_input: question and title need " +
        std::to_string(fixed) + " tokens but n = " + std::to_string(n));
  std::vector<int> seq;
  seq.reserve(n);
  seq.push_back(Vocabulary::kCls);
  seq.insert(seq.end(), question.begin(), question.end());
  seq.push_back(Vocabulary::kSep);
  seq.insert(seq.end(), doc.title.begin(), doc.title.end());
  seq.push_back(Vocabulary::kSep);
  const int budget = n - fixed;
  const int take = std::min<int>(budget, static_cast<int>(doc.text.size()));
  seq.insert(seq.end(), doc.text.begin(), doc.text.begin() + take);
  seq.push_back(Vocabulary::kSep);
  if (static_cast<int>(seq.size()) < n) {
    auto pad = pad_with_neighbors(corpus, doc.id, n - static_cast<int>(seq.size()));
    seq.insert(seq.end(), pad.begin(), pad.end());
  }
  return seq;
}

// --- JSON Lines persistence -------------------------------------------------

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void save_qa(const std::vector<QAExample>& qa, const Vocabulary& vocab,
             const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_dataset: cannot open " + path);
  for (const auto& ex : qa) {
    json row;
    row["question"] = vocab.decode_string(ex.question);
    std::vector<std::string> answers;
    for (const auto& a : ex.answers) answers.push_back(vocab.decode_string(a));
    row["answers"] = answers;
    row["split"] = ex.split;
    if (ex.provenance_doc >= 0) row["doc"] = ex.provenance_doc;
    os << row.dump() << '\n';
  }
}

std::vector<QAExample> load_qa(const Vocabulary& vocab,
                               const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_dataset: cannot open " + path);
  std::vector<QAExample> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json row = json::parse(line);
    QAExample ex;
    ex.question = vocab.encode(split_words(row.at("question")));
    for (const auto& a : row.at("answers"))
      ex.answers.push_back(vocab.encode(split_words(a)));
    ex.split = row.at("split");
    if (row.contains("doc")) ex.provenance_doc = row["doc"];
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

void save_dataset(const GeneratedData& data, const std::string& dir) {
  fs::create_directories(dir);
  data.corpus.vocab.save(dir + "/vocab.txt");
  std::ofstream os(dir + "/corpus.jsonl");
  if (!os) throw std::runtime_error("save_dataset: cannot open corpus.jsonl");
  for (const auto& d : data.corpus.docs) {
    json row;
    row["id"] = d.id;
    row["title"] = data.corpus.vocab.decode_string(d.title);
    row["text"] = data.corpus.vocab.decode_string(d.text);
    row["spans"] = d.spans;
    os << row.dump() << '\n';
  }
  save_qa(data.train, data.corpus.vocab, dir + "/qa_train.jsonl");
  save_qa(data.dev, data.corpus.vocab, dir + "/qa_dev.jsonl");
  save_qa(data.test, data.corpus.vocab, dir + "/qa_test.jsonl");
}

GeneratedData load_dataset(const std::string& dir) {
  GeneratedData data;
  data.corpus.vocab = Vocabulary::load(dir + "/vocab.txt");
  std::ifstream is(dir + "/corpus.jsonl");
  if (!is) throw std::runtime_error("load_dataset: cannot open corpus.jsonl");
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json row = json::parse(line);
    Document d;
    d.id = row.at("id");
    d.title = data.corpus.vocab.encode(split_words(row.at("title")));
    d.text = data.corpus.vocab.encode(split_words(row.at("text")));
    for (const auto& s : row.at("spans"))
      d.spans.emplace_back(s[0].get<int>(), s[1].get<int>());
    data.corpus.docs.push_back(std::move(d));
  }
  data.train = load_qa(data.corpus.vocab, dir + "/qa_train.jsonl");
  data.dev = load_qa(data.corpus.vocab, dir + "/qa_dev.jsonl");
  data.test = load_qa(data.corpus.vocab, dir + "/qa_test.jsonl");
  return data;
}

}  // namespace emdr
