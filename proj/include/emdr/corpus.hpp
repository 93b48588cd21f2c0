#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emdr/vocab.hpp"

namespace emdr {

// One evidence passage: templated fact sentences over (entity, relation,
// entity) triples, entity mentions flagged as salient spans.
struct Document {
  int id = -1;
  std::vector<int> title;                        // token ids
  std::vector<int> text;                         // token ids
  std::vector<std::pair<int, int>> spans;        // [start, end) into text
};

struct QAExample {
  std::vector<int> question;               // token ids, no leading [CLS]
  std::vector<std::vector<int>> answers;   // each non-empty
  std::string split;                       // train | dev | test
  int provenance_doc = -1;
};

struct Corpus {
  Vocabulary vocab;
  std::vector<Document> docs;
  int segment_len = 40;
  int size() const { return static_cast<int>(docs.size()); }
};

struct WorldSpec {
  int entities = 80;
  int relations = 24;
  int documents = 1000;
  double distractor_fraction = 0.5;
  int facts_per_doc = 1;
  int answer_tokens = 3;  // object length in tokens; answers copy all of them
};

struct GeneratedData {
  Corpus corpus;
  std::vector<QAExample> train, dev, test;
};

// Deterministic synthetic world. Non-distractor documents state facts whose
// objects are the QA answers; distractor documents reuse the same sentence
// template but never mention an answer entity.
GeneratedData generate_corpus(const WorldSpec& spec, uint64_t seed);

// Inverse cloze pretraining pair: a sentence and its source passage with the
// sentence removed (kept intact in a small fraction of examples, and always
// for single-sentence passages).
struct IctExample {
  std::vector<int> query;  // sentence tokens, delimiter excluded
  Document positive;       // possibly modified copy of the source passage
  int source_doc = -1;
};

std::vector<IctExample> make_ict_examples(const Corpus& corpus, int n,
                                          uint64_t seed,
                                          double keep_prob = 0.10);

// Masked-salient-span pretraining: the masked sentence is the question and
// the masked entity tokens, in order, are the answer.
std::vector<QAExample> make_mss_examples(const Corpus& corpus, int n,
                                         uint64_t seed,
                                         double mask_rate = 0.15);

// [CLS] q [SEP] title [SEP] text [SEP], text truncated from the right, then
// neighbor-padded to exactly n tokens.
std::vector<int> build_reader_input(const std::vector<int>& question,
                                    const Document& doc, const Corpus& corpus,
                                    int n);

// Text tokens of documents id+1, id+2, ... (wrapping), `needed` of them.
std::vector<int> pad_with_neighbors(const Corpus& corpus, int doc_id,
                                    int needed);

// Sentence boundaries [start, end) in `text`, delimiter token excluded.
std::vector<std::pair<int, int>> sentence_ranges(const std::vector<int>& text,
                                                 int delimiter_id);

// JSON Lines round trip: corpus.jsonl, qa_{train,dev,test}.jsonl, vocab.txt
void save_dataset(const GeneratedData& data, const std::string& dir);
GeneratedData load_dataset(const std::string& dir);

}  // namespace emdr
