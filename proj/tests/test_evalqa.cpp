#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "emdr/evalqa.hpp"
#include "emdr/trainer.hpp"

using namespace emdr;

namespace {

using Tokens = std::vector<std::string>;

// independent containment scan used as the oracle for precision_at_k
bool has_subseq(const Tokens& hay, const Tokens& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  for (size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    bool ok = true;
    for (size_t j = 0; j < needle.size(); ++j)
      if (hay[i + j] != needle[j]) ok = false;
    if (ok) return true;
  }
  return false;
}

std::string to_lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower((unsigned char)c));
  return s;
}

}  // namespace

TEST_CASE("normalize_answer: case, articles, punctuation, idempotence") {
  CHECK(normalize_answer({"The", "Answer"}) == Tokens{"answer"});
  CHECK(normalize_answer({"A", "Grand", "Plan"}) == Tokens{"grand", "plan"});
  CHECK(normalize_answer({".", "paris", ","}) == Tokens{"paris"});
  CHECK(normalize_answer({"an"}) == Tokens{});
  CHECK(normalize_answer({}) == Tokens{});
  CHECK(normalize_answer({",", ","}) == Tokens{});
  // interior separator runs collapse
  CHECK(normalize_answer({"x", ",", ",", "y"}) == Tokens{"x", ",", "y"});
  // idempotence over assorted inputs
  for (auto t : {Tokens{"The", "Big", ",", ",", "Cat", "."},
                 Tokens{"a"}, Tokens{"MIXED", "Case"}}) {
    auto once = normalize_answer(t);
    CHECK(normalize_answer(once) == once);
  }
}

TEST_CASE("exact_match: equality after normalization only") {
  CHECK(exact_match({"Paris"}, {{"paris"}}) == 1);
  CHECK(exact_match({"the", "paris"}, {{"Paris"}}) == 1);
  CHECK(exact_match({"london"}, {{"paris"}}) == 0);
  CHECK(exact_match({"paris"}, {{"london"}, {"PARIS"}}) == 1);  // any reference
  CHECK(exact_match({"paris", "france"}, {{"paris"}}) == 0);    // no substring
  CHECK_THROWS_AS(exact_match({"x"}, {}), std::invalid_argument);
}

TEST_CASE("precision_at_k: rank window and rejections") {
  Tokens d0{"alpha", "beta"}, d1{"the", "target", "word"}, d2{"gamma"};
  std::vector<Tokens> retrieved{d0, d1, d2};
  std::vector<Tokens> refs{{"Target", "Word"}};
  CHECK(precision_at_k(retrieved, refs, 1) == 0);  // rank 2 is outside k = 1
  CHECK(precision_at_k(retrieved, refs, 2) == 1);
  CHECK(precision_at_k(retrieved, refs, 3) == 1);  // monotone in k
  CHECK(precision_at_k({d1}, refs, 1) == 1);
  CHECK_THROWS_AS(precision_at_k(retrieved, refs, 0), std::invalid_argument);
  CHECK_THROWS_AS(precision_at_k(retrieved, refs, 4), std::invalid_argument);
}

TEST_CASE("precision_at_k agrees with a brute-force containment scan") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> word(0, 5), len(1, 8), nl(1, 2);
  const Tokens words{"aa", "Bb", "cc", "dd", "EE", "ff"};
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Tokens> retrieved(3);
    for (auto& doc : retrieved) {
      int m = len(rng);
      for (int i = 0; i < m; ++i) doc.push_back(words[word(rng)]);
    }
    std::vector<Tokens> refs(1);
    int m = nl(rng);
    for (int i = 0; i < m; ++i) refs[0].push_back(words[word(rng)]);
    int k = 1 + static_cast<int>(rng() % 3);

    auto needle = normalize_answer(refs[0]);
    int want = 0;
    for (int i = 0; i < k && !want; ++i) {
      Tokens hay;
      for (const auto& t : retrieved[i]) hay.push_back(to_lower(t));
      if (has_subseq(hay, needle)) want = 1;
    }
    CHECK(precision_at_k(retrieved, refs, k) == want);
  }
}

TEST_CASE("evaluate: shape, consistency, determinism, outputs") {
  WorldSpec spec;
  spec.entities = 12;
  spec.relations = 3;
  spec.documents = 24;
  spec.distractor_fraction = 0.25;
  spec.facts_per_doc = 1;
  GeneratedData data = generate_corpus(spec, 3);
  Model model = make_model("micro", data.corpus.vocab.size(), 5, 4);

  auto index = build_index(data.corpus, model.phi_d, model.rcfg, 3, 7);
  EvalConfig cfg;
  cfg.k = 4;
  cfg.p_at_k_list = {1, 4};
  cfg.max_answer_len = 4;

  std::vector<QAExample> dataset = data.dev;
  dataset.insert(dataset.end(), data.test.begin(), data.test.end());
  REQUIRE(!dataset.empty());

  EvalReport r = evaluate(model.phi_q, model.rcfg, model.theta, model.dcfg,
                          *index, data.corpus, dataset, cfg);
  CHECK(r.n == static_cast<int>(dataset.size()));
  CHECK(r.records.size() == dataset.size());
  CHECK(r.em >= 0.0);
  CHECK(r.em <= 1.0);

  // aggregate EM / P@K are exactly the means of the per-record flags
  int matched = 0, p1 = 0, p4 = 0;
  for (const auto& rec : r.records) {
    matched += rec.matched ? 1 : 0;
    p1 += rec.p_at_k.at(1);
    p4 += rec.p_at_k.at(4);
    CHECK(rec.retrieved_ids.size() == 4);
    CHECK(rec.index_version == 7);
    CHECK(rec.p_at_k.at(4) >= rec.p_at_k.at(1));  // monotone per record
  }
  CHECK(r.em == static_cast<double>(matched) / r.n);
  CHECK(r.p_at_k.at(1) == static_cast<double>(p1) / r.n);
  CHECK(r.p_at_k.at(4) == static_cast<double>(p4) / r.n);

  // determinism: a second evaluation is identical
  EvalReport r2 = evaluate(model.phi_q, model.rcfg, model.theta, model.dcfg,
                           *index, data.corpus, dataset, cfg);
  CHECK(r2.em == r.em);
  CHECK(r2.p_at_k == r.p_at_k);
  for (size_t i = 0; i < r.records.size(); ++i) {
    CHECK(r2.records[i].prediction == r.records[i].prediction);
    CHECK(r2.records[i].retrieved_ids == r.records[i].retrieved_ids);
  }

  CHECK_THROWS_AS(evaluate(model.phi_q, model.rcfg, model.theta, model.dcfg,
                           *index, data.corpus, {}, cfg),
                  std::invalid_argument);

  // JSON report parses and carries the aggregates
  auto j = nlohmann::json::parse(r.to_json());
  CHECK(j["n"].get<int>() == r.n);
  CHECK(j["em"].get<double>() == r.em);
  CHECK(j["p_at_k"]["1"].get<double>() == r.p_at_k.at(1));

  // JSONL records: one parseable row per question
  const std::string path = "eval_records_test.jsonl";
  r.save_records_jsonl(path, data.corpus.vocab);
  std::ifstream is(path);
  REQUIRE(is.good());
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) {
    auto row = nlohmann::json::parse(line);
    CHECK(row["question_id"].get<int>() == rows);
    CHECK(row["index_version"].get<long>() == 7);
    ++rows;
  }
  CHECK(rows == r.n);
  std::remove(path.c_str());
}
