#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "emdr/trainer.hpp"

using namespace emdr;
namespace fs = std::filesystem;

namespace {

GeneratedData small_world(uint64_t seed = 3) {
  WorldSpec spec;
  spec.entities = 12;
  spec.relations = 3;
  spec.documents = 24;
  spec.distractor_fraction = 0.25;
  spec.facts_per_doc = 1;
  return generate_corpus(spec, seed);
}

TrainConfig small_config(const std::string& out_dir = "") {
  TrainConfig cfg;
  cfg.preset = "micro";
  cfg.objective = "emdr2";
  cfg.k = 2;
  cfg.batch_size = 2;
  cfg.steps = 6;
  cfg.refresh_interval = 4;
  cfg.checkpoint_interval = 3;
  cfg.max_answer_len = 4;
  cfg.shard_count = 2;
  cfg.p_at_k_list = {1, 2};
  cfg.seed = 11;
  cfg.out_dir = out_dir;
  return cfg;
}

// strip the wall-clock column so timing noise never enters comparisons
std::string csv_without_wall(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  std::ostringstream out;
  std::string line;
  while (std::getline(is, line)) {
    auto cut = line.rfind(',');
    REQUIRE(cut != std::string::npos);
    out << line.substr(0, cut) << '\n';
  }
  return out.str();
}

// fraction of held-out inverse-cloze pairs whose in-batch argmax is correct
double ict_top1(const Model& model, const Corpus& corpus,
                const std::vector<IctExample>& held) {
  int hits = 0;
  for (const auto& ex : held) {
    std::vector<int> q{Vocabulary::kCls};
    q.insert(q.end(), ex.query.begin(), ex.query.end());
    ad::Tensor qv = encode_question(model.phi_q, model.rcfg, q);
    double best = -1e300;
    size_t best_j = 0;
    for (size_t j = 0; j < held.size(); ++j) {
      ad::Tensor dv =
          encode_document(model.phi_d, model.rcfg, held[j].positive);
      double s = 0.0;
      for (size_t t = 0; t < qv.values().size(); ++t)
        s += qv.values()[t] * dv.values()[t];
      if (s > best) {
        best = s;
        best_j = j;
      }
    }
    if (held[best_j].source_doc == ex.source_doc) ++hits;
  }
  return static_cast<double>(hits) / held.size();
}

struct TmpDir {
  fs::path path;
  explicit TmpDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("select_checkpoint: argmax with earliest-step tie break") {
  CHECK(select_checkpoint({{500, 0.2}, {1000, 0.5}}) == 1000);
  CHECK(select_checkpoint({{500, 0.5}, {1000, 0.5}}) == 500);
  CHECK(select_checkpoint({{250, 0.1}}) == 250);
  CHECK(select_checkpoint({{100, 0.9}, {200, 0.3}, {300, 0.9}}) == 100);
  CHECK_THROWS_AS(select_checkpoint({}), std::invalid_argument);
}

TEST_CASE("validate_config rejects each malformed field") {
  TrainConfig ok = small_config();
  validate_config(ok);  // must not throw

  auto expect_reject = [](TrainConfig c) {
    CHECK_THROWS_AS(validate_config(c), std::invalid_argument);
  };
  TrainConfig c;
  c = ok; c.k = 0; expect_reject(c);
  c = ok; c.steps = 0; expect_reject(c);
  c = ok; c.batch_size = 0; expect_reject(c);
  c = ok; c.refresh_interval = 0; expect_reject(c);
  c = ok; c.checkpoint_interval = 0; expect_reject(c);
  c = ok; c.tau = 0.0; expect_reject(c);
  c = ok; c.lr = 0.0; expect_reject(c);
  c = ok; c.max_answer_len = 1; expect_reject(c);
  c = ok; c.shard_count = 0; expect_reject(c);
  c = ok; c.objective = "unknown"; expect_reject(c);
  c = ok; c.preset = "huge"; expect_reject(c);
}

TEST_CASE("save_model / load_model round trip preserves all parameters") {
  GeneratedData data = small_world();
  Model a = make_model("micro", data.corpus.vocab.size(), 21, 4);
  TmpDir tmp("trainer_roundtrip");
  const std::string path = (tmp.path / "model.emdr").string();
  save_model(a, path);

  Model b = make_model("micro", data.corpus.vocab.size(), 99, 4);
  CHECK(b.theta.fingerprint() != a.theta.fingerprint());
  load_model(b, path);
  CHECK(b.phi_q.fingerprint() == a.phi_q.fingerprint());
  CHECK(b.phi_d.fingerprint() == a.phi_d.fingerprint());
  CHECK(b.theta.fingerprint() == a.theta.fingerprint());

  Model c = make_model("micro", data.corpus.vocab.size(), 99, 4);
  CHECK_THROWS(load_model(c, (tmp.path / "missing.emdr").string()));
}

TEST_CASE("train: schedule, artifacts, and bitwise determinism") {
  GeneratedData data = small_world();

  auto run = [&](const std::string& dir) {
    Model model = make_model("micro", data.corpus.vocab.size(), 5, 4);
    IndexManager manager;
    TrainConfig cfg = small_config(dir);
    TrainResult res =
        train(cfg, data.corpus, data.train, data.dev, model, manager);
    return std::make_tuple(std::move(model), std::move(res));
  };

  TmpDir da("trainer_run_a"), db("trainer_run_b");
  auto [ma, ra] = run(da.path.string());
  auto [mb, rb] = run(db.path.string());

  // refresh at steps 0 and 4 -> versions 1 then 2
  CHECK(ra.observed_versions == std::vector<long>{1, 2});
  // checkpoints at steps 3 and 6
  REQUIRE(ra.dev_history.size() == 2);
  CHECK(ra.dev_history[0].first == 3);
  CHECK(ra.dev_history[1].first == 6);
  CHECK(ra.best_step == select_checkpoint(ra.dev_history));
  CHECK(fs::exists(da.path / "metrics.csv"));
  CHECK(fs::exists(da.path / "ckpt_3.emdr"));
  CHECK(fs::exists(da.path / "ckpt_6.emdr"));
  CHECK(fs::exists(da.path / "index_v1.eidx"));
  CHECK(fs::exists(da.path / "index_v2.eidx"));
  CHECK(fs::exists(ra.best_checkpoint));

  // metrics.csv: header plus step-0 baseline plus one row per step
  std::string csv = csv_without_wall((da.path / "metrics.csv").string());
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 1 + 6);
  CHECK(csv.rfind("step,objective,loss_total,reader_term,retriever_term,"
                  "dev_em,p_at_k,index_version",
                  0) == 0);

  // identical seeds -> identical everything except wall time
  CHECK(csv == csv_without_wall((db.path / "metrics.csv").string()));
  CHECK(ma.theta.fingerprint() == mb.theta.fingerprint());
  CHECK(ma.phi_q.fingerprint() == mb.phi_q.fingerprint());
  CHECK(ma.phi_d.fingerprint() == mb.phi_d.fingerprint());
  CHECK(ra.best_step == rb.best_step);
  CHECK(ra.best_em == rb.best_em);
  CHECK(ra.dev_history == rb.dev_history);
}

TEST_CASE("train: frozen retriever leaves phi untouched but updates theta") {
  GeneratedData data = small_world();
  Model model = make_model("micro", data.corpus.vocab.size(), 5, 4);
  const uint64_t q0 = model.phi_q.fingerprint();
  const uint64_t d0 = model.phi_d.fingerprint();
  const uint64_t t0 = model.theta.fingerprint();

  IndexManager manager;
  TrainConfig cfg = small_config();
  cfg.steps = 3;
  cfg.retriever_lr = 0.0;
  train(cfg, data.corpus, data.train, data.dev, model, manager);
  CHECK(model.phi_q.fingerprint() == q0);
  CHECK(model.phi_d.fingerprint() == d0);
  CHECK(model.theta.fingerprint() != t0);
}

TEST_CASE("train: retrieval is frozen between refreshes as phi drifts") {
  GeneratedData data = small_world();
  Model model = make_model("micro", data.corpus.vocab.size(), 5, 4);
  IndexManager manager;
  TrainConfig cfg = small_config();
  cfg.steps = 4;
  cfg.refresh_interval = 100;  // single snapshot for the whole run
  train(cfg, data.corpus, data.train, data.dev, model, manager);

  // the live question encoder moved, the frozen copy did not
  CHECK(manager.frozen_query_params()->fingerprint() !=
        model.phi_q.fingerprint());

  // queries against the held snapshot still use build-time parameters:
  // identical to an encoder restored from the frozen copy
  const QAExample& ex = data.dev.front();
  std::vector<int> q{Vocabulary::kCls};
  q.insert(q.end(), ex.question.begin(), ex.question.end());
  auto frozen_vec =
      encode_question(*manager.frozen_query_params(), model.rcfg, q).values();
  auto live_vec = encode_question(model.phi_q, model.rcfg, q).values();
  CHECK(frozen_vec != live_vec);
  auto a = manager.active()->top_k(frozen_vec, 2);
  auto b = manager.active()->top_k_exhaustive(frozen_vec, 2);
  CHECK(a == b);
}

TEST_CASE("train: non-finite parameters abort after repeated bad steps") {
  GeneratedData data = small_world();
  Model model = make_model("micro", data.corpus.vocab.size(), 5, 4);
  auto& vals = model.theta.param("dec.out").value.mutable_values();
  vals[0] = std::numeric_limits<double>::quiet_NaN();
  IndexManager manager;
  TrainConfig cfg = small_config();
  CHECK_THROWS_AS(train(cfg, data.corpus, data.train, data.dev, model, manager),
                  std::runtime_error);
}

TEST_CASE("example_loss: frozen per-doc constants reproduce the live value") {
  GeneratedData data = small_world();
  Model model = make_model("micro", data.corpus.vocab.size(), 5, 4);
  const QAExample& ex = data.train.front();
  const std::vector<int> doc_ids{0, 1};

  auto [live, lb] = example_loss("emdr2", ex, doc_ids, data.corpus, model, 1.0);
  auto [froz, fb] = example_loss("emdr2", ex, doc_ids, data.corpus, model, 1.0,
                                 &lb.per_doc_log_prob);
  CHECK(froz.scalar() == live.scalar());
  CHECK(fb.per_doc_log_prob == lb.per_doc_log_prob);
  CHECK(fb.retrieval_prob == lb.retrieval_prob);

  const std::vector<double> wrong_size{-1.0};
  CHECK_THROWS_AS(example_loss("emdr2", ex, doc_ids, data.corpus, model, 1.0,
                               &wrong_size),
                  std::invalid_argument);
  CHECK_THROWS_AS(example_loss("emdr2", ex, {}, data.corpus, model, 1.0),
                  std::invalid_argument);
}

TEST_CASE("pretrain_ict: validation, no-op at zero learning, improvement") {
  WorldSpec spec;
  spec.entities = 20;
  spec.relations = 6;
  spec.documents = 24;
  spec.distractor_fraction = 0.25;
  spec.facts_per_doc = 3;  // inverse cloze needs multi-sentence passages
  GeneratedData data = generate_corpus(spec, 9);
  Model model = make_model("micro", data.corpus.vocab.size(), 5, 4);

  TrainConfig bad = small_config();
  bad.batch_size = 1;
  CHECK_THROWS_AS(pretrain_ict(bad, data.corpus, model), std::invalid_argument);

  // frozen retriever: parameters must come back bit-identical
  TrainConfig frozen = small_config();
  frozen.steps = 2;
  frozen.retriever_lr = 0.0;
  const uint64_t q0 = model.phi_q.fingerprint();
  const uint64_t d0 = model.phi_d.fingerprint();
  pretrain_ict(frozen, data.corpus, model);
  CHECK(model.phi_q.fingerprint() == q0);
  CHECK(model.phi_d.fingerprint() == d0);

  // real pretraining separates positives from in-batch negatives
  auto held = make_ict_examples(data.corpus, 16, 777);
  const double before = ict_top1(model, data.corpus, held);
  TrainConfig cfg = small_config();
  cfg.steps = 200;
  cfg.batch_size = 8;
  cfg.lr = 3e-3;
  pretrain_ict(cfg, data.corpus, model);
  const double after = ict_top1(model, data.corpus, held);
  CHECK(model.phi_q.fingerprint() != q0);
  CHECK(after > before);
  CHECK(after >= 0.5);

  // same seed, same data -> same parameters
  Model m1 = make_model("micro", data.corpus.vocab.size(), 5, 4);
  Model m2 = make_model("micro", data.corpus.vocab.size(), 5, 4);
  TrainConfig det = small_config();
  det.steps = 5;
  pretrain_ict(det, data.corpus, m1);
  pretrain_ict(det, data.corpus, m2);
  CHECK(m1.phi_q.fingerprint() == m2.phi_q.fingerprint());
  CHECK(m1.phi_d.fingerprint() == m2.phi_d.fingerprint());
}

TEST_CASE("pretrain_mss: masked-span pairs run the full loop") {
  GeneratedData data = small_world();
  Model model = make_model("micro", data.corpus.vocab.size(), 5, 4);
  IndexManager manager;
  TrainConfig cfg = small_config();
  cfg.steps = 3;
  cfg.checkpoint_interval = 3;
  TrainResult res = pretrain_mss(cfg, data.corpus, model, manager, 20);
  CHECK(!res.dev_history.empty());
  CHECK(!res.observed_versions.empty());
  CHECK(manager.active() != nullptr);
}
