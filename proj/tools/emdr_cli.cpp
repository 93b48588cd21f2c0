// Command-line front end for the retrieval-augmented QA laboratory:
// corpus generation, retriever/reader pretraining, joint training,
// evaluation, ad-hoc retrieval, and gradient checking.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "emdr/corpus.hpp"
#include "emdr/evalqa.hpp"
#include "emdr/index.hpp"
#include "emdr/kernels.hpp"
#include "emdr/trainer.hpp"

namespace {

using nlohmann::json;

// Fills options from a JSON config file; explicit command-line flags win.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw CLI::ValidationError("--config", "cannot open " + path);
  json cfg;
  try {
    is >> cfg;
  } catch (const std::exception& e) {
    throw CLI::ValidationError("--config", std::string("malformed JSON: ") +
                                               e.what());
  }
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    CLI::Option* opt = cmd->get_option_no_throw("--" + it.key());
    if (!opt)
      throw CLI::ValidationError("--config",
                                 "unknown config field: " + it.key());
    if (opt->count() > 0) continue;  // command line overrides the file
    std::string v = it.value().is_string() ? it.value().get<std::string>()
                                           : it.value().dump();
    opt->add_result(v);
    opt->run_callback();
  }
}

void write_resolved_config(const CLI::App* cmd, const std::string& out_dir) {
  if (out_dir.empty()) return;
  std::filesystem::create_directories(out_dir);
  json j;
  j["subcommand"] = cmd->get_name();
  for (const CLI::Option* opt : cmd->get_options()) {
    const std::string name = opt->get_name();
    if (name.rfind("--", 0) != 0 || name == "--help" || name == "--config")
      continue;
    const auto& results = opt->results();
    if (results.empty())
      j[name.substr(2)] = opt->get_default_str();
    else
      j[name.substr(2)] = results.back();
  }
  std::ofstream os(out_dir + "/resolved-config.json");
  os << j.dump(2) << '\n';
}

struct CommonOpts {
  std::string config_path, data_dir, out_dir, init_ckpt;
  emdr::TrainConfig tc;
};

void add_train_options(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--data", o.data_dir, "dataset directory")->required();
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--init", o.init_ckpt, "initial model checkpoint");
  cmd->add_option("--objective", o.tc.objective, "emdr2 | alt1 | alt2");
  cmd->add_option("--k", o.tc.k, "retrieved documents per question");
  cmd->add_option("--tau", o.tc.tau, "retrieval softmax temperature");
  cmd->add_option("--batch-size", o.tc.batch_size, "examples per step");
  cmd->add_option("--steps", o.tc.steps, "total training steps");
  cmd->add_option("--refresh-interval", o.tc.refresh_interval,
                  "steps between index refreshes");
  cmd->add_option("--checkpoint-interval", o.tc.checkpoint_interval,
                  "steps between checkpoints");
  cmd->add_option("--lr", o.tc.lr, "reader learning rate");
  cmd->add_option("--retriever-lr", o.tc.retriever_lr,
                  "retriever learning rate (<0: same as --lr, 0: frozen)");
  cmd->add_option("--seed", o.tc.seed, "random seed");
  cmd->add_option("--max-answer-len", o.tc.max_answer_len,
                  "decoded answer length cap");
  cmd->add_option("--preset", o.tc.preset, "desk | paper-base");
  cmd->add_option("--shard-count", o.tc.shard_count, "index shard count");
}

emdr::Model make_or_load_model(const CommonOpts& o, int vocab_size) {
  emdr::Model model = emdr::make_model(o.tc.preset, vocab_size, o.tc.seed,
                                       o.tc.max_answer_len);
  if (!o.init_ckpt.empty()) emdr::load_model(model, o.init_ckpt);
  return model;
}

std::vector<emdr::QAExample>* pick_split(emdr::GeneratedData& data,
                                         const std::string& split) {
  if (split == "train") return &data.train;
  if (split == "dev") return &data.dev;
  if (split == "test") return &data.test;
  throw CLI::ValidationError("--split", "expected train|dev|test");
}

json train_summary(const emdr::TrainResult& r) {
  json j;
  j["best_step"] = r.best_step;
  j["best_dev_em"] = r.best_em;
  j["best_checkpoint"] = r.best_checkpoint;
  j["dev_em_step0"] = r.em_step0;
  j["p_at_k_step0"] = r.p_at_k_step0;
  j["p_at_k_final"] = r.p_at_k_final;
  j["observed_index_versions"] = r.observed_versions;
  j["metrics"] = r.metrics_path;
  return j;
}

int run(int argc, char** argv) {
  CLI::App app{"desk-scale retrieval-augmented QA laboratory"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default(true);

  // --- gen-corpus -----------------------------------------------------------
  auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic dataset");
  struct {
    std::string config_path, out_dir;
    emdr::WorldSpec spec;
    uint64_t seed = 0;
  } g;
  gen->add_option("--config", g.config_path, "JSON config file");
  gen->add_option("--out", g.out_dir, "output directory")->required();
  gen->add_option("--seed", g.seed, "random seed");
  gen->add_option("--docs", g.spec.documents, "number of documents");
  gen->add_option("--entities", g.spec.entities, "entity pool size");
  gen->add_option("--relations", g.spec.relations, "relation pool size");
  gen->add_option("--distractor-fraction", g.spec.distractor_fraction,
                  "fraction of distractor documents");
  gen->add_option("--facts-per-doc", g.spec.facts_per_doc,
                  "fact sentences per document");
  gen->add_option("--answer-tokens", g.spec.answer_tokens,
                  "object length in tokens");

  // --- pretrain-ict ---------------------------------------------------------
  auto* ict = app.add_subcommand("pretrain-ict",
                                 "inverse-cloze retriever pretraining");
  CommonOpts oi;
  oi.tc.steps = 200;
  oi.tc.k = 5;
  add_train_options(ict, oi);

  // --- pretrain-mss ---------------------------------------------------------
  auto* mss = app.add_subcommand(
      "pretrain-mss", "masked-salient-span pretraining (full training loop)");
  CommonOpts om;
  om.tc.k = 5;
  int mss_examples = 512;
  add_train_options(mss, om);
  mss->add_option("--examples", mss_examples, "number of MSS examples");

  // --- train ----------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "joint retriever/reader training");
  CommonOpts ot;
  ot.tc.k = 5;
  add_train_options(tr, ot);

  // --- eval -----------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  CommonOpts oe;
  oe.tc.k = 5;
  std::string eval_split = "dev", eval_index, eval_ckpt;
  add_train_options(ev, oe);
  ev->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  ev->add_option("--index", eval_index,
                 "index dump; omitted: rebuild from the checkpoint");
  ev->add_option("--split", eval_split, "train | dev | test");

  // --- retrieve -------------------------------------------------------------
  auto* re = app.add_subcommand("retrieve", "ad-hoc top-K retrieval");
  CommonOpts orr;
  orr.tc.k = 5;
  std::string re_index, re_ckpt, re_question;
  add_train_options(re, orr);
  re->add_option("--checkpoint", re_ckpt, "model checkpoint")->required();
  re->add_option("--index", re_index, "index dump")->required();
  re->add_option("--question", re_question, "question text")->required();

  // --- grad-check -----------------------------------------------------------
  auto* gc = app.add_subcommand("grad-check",
                                "finite-difference check of the objective");
  CommonOpts og;
  og.tc.k = 2;
  std::string gc_config;
  gc->add_option("--config", gc_config, "JSON config file");
  gc->add_option("--objective", og.tc.objective, "emdr2 | alt1 | alt2");
  gc->add_option("--k", og.tc.k, "retrieved documents per question");
  gc->add_option("--tau", og.tc.tau, "retrieval softmax temperature");
  gc->add_option("--seed", og.tc.seed, "random seed");
  gc->add_option("--out", og.out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);
  CLI::App* cmd = app.get_subcommands().front();

  // apply the config file after parsing so explicit flags keep priority
  std::string* cfg_path = nullptr;
  if (cmd == gen) cfg_path = &g.config_path;
  else if (cmd == ict) cfg_path = &oi.config_path;
  else if (cmd == mss) cfg_path = &om.config_path;
  else if (cmd == tr) cfg_path = &ot.config_path;
  else if (cmd == ev) cfg_path = &oe.config_path;
  else if (cmd == re) cfg_path = &orr.config_path;
  else cfg_path = &gc_config;
  if (!cfg_path->empty()) {
    try {
      apply_config_file(cmd, *cfg_path);
    } catch (const CLI::Error& e) {
      std::cerr << e.what() << '\n';
      return 1;
    }
  }

  if (cmd == gen) {
    write_resolved_config(gen, g.out_dir);
    emdr::GeneratedData data = emdr::generate_corpus(g.spec, g.seed);
    emdr::save_dataset(data, g.out_dir);
    json j;
    j["docs"] = data.corpus.size();
    j["vocab"] = data.corpus.vocab.size();
    j["train"] = data.train.size();
    j["dev"] = data.dev.size();
    j["test"] = data.test.size();
    std::cout << j.dump(2) << '\n';
    return 0;
  }

  if (cmd == ict) {
    write_resolved_config(ict, oi.out_dir);
    emdr::GeneratedData data = emdr::load_dataset(oi.data_dir);
    emdr::Model model = make_or_load_model(oi, data.corpus.vocab.size());
    emdr::pretrain_ict(oi.tc, data.corpus, model);
    std::string path = oi.out_dir.empty() ? std::string("ckpt_ict.emdr")
                                          : oi.out_dir + "/ckpt_ict.emdr";
    if (!oi.out_dir.empty()) std::filesystem::create_directories(oi.out_dir);
    emdr::save_model(model, path);
    json j;
    j["checkpoint"] = path;
    j["steps"] = oi.tc.steps;
    std::cout << j.dump(2) << '\n';
    return 0;
  }

  if (cmd == mss || cmd == tr) {
    CommonOpts& o = (cmd == mss) ? om : ot;
    write_resolved_config(cmd, o.out_dir);
    emdr::GeneratedData data = emdr::load_dataset(o.data_dir);
    emdr::Model model = make_or_load_model(o, data.corpus.vocab.size());
    o.tc.out_dir = o.out_dir;
    emdr::IndexManager manager;
    emdr::TrainResult r =
        (cmd == mss)
            ? emdr::pretrain_mss(o.tc, data.corpus, model, manager,
                                 mss_examples)
            : emdr::train(o.tc, data.corpus, data.train, data.dev, model,
                          manager);
    std::cout << train_summary(r).dump(2) << '\n';
    return 0;
  }

  if (cmd == ev) {
    write_resolved_config(ev, oe.out_dir);
    emdr::GeneratedData data = emdr::load_dataset(oe.data_dir);
    emdr::Model model = make_or_load_model(oe, data.corpus.vocab.size());
    emdr::load_model(model, eval_ckpt);
    std::shared_ptr<const emdr::IndexSnapshot> snap;
    if (!eval_index.empty())
      snap = emdr::IndexSnapshot::load(eval_index);
    else
      snap = emdr::build_index(data.corpus, model.phi_d, model.rcfg,
                               oe.tc.shard_count, 0);
    emdr::EvalConfig ecfg;
    ecfg.k = oe.tc.k;
    ecfg.tau = oe.tc.tau;
    ecfg.max_answer_len = oe.tc.max_answer_len;
    if (std::find(ecfg.p_at_k_list.begin(), ecfg.p_at_k_list.end(), oe.tc.k) ==
        ecfg.p_at_k_list.end())
      ecfg.p_at_k_list.push_back(oe.tc.k);
    const auto& split = *pick_split(data, eval_split);
    emdr::EvalReport report =
        emdr::evaluate(model.phi_q, model.rcfg, model.theta, model.dcfg, *snap,
                       data.corpus, split, ecfg);
    report.dataset = oe.data_dir;
    report.split = eval_split;
    if (!oe.out_dir.empty())
      report.save_records_jsonl(oe.out_dir + "/eval_records.jsonl",
                                data.corpus.vocab);
    std::cout << report.to_json() << '\n';
    return 0;
  }

  if (cmd == re) {
    write_resolved_config(re, orr.out_dir);
    emdr::GeneratedData data = emdr::load_dataset(orr.data_dir);
    emdr::Model model = make_or_load_model(orr, data.corpus.vocab.size());
    emdr::load_model(model, re_ckpt);
    auto snap = emdr::IndexSnapshot::load(re_index);
    std::vector<std::string> words;
    std::istringstream qs(re_question);
    for (std::string w; qs >> w;) words.push_back(w);
    std::vector<int> tokens{emdr::Vocabulary::kCls};
    for (int id : data.corpus.vocab.encode(words)) tokens.push_back(id);
    emdr::ad::Tensor q = emdr::encode_question(model.phi_q, model.rcfg, tokens);
    for (const auto& [id, score] : snap->top_k(q.values(), orr.tc.k)) {
      json row;
      row["doc_id"] = id;
      row["score"] = score;
      row["index_version"] = snap->version;
      row["title"] = data.corpus.vocab.decode_string(data.corpus.docs[id].title);
      std::cout << row.dump() << '\n';
    }
    return 0;
  }

  // grad-check: tiny world, one example, analytic vs central difference
  write_resolved_config(gc, og.out_dir);
  emdr::WorldSpec spec;
  spec.entities = 12;
  spec.relations = 4;
  spec.documents = 12;
  spec.distractor_fraction = 0.0;
  spec.facts_per_doc = 1;
  emdr::GeneratedData data = emdr::generate_corpus(spec, og.tc.seed + 11);
  emdr::Model model =
      emdr::make_model("micro", data.corpus.vocab.size(), og.tc.seed, 4);
  auto snap = emdr::build_index(data.corpus, model.phi_d, model.rcfg, 2, 0);
  const emdr::QAExample& ex = data.train.front();
  std::vector<int> q_tokens{emdr::Vocabulary::kCls};
  q_tokens.insert(q_tokens.end(), ex.question.begin(), ex.question.end());
  auto hits = snap->top_k(
      emdr::encode_question(model.phi_q, model.rcfg, q_tokens).values(),
      og.tc.k);
  std::vector<int> doc_ids;
  for (const auto& [id, s] : hits) doc_ids.push_back(id);
  // freeze the stop-gradient subtree so central differences see the same
  // function the analytic gradient differentiates
  const std::vector<double> frozen =
      emdr::example_loss(og.tc.objective, ex, doc_ids, data.corpus, model,
                         og.tc.tau)
          .second.per_doc_log_prob;
  auto loss_fn = [&]() {
    return emdr::example_loss(og.tc.objective, ex, doc_ids, data.corpus, model,
                              og.tc.tau, &frozen)
        .first;
  };
  double err = emdr::grad_check(
      loss_fn, {&model.phi_q, &model.phi_d, &model.theta});
  std::cout << "objective " << og.tc.objective
            << " max relative gradient error: " << err << '\n';
  return err < 1e-4 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
