#include "emdr/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace emdr {

using ad::Tensor;

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::vector<int> with_cls(const std::vector<int>& tokens) {
  std::vector<int> out{Vocabulary::kCls};
  out.insert(out.end(), tokens.begin(), tokens.end());
  return out;
}

std::vector<int> answer_with_eos(const std::vector<int>& answer, int max_len) {
  std::vector<int> out = answer;
  if (static_cast<int>(out.size()) >= max_len) out.resize(max_len - 1);
  out.push_back(Vocabulary::kEos);
  return out;
}

double entropy_of(const std::vector<double>& probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

EvalConfig make_eval_config(const TrainConfig& cfg) {
  EvalConfig e;
  e.k = cfg.k;
  e.tau = cfg.tau;
  e.max_answer_len = cfg.max_answer_len;
  e.p_at_k_list = cfg.p_at_k_list;
  if (std::find(e.p_at_k_list.begin(), e.p_at_k_list.end(), cfg.k) ==
      e.p_at_k_list.end())
    e.p_at_k_list.push_back(cfg.k);
  return e;
}

std::vector<std::vector<std::string>> decode_references(
    const Vocabulary& vocab, const QAExample& ex) {
  std::vector<std::vector<std::string>> refs;
  for (const auto& a : ex.answers) refs.push_back(vocab.decode(a));
  return refs;
}

int batch_containment(const Corpus& corpus, const QAExample& ex,
                      const std::vector<int>& doc_ids) {
  std::vector<std::vector<std::string>> doc_tokens;
  for (int id : doc_ids) {
    const Document& d = corpus.docs[id];
    std::vector<int> all = d.title;
    all.insert(all.end(), d.text.begin(), d.text.end());
    doc_tokens.push_back(corpus.vocab.decode(all));
  }
  return precision_at_k(doc_tokens, decode_references(corpus.vocab, ex),
                        static_cast<int>(doc_ids.size()));
}

}  // namespace

void validate_config(const TrainConfig& cfg) {
  if (cfg.k < 1) throw std::invalid_argument("config: k must be >= 1");
  if (cfg.refresh_interval < 1)
    throw std::invalid_argument("config: refresh_interval must be >= 1");
  if (cfg.checkpoint_interval < 1)
    throw std::invalid_argument("config: checkpoint_interval must be >= 1");
  if (cfg.batch_size < 1)
    throw std::invalid_argument("config: batch_size must be >= 1");
  if (cfg.steps < 1) throw std::invalid_argument("config: steps must be >= 1");
  if (cfg.tau <= 0.0) throw std::invalid_argument("config: tau must be > 0");
  if (cfg.lr <= 0.0) throw std::invalid_argument("config: lr must be > 0");
  if (cfg.max_answer_len < 2)
    throw std::invalid_argument("config: max_answer_len must be >= 2");
  if (cfg.shard_count < 1)
    throw std::invalid_argument("config: shard_count must be >= 1");
  if (cfg.objective != "emdr2" && cfg.objective != "alt1" &&
      cfg.objective != "alt2")
    throw std::invalid_argument("config: unknown objective " + cfg.objective);
  if (cfg.preset != "desk" && cfg.preset != "paper-base" &&
      cfg.preset != "micro")
    throw std::invalid_argument("config: unknown preset " + cfg.preset);
}

Model make_model(const std::string& preset, int vocab_size, uint64_t seed,
                 int max_answer_len) {
  Model m;
  TransformerConfig enc;
  enc.vocab = vocab_size;
  if (preset == "desk") {
    enc.max_pos = 64;
    enc.layers = 2;
    enc.width = 64;
    enc.heads = 1;
    enc.ffn_mult = 2;
    m.dcfg.input_len = 64;
  } else if (preset == "micro") {
    enc.max_pos = 48;
    enc.layers = 1;
    enc.width = 8;
    enc.heads = 1;
    enc.ffn_mult = 2;
    m.dcfg.input_len = 16;
  } else if (preset == "paper-base") {
    enc.max_pos = 512;
    enc.layers = 12;
    enc.width = 768;
    enc.heads = 12;
    enc.ffn_mult = 4;
    m.dcfg.input_len = 512;
  } else {
    throw std::invalid_argument("make_model: unknown preset " + preset);
  }
  m.rcfg.enc = enc;
  m.dcfg.enc = enc;
  m.dcfg.enc.max_pos = m.dcfg.input_len;
  m.dcfg.dec = enc;
  m.dcfg.dec.max_pos = max_answer_len + 2;
  m.dcfg.max_answer_len = max_answer_len;
  init_retriever(m.phi_q, m.phi_d, m.rcfg, seed);
  init_reader(m.theta, m.dcfg, seed ^ 0xa5a5a5a5a5a5a5a5ull);
  return m;
}

void save_model(const Model& model, const std::string& path) {
  save_checkpoint(path,
                  {{"", &model.phi_q}, {"", &model.phi_d}, {"", &model.theta}});
}

void load_model(Model& model, const std::string& path) {
  load_checkpoint(path,
                  {{"", &model.phi_q}, {"", &model.phi_d}, {"", &model.theta}});
}

long select_checkpoint(const std::vector<std::pair<long, double>>& history) {
  if (history.empty())
    throw std::invalid_argument("select_checkpoint: empty history");
  long best_step = history.front().first;
  double best_em = history.front().second;
  for (const auto& [step, em] : history)
    if (em > best_em) {
      best_em = em;
      best_step = step;
    }
  return best_step;
}

std::pair<Tensor, LossBreakdown> example_loss(
    const std::string& objective, const QAExample& ex,
    const std::vector<int>& doc_ids, const Corpus& corpus, Model& model,
    double tau, const std::vector<double>* frozen_per_doc) {
  if (doc_ids.empty())
    throw std::invalid_argument("example_loss: empty retrieved set");
  if (ex.answers.empty())
    throw std::invalid_argument("example_loss: example has no answer");

  // fresh scores under the current parameters; selection came from the index
  Tensor q_vec = encode_question(model.phi_q, model.rcfg, with_cls(ex.question));
  std::vector<Tensor> per_doc_scores;
  std::vector<std::vector<int>> inputs;
  for (int id : doc_ids) {
    const Document& doc = corpus.docs.at(id);
    per_doc_scores.push_back(
        score(q_vec, encode_document(model.phi_d, model.rcfg, doc)));
    inputs.push_back(
        build_reader_input(ex.question, doc, corpus, model.dcfg.input_len));
  }
  Tensor scores = ad::concat_cols(per_doc_scores);  // [1, K]
  Tensor retrieval_log_prob =
      ad::log_softmax_rows(ad::scale(scores, 1.0 / tau));

  const std::vector<int> answer =
      answer_with_eos(ex.answers[0], model.dcfg.max_answer_len);
  EncodedMemory mem = encode_documents(model.theta, model.dcfg, inputs);
  ObjectiveInputs in;
  in.joint_log_prob = answer_log_prob(model.theta, model.dcfg, answer,
                                      mem.states);
  if (frozen_per_doc) {
    if (static_cast<int>(frozen_per_doc->size()) != mem.k)
      throw std::invalid_argument("example_loss: frozen_per_doc size != K");
    for (double v : *frozen_per_doc)
      in.per_doc_log_prob.push_back(ad::constant_scalar(v));
  } else {
    for (int i = 0; i < mem.k; ++i)
      in.per_doc_log_prob.push_back(
          answer_log_prob(model.theta, model.dcfg, answer, mem.segment(i)));
  }
  in.retrieval_log_prob = retrieval_log_prob;
  return objective_loss(objective, in);
}

TrainResult train(const TrainConfig& cfg, const Corpus& corpus,
                  const std::vector<QAExample>& train_set,
                  const std::vector<QAExample>& dev_set, Model& model,
                  IndexManager& manager) {
  validate_config(cfg);
  if (train_set.empty()) throw std::invalid_argument("train: empty train set");
  if (dev_set.empty()) throw std::invalid_argument("train: empty dev set");
  if (cfg.k > corpus.size())
    throw std::invalid_argument("train: k exceeds corpus size");

  if (!manager.active())
    manager.install(build_index(corpus, model.phi_d, model.rcfg,
                                cfg.shard_count, 0),
                    std::make_shared<ParamSet>(clone_params(model.phi_q)));

  TrainResult result;
  const EvalConfig ecfg = make_eval_config(cfg);
  const bool writing = !cfg.out_dir.empty();
  std::ofstream metrics;
  if (writing) {
    std::filesystem::create_directories(cfg.out_dir);
    result.metrics_path = cfg.out_dir + "/metrics.csv";
    metrics.open(result.metrics_path);
    if (!metrics)
      throw std::runtime_error("train: cannot open " + result.metrics_path);
    metrics << "step,objective,loss_total,reader_term,retriever_term,dev_em,"
               "p_at_k,index_version,wall_ms\n";
  }
  auto write_row = [&](long step, const std::string& loss,
                       const std::string& reader, const std::string& retr,
                       const std::string& dev_em, const std::string& p_at_k,
                       long version, const std::string& wall) {
    if (!writing) return;
    metrics << step << ',' << cfg.objective << ',' << loss << ',' << reader
            << ',' << retr << ',' << dev_em << ',' << p_at_k << ',' << version
            << ',' << wall << '\n';
  };
  auto note_version = [&](long v) {
    if (std::find(result.observed_versions.begin(),
                  result.observed_versions.end(), v) ==
        result.observed_versions.end())
      result.observed_versions.push_back(v);
  };
  auto dump_snapshot = [&](const IndexSnapshot& snap) {
    if (writing)
      snap.save(cfg.out_dir + "/index_v" + std::to_string(snap.version) +
                ".eidx");
  };

  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  size_t cursor = 0;
  auto next_example = [&]() -> const QAExample& {
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    return train_set[order[cursor++]];
  };

  // (step, dev EM, dev P@K) per evaluated checkpoint
  std::vector<std::tuple<long, double, double>> checkpoints;
  int consecutive_bad = 0;
  bool entropy_seen = false;

  for (int s = 0; s < cfg.steps; ++s) {
    if (s % cfg.refresh_interval == 0) {
      auto snap = manager.refresh(corpus, model.phi_d, model.phi_q, model.rcfg,
                                  cfg.shard_count);
      dump_snapshot(*snap);
    }
    auto snapshot = manager.active();
    auto frozen_q = manager.frozen_query_params();

    if (s == 0) {
      EvalReport base = evaluate(model.phi_q, model.rcfg, model.theta,
                                 model.dcfg, *snapshot, corpus, dev_set, ecfg);
      result.em_step0 = base.em;
      result.p_at_k_step0 = base.p_at_k.at(cfg.k);
      note_version(snapshot->version);
      write_row(0, "", "", "", fmt(base.em), fmt(result.p_at_k_step0),
                snapshot->version, "");
    }

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Tensor> losses;
    double reader_sum = 0.0, retr_sum = 0.0, entropy_sum = 0.0;
    int contained = 0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const QAExample& ex = next_example();
      Tensor q_frozen =
          encode_question(*frozen_q, model.rcfg, with_cls(ex.question));
      auto hits = snapshot->top_k(q_frozen.values(), cfg.k);
      std::vector<int> doc_ids;
      for (const auto& [id, sc] : hits) doc_ids.push_back(id);

      auto [loss, bd] =
          example_loss(cfg.objective, ex, doc_ids, corpus, model, cfg.tau);
      losses.push_back(loss);
      reader_sum += bd.reader_term;
      retr_sum += bd.retriever_term;
      entropy_sum += entropy_of(bd.retrieval_prob);
      contained += batch_containment(corpus, ex, doc_ids);
    }
    Tensor loss = ad::mean(ad::concat_cols(losses));
    const double loss_value = loss.scalar();
    const double reader_mean = reader_sum / cfg.batch_size;
    const double retr_mean = retr_sum / cfg.batch_size;
    const double entropy_mean = entropy_sum / cfg.batch_size;
    const double contained_frac =
        static_cast<double>(contained) / cfg.batch_size;

    if (!std::isfinite(loss_value)) {
      ++consecutive_bad;
      const auto t1 = std::chrono::steady_clock::now();
      const double wall =
          std::chrono::duration<double, std::milli>(t1 - t0).count();
      write_row(s + 1, "nan", "", "", "", fmt(contained_frac),
                snapshot->version, fmt(wall));
      note_version(snapshot->version);
      if (consecutive_bad >= 3)
        throw std::runtime_error(
            "train: three consecutive non-finite losses, aborting");
      continue;
    }
    consecutive_bad = 0;

    ad::backward(loss);
    model.theta.adam_step(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    const double rlr = cfg.effective_retriever_lr();
    if (rlr > 0.0) {
      model.phi_q.adam_step(rlr, cfg.beta1, cfg.beta2, cfg.adam_eps);
      model.phi_d.adam_step(rlr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    } else {
      model.phi_q.zero_grad();
      model.phi_d.zero_grad();
    }

    if (!entropy_seen) {
      result.entropy_step0 = entropy_mean;
      entropy_seen = true;
    }
    result.entropy_final = entropy_mean;

    std::string dev_field;
    if ((s + 1) % cfg.checkpoint_interval == 0 || s + 1 == cfg.steps) {
      if (writing)
        save_model(model,
                   cfg.out_dir + "/ckpt_" + std::to_string(s + 1) + ".emdr");
      EvalReport dev =
          evaluate(model.phi_q, model.rcfg, model.theta, model.dcfg,
                   *manager.active(), corpus, dev_set, ecfg);
      checkpoints.emplace_back(s + 1, dev.em, dev.p_at_k.at(cfg.k));
      result.dev_history.emplace_back(s + 1, dev.em);
      dev_field = fmt(dev.em);
    }

    const auto t1 = std::chrono::steady_clock::now();
    const double wall =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    note_version(snapshot->version);
    write_row(s + 1, fmt(loss_value), fmt(reader_mean), fmt(retr_mean),
              dev_field, fmt(contained_frac), snapshot->version, fmt(wall));
  }

  result.best_step = select_checkpoint(result.dev_history);
  for (const auto& [step, em, pk] : checkpoints)
    if (step == result.best_step) {
      result.best_em = em;
      result.p_at_k_final = pk;
    }
  if (writing)
    result.best_checkpoint =
        cfg.out_dir + "/ckpt_" + std::to_string(result.best_step) + ".emdr";
  return result;
}

void pretrain_ict(const TrainConfig& cfg, const Corpus& corpus, Model& model) {
  if (cfg.batch_size < 2)
    throw std::invalid_argument(
        "pretrain_ict: batch_size must be >= 2 (in-batch negatives)");
  if (cfg.steps < 0) throw std::invalid_argument("pretrain_ict: steps >= 0");
  if (cfg.steps == 0) return;

  const int need = cfg.steps * cfg.batch_size;
  auto examples =
      make_ict_examples(corpus, need, cfg.seed ^ 0x1c7c7c7c7c7c7c71ull);
  std::vector<int> diag(cfg.batch_size);
  std::iota(diag.begin(), diag.end(), 0);
  for (int s = 0; s < cfg.steps; ++s) {
    std::vector<Tensor> q_rows, p_rows;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const IctExample& ex = examples[(s * cfg.batch_size + b) % examples.size()];
      q_rows.push_back(
          encode_question(model.phi_q, model.rcfg, with_cls(ex.query)));
      p_rows.push_back(encode_document(model.phi_d, model.rcfg, ex.positive));
    }
    Tensor scores = ad::matmul_bt(ad::concat_rows(q_rows),
                                  ad::concat_rows(p_rows));  // [B, B]
    Tensor logp = ad::log_softmax_rows(ad::scale(scores, 1.0 / cfg.tau));
    Tensor loss = ad::scale(ad::mean(ad::pick_rowwise(logp, diag)), -1.0);
    ad::backward(loss);
    const double rlr = cfg.effective_retriever_lr();
    model.phi_q.adam_step(rlr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    model.phi_d.adam_step(rlr, cfg.beta1, cfg.beta2, cfg.adam_eps);
  }
}

TrainResult pretrain_mss(const TrainConfig& cfg, const Corpus& corpus,
                         Model& model, IndexManager& manager, int n_examples) {
  if (n_examples < 2)
    throw std::invalid_argument("pretrain_mss: need at least 2 examples");
  auto examples =
      make_mss_examples(corpus, n_examples, cfg.seed ^ 0x35353535353535ull);
  const int n_dev = std::max<int>(1, n_examples / 10);
  std::vector<QAExample> dev(examples.end() - n_dev, examples.end());
  std::vector<QAExample> train_set(examples.begin(), examples.end() - n_dev);
  TrainConfig mss_cfg = cfg;
  mss_cfg.objective = "emdr2";
  return train(mss_cfg, corpus, train_set, dev, model, manager);
}

}  // namespace emdr
