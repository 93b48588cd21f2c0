#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emdr/corpus.hpp"
#include "emdr/evalqa.hpp"
#include "emdr/index.hpp"
#include "emdr/objectives.hpp"
#include "emdr/reader.hpp"
#include "emdr/retriever.hpp"

namespace emdr {

struct TrainConfig {
  std::string objective = "emdr2";
  int k = 50;                    // retrieved documents per question
  double tau = 1.0;
  int batch_size = 8;
  int steps = 1000;
  int refresh_interval = 500;
  int checkpoint_interval = 500;
  double lr = 1e-3;
  double retriever_lr = -1.0;    // < 0: use lr; 0: frozen retriever
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  uint64_t seed = 0;
  int max_answer_len = 8;
  std::string preset = "desk";
  int shard_count = 4;
  std::vector<int> p_at_k_list = {1, 5};
  std::string out_dir;           // metrics.csv and checkpoints; "" = no files

  double effective_retriever_lr() const {
    return retriever_lr < 0.0 ? lr : retriever_lr;
  }
};

void validate_config(const TrainConfig& cfg);

struct Model {
  ParamSet phi_q, phi_d;  // retriever (disjoint encoders)
  ParamSet theta;         // reader
  RetrieverConfig rcfg;
  ReaderConfig dcfg;
};

// preset: "desk" (2 layers, width 64), "paper-base" (12 layers, width 768),
// or "micro" (1 layer, width 8; gradient checks and tests).
Model make_model(const std::string& preset, int vocab_size, uint64_t seed,
                 int max_answer_len = 8);

void save_model(const Model& model, const std::string& path);
void load_model(Model& model, const std::string& path);

struct TrainResult {
  long best_step = 0;
  double best_em = 0.0;
  std::string best_checkpoint;
  std::vector<std::pair<long, double>> dev_history;  // (step, dev EM)
  double em_step0 = 0.0;
  double p_at_k_step0 = 0.0;      // dev P@K before any update
  double p_at_k_final = 0.0;      // dev P@K at the best checkpoint
  double entropy_step0 = 0.0;     // mean retrieval-distribution entropy
  double entropy_final = 0.0;
  std::vector<long> observed_versions;
  std::string metrics_path;
};

// End-to-end loop: retrieve top-K from the active snapshot, compute the
// configured objective, update, refresh the index on schedule, checkpoint
// and evaluate dev EM, return the best checkpoint (ties to earliest step).
TrainResult train(const TrainConfig& cfg, const Corpus& corpus,
                  const std::vector<QAExample>& train_set,
                  const std::vector<QAExample>& dev_set, Model& model,
                  IndexManager& manager);

// In-batch-negative contrastive pretraining of the retriever.
void pretrain_ict(const TrainConfig& cfg, const Corpus& corpus, Model& model);

// The full emdr2 loop with masked-salient-span examples as (q, a) pairs.
TrainResult pretrain_mss(const TrainConfig& cfg, const Corpus& corpus,
                         Model& model, IndexManager& manager, int n_examples);

// argmax dev EM, ties resolved to the earliest step.
long select_checkpoint(const std::vector<std::pair<long, double>>& history);

// Loss of one (question, answer, retrieved set) instance under `objective`,
// with retrieval probabilities recomputed differentiably from fresh scores.
// `frozen_per_doc` replaces the per-document log likelihoods with fixed
// constants; those enter every objective only behind stop-gradient, so this
// is what a finite-difference oracle must compare against.
std::pair<ad::Tensor, LossBreakdown> example_loss(
    const std::string& objective, const QAExample& ex,
    const std::vector<int>& doc_ids, const Corpus& corpus, Model& model,
    double tau, const std::vector<double>* frozen_per_doc = nullptr);

}  // namespace emdr
