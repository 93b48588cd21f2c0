#pragma once

#include <string>
#include <vector>

#include "emdr/autodiff.hpp"

namespace emdr {

struct LossBreakdown {
  double reader_term = 0.0;
  double retriever_term = 0.0;
  double total = 0.0;  // -(reader_term + retriever_term)
  std::vector<double> per_doc_log_prob;  // K values, each <= 0 for real inputs
  std::vector<double> retrieval_prob;    // sums to 1
  std::string objective;
};

// Inputs shared by the three objectives. All tensors are graph nodes:
//   joint_log_prob     log p(a | q, Z; theta), scalar
//   per_doc_log_prob   K scalars, log p(a | q, z_k; theta)
//   retrieval_log_prob [1, K] log p(z_k | q, Z; phi), recomputed from fresh
//                      scores under the current phi (differentiable)
struct ObjectiveInputs {
  ad::Tensor joint_log_prob;
  std::vector<ad::Tensor> per_doc_log_prob;
  ad::Tensor retrieval_log_prob;
};

// log p(a|q,Z) + log sum_k SG(p(a|q,z_k)) p(z_k|q,Z), maximized; the loss is
// its negation. The inner sum is evaluated in log space.
std::pair<ad::Tensor, LossBreakdown> emdr2_loss(const ObjectiveInputs& in);

// Per-document factorized prior objective.
std::pair<ad::Tensor, LossBreakdown> alt1_loss(const ObjectiveInputs& in);

// Reader likelihood plus KL(SG(p-tilde) || p), p-tilde the per-document
// likelihoods normalized over the K retrieved documents.
std::pair<ad::Tensor, LossBreakdown> alt2_loss(const ObjectiveInputs& in);

std::pair<ad::Tensor, LossBreakdown> objective_loss(const std::string& tag,
                                                    const ObjectiveInputs& in);

}  // namespace emdr
