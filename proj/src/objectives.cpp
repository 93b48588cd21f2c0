#include "emdr/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace emdr {

using ad::Tensor;

namespace {

Tensor stack_scalars(const std::vector<Tensor>& xs) {
  return ad::concat_cols(xs);  // K scalars -> [1, K]
}

void validate(const ObjectiveInputs& in) {
  if (in.per_doc_log_prob.empty())
    throw std::invalid_argument("objective: empty retrieved set");
  if (in.retrieval_log_prob.size() != in.per_doc_log_prob.size())
    throw std::invalid_argument("objective: K mismatch");
}

LossBreakdown breakdown_of(const char* tag, const ObjectiveInputs& in,
                           double reader, double retriever) {
  LossBreakdown b;
  b.objective = tag;
  b.reader_term = reader;
  b.retriever_term = retriever;
  b.total = -(reader + retriever);
  for (const auto& t : in.per_doc_log_prob)
    b.per_doc_log_prob.push_back(t.scalar());
  for (double lp : in.retrieval_log_prob.values())
    b.retrieval_prob.push_back(std::exp(lp));
  return b;
}

}  // namespace

std::pair<Tensor, LossBreakdown> emdr2_loss(const ObjectiveInputs& in) {
  validate(in);
  Tensor per_doc = ad::stop_gradient(stack_scalars(in.per_doc_log_prob));
  // log sum_k exp(SG(log p(a|q,z_k)) + log p(z_k|q,Z))
  Tensor retriever = ad::logsumexp(ad::add(per_doc, in.retrieval_log_prob));
  Tensor loss = ad::scale(ad::add(in.joint_log_prob, retriever), -1.0);
  return {loss, breakdown_of("emdr2", in, in.joint_log_prob.scalar(),
                             retriever.scalar())};
}

std::pair<Tensor, LossBreakdown> alt1_loss(const ObjectiveInputs& in) {
  validate(in);
  Tensor retriever = ad::sum(in.retrieval_log_prob);
  Tensor loss = ad::scale(ad::add(in.joint_log_prob, retriever), -1.0);
  return {loss, breakdown_of("alt1", in, in.joint_log_prob.scalar(),
                             retriever.scalar())};
}

std::pair<Tensor, LossBreakdown> alt2_loss(const ObjectiveInputs& in) {
  validate(in);
  Tensor per_doc = stack_scalars(in.per_doc_log_prob);
  bool any_finite = false;
  for (double v : per_doc.values())
    if (std::isfinite(v)) any_finite = true;
  if (!any_finite)
    throw std::invalid_argument(
        "alt2_loss: all per-document likelihoods are zero, normalization "
        "undefined");
  // p-tilde: per-doc likelihoods normalized over K, frozen
  Tensor p_tilde = ad::stop_gradient(ad::softmax_rows(per_doc));
  Tensor log_p_tilde = ad::stop_gradient(ad::log_softmax_rows(per_doc));
  Tensor kl =
      ad::sum(ad::mul(p_tilde, ad::sub(log_p_tilde, in.retrieval_log_prob)));
  Tensor retriever = ad::scale(kl, -1.0);
  Tensor loss = ad::scale(ad::add(in.joint_log_prob, retriever), -1.0);
  return {loss, breakdown_of("alt2", in, in.joint_log_prob.scalar(),
                             retriever.scalar())};
}

std::pair<Tensor, LossBreakdown> objective_loss(const std::string& tag,
                                                const ObjectiveInputs& in) {
  if (tag == "emdr2") return emdr2_loss(in);
  if (tag == "alt1") return alt1_loss(in);
  if (tag == "alt2") return alt2_loss(in);
  throw std::invalid_argument("objective_loss: unknown objective " + tag);
}

}  // namespace emdr
