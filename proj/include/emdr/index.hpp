#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "emdr/corpus.hpp"
#include "emdr/retriever.hpp"

namespace emdr {

// Immutable, versioned store of all document embeddings, sharded over
// contiguous doc-id ranges. Search is exact MIPS: full dot products per
// shard, shard-local top-K, deterministic merge.
struct IndexSnapshot {
  struct Shard {
    int begin = 0, end = 0;        // doc ids [begin, end)
    std::vector<double> rows;      // (end - begin) x width
  };

  long version = 0;
  int width = 0;
  uint64_t builder_fingerprint = 0;  // hash of phi_d at build time
  std::vector<Shard> shards;

  int doc_count() const;
  const double* row(int doc_id) const;

  // Sharded exact top-K (OpenMP over shards); ties by ascending doc id.
  std::vector<std::pair<int, double>> top_k(const std::vector<double>& q,
                                            int k) const;
  // Serial single-pass reference, identical results by contract.
  std::vector<std::pair<int, double>> top_k_exhaustive(
      const std::vector<double>& q, int k) const;

  void save(const std::string& path) const;  // "EIDX" dump
  static std::shared_ptr<IndexSnapshot> load(const std::string& path);
};

std::shared_ptr<const IndexSnapshot> build_index(const Corpus& corpus,
                                                 const ParamSet& phi_d,
                                                 const RetrieverConfig& cfg,
                                                 int shard_count,
                                                 long version = 0);

// Holds the active snapshot plus a frozen copy of the question encoder taken
// at the same build, so retrieval is constant between refreshes. Swap is
// atomic; readers keep the snapshot they started on.
class IndexManager {
 public:
  void install(std::shared_ptr<const IndexSnapshot> snap,
               std::shared_ptr<const ParamSet> frozen_phi_q);
  std::shared_ptr<const IndexSnapshot> active() const;
  std::shared_ptr<const ParamSet> frozen_query_params() const;

  // Builds from the supplied (frozen) parameters, bumps the version, then
  // publishes. A build failure leaves the previous snapshot active.
  std::shared_ptr<const IndexSnapshot> refresh(const Corpus& corpus,
                                               const ParamSet& phi_d,
                                               const ParamSet& phi_q,
                                               const RetrieverConfig& cfg,
                                               int shard_count);

  // Invoked between build and swap; lets tests hold the window open.
  void set_publish_hook(std::function<void()> hook) { hook_ = std::move(hook); }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const IndexSnapshot> active_;
  std::shared_ptr<const ParamSet> frozen_phi_q_;
  std::function<void()> hook_;
};

// Deep copy of a ParamSet (fresh leaf tensors, Adam state included).
ParamSet clone_params(const ParamSet& src);

}  // namespace emdr
