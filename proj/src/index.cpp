#include "emdr/index.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "emdr/kernels.hpp"

namespace emdr {

namespace {

using Hit = std::pair<int, double>;

bool better(const Hit& a, const Hit& b) {
  if (a.second != b.second) return a.second > b.second;
  return a.first < b.first;
}

void local_top_k(const IndexSnapshot::Shard& shard,
                 const std::vector<double>& scores, int k,
                 std::vector<Hit>& out) {
  out.clear();
  for (int i = 0; i < shard.end - shard.begin; ++i)
    out.emplace_back(shard.begin + i, scores[i]);
  const int keep = std::min<int>(k, static_cast<int>(out.size()));
  std::partial_sort(out.begin(), out.begin() + keep, out.end(), better);
  out.resize(keep);
}

}  // namespace

int IndexSnapshot::doc_count() const {
  return shards.empty() ? 0 : shards.back().end;
}

const double* IndexSnapshot::row(int doc_id) const {
  for (const auto& s : shards)
    if (doc_id >= s.begin && doc_id < s.end)
      return &s.rows[static_cast<size_t>(doc_id - s.begin) * width];
  throw std::invalid_argument("IndexSnapshot: doc id out of range " +
                              std::to_string(doc_id));
}

std::vector<Hit> IndexSnapshot::top_k(const std::vector<double>& q,
                                      int k) const {
  const int m = doc_count();
  if (k < 1 || k > m)
    throw std::invalid_argument("top_k: k must be in [1, M]");
  if (static_cast<int>(q.size()) != width)
    throw std::invalid_argument("top_k: query width mismatch");

  const int n_shards = static_cast<int>(shards.size());
  std::vector<std::vector<Hit>> local(n_shards);
#pragma omp parallel for schedule(dynamic) num_threads(kernels::max_threads())
  for (int s = 0; s < n_shards; ++s) {
    const auto& shard = shards[s];
    std::vector<double> scores(shard.end - shard.begin);
    kernels::dot_scores_serial(shard.rows.data(), q.data(), scores.data(),
                               shard.end - shard.begin, width);
    local_top_k(shard, scores, k, local[s]);
  }
  std::vector<Hit> merged;
  for (const auto& l : local) merged.insert(merged.end(), l.begin(), l.end());
  std::sort(merged.begin(), merged.end(), better);
  merged.resize(std::min<size_t>(merged.size(), k));
  return merged;
}

std::vector<Hit> IndexSnapshot::top_k_exhaustive(const std::vector<double>& q,
                                                 int k) const {
  const int m = doc_count();
  if (k < 1 || k > m)
    throw std::invalid_argument("top_k_exhaustive: k must be in [1, M]");
  std::vector<Hit> all;
  all.reserve(m);
  for (const auto& shard : shards) {
    std::vector<double> scores(shard.end - shard.begin);
    kernels::dot_scores_serial(shard.rows.data(), q.data(), scores.data(),
                               shard.end - shard.begin, width);
    for (int i = 0; i < shard.end - shard.begin; ++i)
      all.emplace_back(shard.begin + i, scores[i]);
  }
  std::sort(all.begin(), all.end(), better);
  all.resize(k);
  return all;
}

std::shared_ptr<const IndexSnapshot> build_index(const Corpus& corpus,
                                                 const ParamSet& phi_d,
                                                 const RetrieverConfig& cfg,
                                                 int shard_count,
                                                 long version) {
  const int m = corpus.size();
  if (m == 0) throw std::invalid_argument("build_index: empty corpus");
  if (shard_count < 1 || shard_count > m)
    throw std::invalid_argument("build_index: shard_count must be in [1, M]");

  auto snap = std::make_shared<IndexSnapshot>();
  snap->version = version;
  snap->width = cfg.enc.width;
  snap->builder_fingerprint = phi_d.fingerprint();

  // balanced contiguous partition: first (m % shard_count) shards get +1
  int begin = 0;
  for (int s = 0; s < shard_count; ++s) {
    const int size = m / shard_count + (s < m % shard_count ? 1 : 0);
    IndexSnapshot::Shard shard;
    shard.begin = begin;
    shard.end = begin + size;
    shard.rows.resize(static_cast<size_t>(size) * cfg.enc.width);
    begin += size;
    snap->shards.push_back(std::move(shard));
  }

#pragma omp parallel for schedule(dynamic, 16) num_threads(kernels::max_threads())
  for (int i = 0; i < m; ++i) {
    ad::Tensor vec = encode_document(phi_d, cfg, corpus.docs[i]);
    for (auto& shard : snap->shards)
      if (i >= shard.begin && i < shard.end)
        std::memcpy(&shard.rows[static_cast<size_t>(i - shard.begin) *
                                cfg.enc.width],
                    vec.values().data(), cfg.enc.width * sizeof(double));
  }
  return snap;
}

void IndexManager::install(std::shared_ptr<const IndexSnapshot> snap,
                           std::shared_ptr<const ParamSet> frozen_phi_q) {
  std::lock_guard<std::mutex> lock(mu_);
  active_ = std::move(snap);
  frozen_phi_q_ = std::move(frozen_phi_q);
}

std::shared_ptr<const IndexSnapshot> IndexManager::active() const {
  std::lock_guard<std::mutex> lock(mu_);
  return active_;
}

std::shared_ptr<const ParamSet> IndexManager::frozen_query_params() const {
  std::lock_guard<std::mutex> lock(mu_);
  return frozen_phi_q_;
}

std::shared_ptr<const IndexSnapshot> IndexManager::refresh(
    const Corpus& corpus, const ParamSet& phi_d, const ParamSet& phi_q,
    const RetrieverConfig& cfg, int shard_count) {
  const long next_version = active() ? active()->version + 1 : 0;
  auto frozen_q = std::make_shared<ParamSet>(clone_params(phi_q));
  auto snap = build_index(corpus, phi_d, cfg, shard_count, next_version);
  if (hook_) hook_();
  install(snap, frozen_q);
  return snap;
}

ParamSet clone_params(const ParamSet& src) {
  ParamSet dst;
  for (const auto& p : src.params()) {
    dst.add(p.name, p.value.node().shape, p.value.values());
    Parameter& q = dst.param(p.name);
    q.m = p.m;
    q.v = p.v;
  }
  dst.set_step(src.step());
  return dst;
}

// --- on-disk snapshot dump --------------------------------------------------

namespace {

constexpr char kEidxMagic[4] = {'E', 'I', 'D', 'X'};

template <typename T>
void write_pod(std::ostream& os, T x) {
  os.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T x{};
  is.read(reinterpret_cast<char*>(&x), sizeof(T));
  if (!is) throw std::runtime_error("index dump: truncated file");
  return x;
}

}  // namespace

void IndexSnapshot::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("index dump: cannot open " + path);
  os.write(kEidxMagic, 4);
  write_pod<int64_t>(os, version);
  write_pod<int64_t>(os, doc_count());
  write_pod<int32_t>(os, width);
  write_pod<int32_t>(os, static_cast<int32_t>(shards.size()));
  write_pod<uint64_t>(os, builder_fingerprint);
  for (const auto& s : shards) {
    write_pod<int64_t>(os, s.begin);
    write_pod<int64_t>(os, s.end);
    os.write(reinterpret_cast<const char*>(s.rows.data()),
             static_cast<std::streamsize>(s.rows.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("index dump: write failed for " + path);
}

std::shared_ptr<IndexSnapshot> IndexSnapshot::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("index dump: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kEidxMagic, 4) != 0)
    throw std::runtime_error("index dump: bad magic in " + path);
  auto snap = std::make_shared<IndexSnapshot>();
  snap->version = static_cast<long>(read_pod<int64_t>(is));
  const auto m = read_pod<int64_t>(is);
  snap->width = read_pod<int32_t>(is);
  const auto n_shards = read_pod<int32_t>(is);
  snap->builder_fingerprint = read_pod<uint64_t>(is);
  for (int32_t s = 0; s < n_shards; ++s) {
    IndexSnapshot::Shard shard;
    shard.begin = static_cast<int>(read_pod<int64_t>(is));
    shard.end = static_cast<int>(read_pod<int64_t>(is));
    shard.rows.resize(static_cast<size_t>(shard.end - shard.begin) *
                      snap->width);
    is.read(reinterpret_cast<char*>(shard.rows.data()),
            static_cast<std::streamsize>(shard.rows.size() * sizeof(double)));
    if (!is) throw std::runtime_error("index dump: truncated rows");
    snap->shards.push_back(std::move(shard));
  }
  if (snap->doc_count() != m)
    throw std::runtime_error("index dump: shard ranges do not cover M");
  return snap;
}

}  // namespace emdr
