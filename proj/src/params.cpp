#include "emdr/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace emdr {

ad::Tensor ParamSet::add(const std::string& name, std::vector<int> shape,
                         std::vector<double> init) {
  if (by_name_.count(name))
    throw std::invalid_argument("ParamSet: duplicate parameter " + name);
  Parameter p;
  p.name = name;
  p.value = ad::leaf(std::move(shape), std::move(init));
  p.m.assign(p.value.size(), 0.0);
  p.v.assign(p.value.size(), 0.0);
  by_name_[name] = params_.size();
  params_.push_back(std::move(p));
  return params_.back().value;
}

ad::Tensor ParamSet::get(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end())
    throw std::invalid_argument("ParamSet: unknown parameter " + name);
  return params_[it->second].value;
}

bool ParamSet::has(const std::string& name) const {
  return by_name_.count(name) > 0;
}

Parameter& ParamSet::param(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end())
    throw std::invalid_argument("ParamSet: unknown parameter " + name);
  return params_[it->second];
}

size_t ParamSet::scalar_count() const {
  size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) {
    auto& g = p.value.node().g;
    g.assign(p.value.size(), 0.0);
  }
}

bool ParamSet::adam_step(double lr, double beta1, double beta2, double eps) {
  for (const auto& p : params_)
    for (double g : p.value.grad())
      if (!std::isfinite(g)) {
        zero_grad();
        return false;
      }
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  for (auto& p : params_) {
    auto& vals = p.value.mutable_values();
    const auto& g = p.value.node().g;
    if (g.empty()) continue;  // never touched by backward: zero gradient
    for (size_t i = 0; i < vals.size(); ++i) {
      p.m[i] = beta1 * p.m[i] + (1.0 - beta1) * g[i];
      p.v[i] = beta2 * p.v[i] + (1.0 - beta2) * g[i] * g[i];
      const double mhat = p.m[i] / bc1;
      const double vhat = p.v[i] / bc2;
      vals[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
  zero_grad();
  return true;
}

uint64_t ParamSet::fingerprint() const {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : params_) {
    mix(p.name.data(), p.name.size());
    mix(p.value.values().data(), p.value.size() * sizeof(double));
  }
  return h;
}

std::vector<double> normal_init(size_t n, double stddev,
                                std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> out(n);
  for (auto& x : out) x = dist(rng);
  return out;
}

std::vector<double> xavier_init(int rows, int cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> out(static_cast<size_t>(rows) * cols);
  for (auto& x : out) x = dist(rng);
  return out;
}

namespace {

constexpr char kMagic[4] = {'E', 'M', 'D', 'R'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T x) {
  os.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T x{};
  is.read(reinterpret_cast<char*>(&x), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return x;
}

void write_doubles(std::ostream& os, const std::vector<double>& xs) {
  write_pod<uint64_t>(os, xs.size());
  os.write(reinterpret_cast<const char*>(xs.data()),
           static_cast<std::streamsize>(xs.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::istream& is) {
  const auto n = read_pod<uint64_t>(is);
  std::vector<double> xs(n);
  is.read(reinterpret_cast<char*>(xs.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("checkpoint: truncated value array");
  return xs;
}

}  // namespace

void save_checkpoint(
    const std::string& path,
    const std::vector<std::pair<std::string, const ParamSet*>>& sets) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path);
  os.write(kMagic, 4);
  write_pod<uint32_t>(os, kVersion);
  uint64_t count = 0;
  for (const auto& [prefix, set] : sets) count += set->params().size();
  write_pod<uint64_t>(os, count);
  for (const auto& [prefix, set] : sets) {
    for (const auto& p : set->params()) {
      const std::string name = prefix + p.name;
      write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      const auto& shape = p.value.node().shape;
      write_pod<uint32_t>(os, static_cast<uint32_t>(shape.size()));
      for (int d : shape) write_pod<uint64_t>(os, static_cast<uint64_t>(d));
      write_doubles(os, p.value.values());
      write_doubles(os, p.m);
      write_doubles(os, p.v);
      write_pod<uint64_t>(os, static_cast<uint64_t>(set->step()));
    }
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

void load_checkpoint(
    const std::string& path,
    const std::vector<std::pair<std::string, ParamSet*>>& sets) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto version = read_pod<uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  const auto count = read_pod<uint64_t>(is);
  for (uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto ndim = read_pod<uint32_t>(is);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(read_pod<uint64_t>(is));
    auto values = read_doubles(is);
    auto m = read_doubles(is);
    auto v = read_doubles(is);
    const auto step = read_pod<uint64_t>(is);

    bool placed = false;
    for (const auto& [prefix, set] : sets) {
      if (name.rfind(prefix, 0) != 0) continue;
      const std::string local = name.substr(prefix.size());
      if (!set->has(local)) continue;
      Parameter& p = set->param(local);
      if (p.value.node().shape != shape)
        throw std::runtime_error("checkpoint: shape mismatch for " + name);
      p.value.mutable_values() = std::move(values);
      p.m = std::move(m);
      p.v = std::move(v);
      set->set_step(static_cast<long long>(step));
      placed = true;
      break;
    }
    if (!placed)
      throw std::runtime_error("checkpoint: unexpected parameter " + name);
  }
}

double grad_check(const std::function<ad::Tensor()>& loss_fn,
                  const std::vector<ParamSet*>& sets, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be > 0");
  for (auto* s : sets) s->zero_grad();
  ad::Tensor loss = loss_fn();
  ad::backward(loss);

  // snapshot analytic gradients before perturbing
  std::vector<std::vector<double>> analytic;
  for (auto* s : sets)
    for (auto& p : s->params()) {
      auto g = p.value.node().g;
      if (g.empty()) g.assign(p.value.size(), 0.0);
      analytic.push_back(std::move(g));
    }

  double max_rel = 0.0;
  size_t pi = 0;
  for (auto* s : sets) {
    for (auto& p : s->params()) {
      auto& vals = p.value.mutable_values();
      for (size_t i = 0; i < vals.size(); ++i) {
        const double orig = vals[i];
        vals[i] = orig + eps;
        const double lp = loss_fn().scalar();
        vals[i] = orig - eps;
        const double lm = loss_fn().scalar();
        vals[i] = orig;
        if (!std::isfinite(lp) || !std::isfinite(lm))
          throw std::runtime_error(
              "grad_check: non-finite loss at perturbed point of " + p.name);
        const double numeric = (lp - lm) / (2.0 * eps);
        const double a = analytic[pi][i];
        const double denom =
            std::max({std::fabs(a), std::fabs(numeric), 1e-12});
        const double diff = std::fabs(a - numeric);
        // Central differences carry cancellation noise of order
        // |loss| * 2^-52 / eps (~1e-10 here); below that, both sides are zero.
        max_rel = std::max(max_rel, diff < 1e-9 ? 0.0 : diff / denom);
      }
      ++pi;
    }
  }
  for (auto* s : sets) s->zero_grad();
  return max_rel;
}

}  // namespace emdr
