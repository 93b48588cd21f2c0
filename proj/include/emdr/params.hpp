#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "emdr/autodiff.hpp"

namespace emdr {

struct Parameter {
  std::string name;
  ad::Tensor value;       // trainable leaf
  std::vector<double> m;  // Adam first moment
  std::vector<double> v;  // Adam second moment
};

// Named set of trainable parameters with Adam state and a shared step count.
class ParamSet {
 public:
  ad::Tensor add(const std::string& name, std::vector<int> shape,
                 std::vector<double> init);
  ad::Tensor get(const std::string& name) const;  // throws if missing
  bool has(const std::string& name) const;
  Parameter& param(const std::string& name);

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  long long step() const { return step_; }
  void set_step(long long s) { step_ = s; }
  size_t scalar_count() const;

  void zero_grad();
  // Standard bias-corrected Adam, then gradients reset. Returns false and
  // leaves values untouched if any gradient in the set is non-finite.
  bool adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8);

  uint64_t fingerprint() const;  // FNV-1a over parameter values

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, size_t> by_name_;
  long long step_ = 0;
};

// initialization helpers
std::vector<double> normal_init(size_t n, double stddev, std::mt19937_64& rng);
std::vector<double> xavier_init(int rows, int cols, std::mt19937_64& rng);

// Checkpoint file: magic "EMDR", version, length-prefixed entries of
// (name, shape, little-endian f64 values, Adam moments, step counter).
void save_checkpoint(
    const std::string& path,
    const std::vector<std::pair<std::string, const ParamSet*>>& sets);
void load_checkpoint(
    const std::string& path,
    const std::vector<std::pair<std::string, ParamSet*>>& sets);

// Max over all parameter entries of the relative error between the analytic
// gradient of loss_fn and a central finite difference with stencil eps.
double grad_check(const std::function<ad::Tensor()>& loss_fn,
                  const std::vector<ParamSet*>& sets, double eps = 1e-5);

}  // namespace emdr
