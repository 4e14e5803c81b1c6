#pragma once

#include <map>
#include <string>
#include <vector>

#include "bonekin/rng.hpp"
#include "bonekin/tensor.hpp"

namespace bonekin {

struct ParamEntry {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  bool trainable = true;  // false for batch-norm running stats
};

// Named trainable arrays with paired gradient and Adam moment buffers.
class ParameterStore {
 public:
  ParamEntry& add(const std::string& name, std::vector<int> shape,
                  bool trainable = true);
  // Zero-mean uniform init with variance 2/fan_in.
  ParamEntry& add_uniform(const std::string& name, std::vector<int> shape,
                          int fan_in, Rng& rng);

  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  ParamEntry& at(const std::string& name);
  const ParamEntry& at(const std::string& name) const;

  void zero_grads();
  // Bias-corrected Adam on every trainable entry; zeroes gradients and
  // increments step_count. Throws NonFiniteGradientError (before mutating
  // anything) if any gradient is NaN/Inf.
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8);

  int64_t step_count() const { return step_count_; }
  void set_step_count(int64_t n) { step_count_ = n; }

  const std::map<std::string, ParamEntry>& entries() const { return entries_; }
  std::map<std::string, ParamEntry>& entries() { return entries_; }

  void save(const std::string& path, const std::string& config_hash) const;
  // Loads into an empty or matching store; returns the stored config hash.
  std::string load(const std::string& path);

 private:
  std::map<std::string, ParamEntry> entries_;
  int64_t step_count_ = 0;
};

}  // namespace bonekin
